//! Minimal reverse-mode automatic differentiation over dense f64 arrays.
//!
//! The engine is closed-world: it implements exactly the operator set the
//! toolkit needs (elementwise math, matmul, dilated conv1d, batchnorm
//! without affine, PReLU/sigmoid/tanh, concat/crop, real-FFT magnitude)
//! plus Adam, plateau learning-rate scheduling, a finite-difference
//! gradient checker, and a named-array checkpoint format. No broadcasting
//! beyond scalars and per-channel vectors, no higher-order derivatives.

mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod tape;


pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use gradcheck::{grad_check, grad_check_params, op_gradcheck_suite, GradCheckReport, OpCheck};
pub use optim::{Adam, PlateauScheduler};
pub use params::{Bound, ParamEntry, ParamId, ParamStore};
pub use tape::{Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("shape mismatch in {op}: {a:?} vs {b:?}")]
    ShapeMismatch {
        op: &'static str,
        a: Vec<usize>,
        b: Vec<usize>,
    },
    #[error("{op}: invalid shape {shape:?}")]
    BadShape { op: &'static str, shape: Vec<usize> },
    #[error("log of non-positive value {0}")]
    LogNonPositive(f64),
    #[error("conv1d input length {in_len} shorter than kernel span {span}")]
    ConvTooShort { in_len: usize, span: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("empty concat")]
    EmptyConcat,
    #[error("crop [{start}, {start}+{len}) out of range for axis length {axis}")]
    CropOutOfRange {
        start: usize,
        len: usize,
        axis: usize,
    },
}

/// Dense f64 array with a shape. Scalars use shape [1].
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Scalar value; panics if not a single element.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on non-scalar tensor");
        self.data[0]
    }
}
