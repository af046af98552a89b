//! The operation tape: forward ops record themselves; backward walks the
//! tape in reverse and accumulates gradients additively.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{AdError, Tensor};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Broadcast pattern for binary elementwise ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    /// Identical shapes.
    Same,
    /// Right operand is a scalar.
    Scalar,
    /// Left is [C, T], right is [C], applied per channel across time.
    Channel,
}

enum Op {
    Leaf,
    Add(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    MatMul(Var, Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        dilation: usize,
        stride: usize,
    },
    Mean(Var),
    Sum(Var),
    MeanTime(Var),
    Abs(Var),
    Log(Var),
    Sqrt(Var),
    Exp(Var),
    Sin(Var),
    Cos(Var),
    PowConst(Var, f64),
    Concat(Vec<Var>),
    Crop {
        x: Var,
        start: usize,
        len: usize,
    },
    Reshape(Var),
    PRelu {
        x: Var,
        alpha: Var,
    },
    Sigmoid(Var),
    Tanh(Var),
    BatchNormTrain {
        x: Var,
        mean: Vec<f64>,
        istd: Vec<f64>,
    },
    BatchNormInfer {
        x: Var,
        istd: Vec<f64>,
    },
    RfftMag {
        x: Var,
        spectrum: Vec<Complex64>,
    },
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Recorded computation graph. Single-threaded; independent tapes may run
/// on independent threads.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    planner: FftPlanner<f64>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Work threshold above which conv1d kernels run on the rayon pool.
/// Per-channel rows are disjoint, so parallelism never changes results.
const CONV_PAR_THRESHOLD: usize = 1 << 16;

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            planner: FftPlanner::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass with respect to `v`, if any.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf tensor; gradients are collected here when `requires_grad`.
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push(Op::Leaf, t, requires_grad)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    fn bcast_of(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast, AdError> {
        let (sa, sb) = (&self.nodes[a.0].value.shape, &self.nodes[b.0].value.shape);
        if sa == sb {
            return Ok(Bcast::Same);
        }
        if self.nodes[b.0].value.is_scalar() {
            return Ok(Bcast::Scalar);
        }
        if sa.len() == 2 && sb.len() == 1 && sb[0] == sa[0] {
            return Ok(Bcast::Channel);
        }
        Err(AdError::ShapeMismatch {
            op,
            a: sa.clone(),
            b: sb.clone(),
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let bc = self.bcast_of("add", a, b)?;
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = match bc {
            Bcast::Same => va.data.iter().zip(&vb.data).map(|(x, y)| x + y).collect(),
            Bcast::Scalar => {
                let s = vb.data[0];
                va.data.iter().map(|x| x + s).collect()
            }
            Bcast::Channel => {
                let t = va.shape[1];
                va.data
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + vb.data[i / t])
                    .collect()
            }
        };
        let value = Tensor {
            shape: va.shape.clone(),
            data,
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b, bc), value, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let bc = self.bcast_of("mul", a, b)?;
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = match bc {
            Bcast::Same => va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect(),
            Bcast::Scalar => {
                let s = vb.data[0];
                va.data.iter().map(|x| x * s).collect()
            }
            Bcast::Channel => {
                let t = va.shape[1];
                va.data
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x * vb.data[i / t])
                    .collect()
            }
        };
        let value = Tensor {
            shape: va.shape.clone(),
            data,
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a, b, bc), value, rg))
    }

    /// a * c for a constant c.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let k = self.constant_scalar(c);
        self.mul(a, k).expect("scalar broadcast always valid")
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    /// a + c for a constant c.
    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let k = self.constant_scalar(c);
        self.add(a, k).expect("scalar broadcast always valid")
    }

    /// [m, k] x [k, n] -> [m, n], or [m, k] x [k] -> [m].
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (sa, sb) = (
            self.nodes[a.0].value.shape.clone(),
            self.nodes[b.0].value.shape.clone(),
        );
        if sa.len() != 2 || (sb.len() != 2 && sb.len() != 1) || sa[1] != sb[0] {
            return Err(AdError::ShapeMismatch {
                op: "matmul",
                a: sa,
                b: sb,
            });
        }
        let (m, k) = (sa[0], sa[1]);
        let n = if sb.len() == 2 { sb[1] } else { 1 };
        let (da, db) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = da[i * k + p];
                if av == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += av * db[p * n + j];
                }
            }
        }
        let shape = if sb.len() == 2 { vec![m, n] } else { vec![m] };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), Tensor { shape, data: out }, rg))
    }

    /// Dilated 1-D convolution without padding.
    ///
    /// x: [Cin, T], w: [Cout, Cin, K], b: [Cout].
    /// Output [Cout, Tout] with Tout = (T - dilation*(K-1) - 1)/stride + 1.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        dilation: usize,
        stride: usize,
    ) -> Result<Var, AdError> {
        assert!(dilation >= 1 && stride >= 1, "conv1d dilation/stride >= 1");
        let sx = self.nodes[x.0].value.shape.clone();
        let sw = self.nodes[w.0].value.shape.clone();
        if sx.len() != 2 || sw.len() != 3 || sw[1] != sx[0] {
            return Err(AdError::ShapeMismatch {
                op: "conv1d",
                a: sx,
                b: sw,
            });
        }
        let (c_in, t_in) = (sx[0], sx[1]);
        let (c_out, k) = (sw[0], sw[2]);
        let span = dilation * (k - 1) + 1;
        if t_in < span {
            return Err(AdError::ConvTooShort {
                in_len: t_in,
                span,
            });
        }
        if let Some(bv) = b {
            let sb = &self.nodes[bv.0].value.shape;
            if sb.as_slice() != [c_out] {
                return Err(AdError::ShapeMismatch {
                    op: "conv1d bias",
                    a: vec![c_out],
                    b: sb.clone(),
                });
            }
        }
        let t_out = (t_in - span) / stride + 1;

        let dx = &self.nodes[x.0].value.data;
        let dw = &self.nodes[w.0].value.data;
        let bias: Option<Vec<f64>> = b.map(|bv| self.nodes[bv.0].value.data.clone());

        let row = |co: usize| -> Vec<f64> {
            let mut out = vec![bias.as_ref().map_or(0.0, |bb| bb[co]); t_out];
            for ci in 0..c_in {
                let xrow = &dx[ci * t_in..(ci + 1) * t_in];
                let wrow = &dw[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                for (kk, &wv) in wrow.iter().enumerate() {
                    if wv == 0.0 {
                        continue;
                    }
                    let off = kk * dilation;
                    if stride == 1 {
                        for (t, o) in out.iter_mut().enumerate() {
                            *o += wv * xrow[t + off];
                        }
                    } else {
                        for (t, o) in out.iter_mut().enumerate() {
                            *o += wv * xrow[t * stride + off];
                        }
                    }
                }
            }
            out
        };

        let work = c_out * c_in * k * t_out;
        let rows: Vec<Vec<f64>> = if work > CONV_PAR_THRESHOLD {
            (0..c_out).into_par_iter().map(row).collect()
        } else {
            (0..c_out).map(row).collect()
        };
        let mut data = Vec::with_capacity(c_out * t_out);
        for r in rows {
            data.extend(r);
        }

        let rg = self.rg(x) || self.rg(w) || b.map(|bv| self.rg(bv)).unwrap_or(false);
        Ok(self.push(
            Op::Conv1d {
                x,
                w,
                b,
                dilation,
                stride,
            },
            Tensor {
                shape: vec![c_out, t_out],
                data,
            },
            rg,
        ))
    }

    /// Mean of all elements, scalar result.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let m = v.data.iter().sum::<f64>() / v.numel() as f64;
        let rg = self.rg(a);
        self.push(Op::Mean(a), Tensor::scalar(m), rg)
    }

    /// Sum of all elements, scalar result.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let s = v.data.iter().sum::<f64>();
        let rg = self.rg(a);
        self.push(Op::Sum(a), Tensor::scalar(s), rg)
    }

    /// Mean over the time axis: [C, T] -> [C].
    pub fn mean_time(&mut self, a: Var) -> Result<Var, AdError> {
        let v = &self.nodes[a.0].value;
        if v.shape.len() != 2 {
            return Err(AdError::BadShape {
                op: "mean_time",
                shape: v.shape.clone(),
            });
        }
        let (c, t) = (v.shape[0], v.shape[1]);
        let data = (0..c)
            .map(|ci| v.data[ci * t..(ci + 1) * t].iter().sum::<f64>() / t as f64)
            .collect();
        let rg = self.rg(a);
        Ok(self.push(Op::MeanTime(a), Tensor::vector(data), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: impl Fn(Var) -> Op) -> Var {
        let v = &self.nodes[a.0].value;
        let value = Tensor {
            shape: v.shape.clone(),
            data: v.data.iter().map(|&x| f(x)).collect(),
        };
        let rg = self.rg(a);
        self.push(op(a), value, rg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs)
    }

    /// Natural log. Errors if any element is not strictly positive; callers
    /// add an epsilon guard first.
    pub fn log(&mut self, a: Var) -> Result<Var, AdError> {
        if let Some(&bad) = self.nodes[a.0].value.data.iter().find(|v| **v <= 0.0) {
            return Err(AdError::LogNonPositive(bad));
        }
        Ok(self.unary(a, f64::ln, Op::Log))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, f64::sin, Op::Sin)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, f64::cos, Op::Cos)
    }

    /// Elementwise x^p for constant p.
    pub fn power(&mut self, a: Var, p: f64) -> Var {
        self.unary(a, |x| x.powf(p), |v| Op::PowConst(v, p))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh)
    }

    /// Concatenate 1-D tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AdError> {
        if parts.is_empty() {
            return Err(AdError::EmptyConcat);
        }
        let mut data = Vec::new();
        let mut rg = false;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            if v.shape.len() != 1 {
                return Err(AdError::BadShape {
                    op: "concat",
                    shape: v.shape.clone(),
                });
            }
            data.extend_from_slice(&v.data);
            rg |= self.rg(p);
        }
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::vector(data), rg))
    }

    /// Slice [start, start+len) along the last axis.
    pub fn crop(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AdError> {
        let v = &self.nodes[a.0].value;
        let axis = *v.shape.last().unwrap_or(&0);
        if start + len > axis {
            return Err(AdError::CropOutOfRange { start, len, axis });
        }
        let rows: usize = v.shape[..v.shape.len() - 1].iter().product();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&v.data[r * axis + start..r * axis + start + len]);
        }
        let mut shape = v.shape.clone();
        *shape.last_mut().unwrap() = len;
        let rg = self.rg(a);
        Ok(self.push(Op::Crop { x: a, start, len }, Tensor { shape, data }, rg))
    }

    /// Same data, new shape. Element count must match.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, AdError> {
        let v = &self.nodes[a.0].value;
        if shape.iter().product::<usize>() != v.numel() {
            return Err(AdError::BadShape {
                op: "reshape",
                shape: shape.to_vec(),
            });
        }
        let value = Tensor {
            shape: shape.to_vec(),
            data: v.data.clone(),
        };
        let rg = self.rg(a);
        Ok(self.push(Op::Reshape(a), value, rg))
    }

    /// PReLU: x when x > 0, alpha * x otherwise. `alpha` is a scalar or a
    /// per-channel vector matching a [C, T] input.
    pub fn prelu(&mut self, x: Var, alpha: Var) -> Result<Var, AdError> {
        let (vx, va) = (&self.nodes[x.0].value, &self.nodes[alpha.0].value);
        let per_channel = if va.is_scalar() {
            false
        } else if vx.shape.len() == 2 && va.shape.as_slice() == [vx.shape[0]] {
            true
        } else {
            return Err(AdError::ShapeMismatch {
                op: "prelu",
                a: vx.shape.clone(),
                b: va.shape.clone(),
            });
        };
        let t = if per_channel { vx.shape[1] } else { 1 };
        let data = vx
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v > 0.0 {
                    v
                } else {
                    let a = if per_channel {
                        va.data[i / t]
                    } else {
                        va.data[0]
                    };
                    a * v
                }
            })
            .collect();
        let value = Tensor {
            shape: vx.shape.clone(),
            data,
        };
        let rg = self.rg(x) || self.rg(alpha);
        Ok(self.push(Op::PRelu { x, alpha }, value, rg))
    }

    /// Batch normalization without affine transform, training mode:
    /// per-channel statistics over the time axis of this call.
    ///
    /// Returns the normalized tensor plus the batch (mean, var) so the
    /// caller can update running statistics.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>), AdError> {
        let v = &self.nodes[x.0].value;
        if v.shape.len() != 2 {
            return Err(AdError::BadShape {
                op: "batchnorm",
                shape: v.shape.clone(),
            });
        }
        let (c, t) = (v.shape[0], v.shape[1]);
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ci in 0..c {
            let row = &v.data[ci * t..(ci + 1) * t];
            let m = row.iter().sum::<f64>() / t as f64;
            let s2 = row.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / t as f64;
            mean[ci] = m;
            var[ci] = s2;
        }
        let istd: Vec<f64> = var.iter().map(|&s2| 1.0 / (s2 + eps).sqrt()).collect();
        let mut data = Vec::with_capacity(c * t);
        for ci in 0..c {
            let row = &v.data[ci * t..(ci + 1) * t];
            data.extend(row.iter().map(|&x| (x - mean[ci]) * istd[ci]));
        }
        let rg = self.rg(x);
        let out = self.push(
            Op::BatchNormTrain {
                x,
                mean: mean.clone(),
                istd,
            },
            Tensor {
                shape: vec![c, t],
                data,
            },
            rg,
        );
        Ok((out, mean, var))
    }

    /// Batch normalization without affine transform, inference mode: uses
    /// the provided running statistics as constants.
    pub fn batchnorm_infer(
        &mut self,
        x: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var, AdError> {
        let v = &self.nodes[x.0].value;
        if v.shape.len() != 2 || v.shape[0] != running_mean.len() {
            return Err(AdError::BadShape {
                op: "batchnorm",
                shape: v.shape.clone(),
            });
        }
        let (c, t) = (v.shape[0], v.shape[1]);
        let istd: Vec<f64> = running_var
            .iter()
            .map(|&s2| 1.0 / (s2 + eps).sqrt())
            .collect();
        let mut data = Vec::with_capacity(c * t);
        for ci in 0..c {
            let row = &v.data[ci * t..(ci + 1) * t];
            data.extend(row.iter().map(|&x| (x - running_mean[ci]) * istd[ci]));
        }
        let rg = self.rg(x);
        Ok(self.push(
            Op::BatchNormInfer { x, istd },
            Tensor {
                shape: vec![c, t],
                data,
            },
            rg,
        ))
    }

    /// Real-FFT magnitude of a 1-D signal of even length T: bins 0..=T/2.
    pub fn rfft_mag(&mut self, x: Var) -> Result<Var, AdError> {
        let v = &self.nodes[x.0].value;
        if v.shape.len() != 1 || v.numel() < 2 || v.numel() % 2 != 0 {
            return Err(AdError::BadShape {
                op: "rfft_mag",
                shape: v.shape.clone(),
            });
        }
        let n = v.numel();
        let mut buf: Vec<Complex64> = v.data.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        let fft = self.planner.plan_fft_forward(n);
        fft.process(&mut buf);
        let bins = n / 2 + 1;
        let spectrum: Vec<Complex64> = buf[..bins].to_vec();
        let mags: Vec<f64> = spectrum.iter().map(|c| c.norm()).collect();
        let rg = self.rg(x);
        Ok(self.push(
            Op::RfftMag { x, spectrum },
            Tensor::vector(mags),
            rg,
        ))
    }

    /// Reverse pass: fills gradients of every `requires_grad` node reachable
    /// from the scalar `loss`. Running backward twice on one tape is an
    /// error.
    pub fn backward(&mut self, loss: Var) -> Result<(), AdError> {
        if self.backward_done {
            return Err(AdError::BackwardTwice);
        }
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(AdError::NonScalarLoss(lv.shape.clone()));
        }
        self.backward_done = true;
        self.grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: &[f64]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = &mut self.grads[v.0];
        match slot {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(delta) {
                    *a += b;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    fn propagate(&mut self, node: usize, g: &[f64]) {
        // Borrow discipline: compute parent deltas from immutable reads,
        // then accumulate.
        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Add(a, b, bc) => {
                let (a, b, bc) = (*a, *b, *bc);
                self.accumulate(a, g);
                match bc {
                    Bcast::Same => self.accumulate(b, g),
                    Bcast::Scalar => self.accumulate(b, &[g.iter().sum()]),
                    Bcast::Channel => {
                        let t = self.nodes[a.0].value.shape[1];
                        let c = self.nodes[b.0].value.numel();
                        let mut gb = vec![0.0; c];
                        for (i, &gv) in g.iter().enumerate() {
                            gb[i / t] += gv;
                        }
                        self.accumulate(b, &gb);
                    }
                }
            }
            Op::Mul(a, b, bc) => {
                let (a, b, bc) = (*a, *b, *bc);
                let da = self.nodes[a.0].value.data.clone();
                let db = self.nodes[b.0].value.data.clone();
                match bc {
                    Bcast::Same => {
                        let ga: Vec<f64> = g.iter().zip(&db).map(|(gv, bv)| gv * bv).collect();
                        let gb: Vec<f64> = g.iter().zip(&da).map(|(gv, av)| gv * av).collect();
                        self.accumulate(a, &ga);
                        self.accumulate(b, &gb);
                    }
                    Bcast::Scalar => {
                        let s = db[0];
                        let ga: Vec<f64> = g.iter().map(|gv| gv * s).collect();
                        let gb = [g.iter().zip(&da).map(|(gv, av)| gv * av).sum::<f64>()];
                        self.accumulate(a, &ga);
                        self.accumulate(b, &gb);
                    }
                    Bcast::Channel => {
                        let t = self.nodes[a.0].value.shape[1];
                        let ga: Vec<f64> = g
                            .iter()
                            .enumerate()
                            .map(|(i, gv)| gv * db[i / t])
                            .collect();
                        let mut gb = vec![0.0; db.len()];
                        for (i, &gv) in g.iter().enumerate() {
                            gb[i / t] += gv * da[i];
                        }
                        self.accumulate(a, &ga);
                        self.accumulate(b, &gb);
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let sa = self.nodes[a.0].value.shape.clone();
                let sb = self.nodes[b.0].value.shape.clone();
                let (m, k) = (sa[0], sa[1]);
                let n = if sb.len() == 2 { sb[1] } else { 1 };
                let da = self.nodes[a.0].value.data.clone();
                let db = self.nodes[b.0].value.data.clone();
                // ga = g @ b^T
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let gv = g[i * n + j];
                        if gv == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            ga[i * k + p] += gv * db[p * n + j];
                        }
                    }
                }
                // gb = a^T @ g
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let av = da[i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            gb[p * n + j] += av * g[i * n + j];
                        }
                    }
                }
                self.accumulate(a, &ga);
                self.accumulate(b, &gb);
            }
            Op::Conv1d {
                x,
                w,
                b,
                dilation,
                stride,
            } => {
                let (x, w, b, dilation, stride) = (*x, *w, *b, *dilation, *stride);
                let sx = self.nodes[x.0].value.shape.clone();
                let sw = self.nodes[w.0].value.shape.clone();
                let (c_in, t_in) = (sx[0], sx[1]);
                let (c_out, k) = (sw[0], sw[2]);
                let t_out = self.nodes[node].value.shape[1];
                let dx = &self.nodes[x.0].value.data;
                let dw = &self.nodes[w.0].value.data;

                let work = c_out * c_in * k * t_out;

                // grad wrt weights: gw[co,ci,kk] = sum_t g[co,t] x[ci, t*s + kk*d]
                let wrow = |co: usize| -> Vec<f64> {
                    let grow = &g[co * t_out..(co + 1) * t_out];
                    let mut out = vec![0.0; c_in * k];
                    for ci in 0..c_in {
                        let xrow = &dx[ci * t_in..(ci + 1) * t_in];
                        for kk in 0..k {
                            let off = kk * dilation;
                            let mut acc = 0.0;
                            for (t, &gv) in grow.iter().enumerate() {
                                acc += gv * xrow[t * stride + off];
                            }
                            out[ci * k + kk] = acc;
                        }
                    }
                    out
                };
                let gw_rows: Vec<Vec<f64>> = if work > CONV_PAR_THRESHOLD {
                    (0..c_out).into_par_iter().map(wrow).collect()
                } else {
                    (0..c_out).map(wrow).collect()
                };
                let mut gw = Vec::with_capacity(c_out * c_in * k);
                for r in gw_rows {
                    gw.extend(r);
                }

                // grad wrt input: gx[ci, t*s + kk*d] += w[co,ci,kk] g[co,t]
                let xrow_grad = |ci: usize| -> Vec<f64> {
                    let mut out = vec![0.0; t_in];
                    for co in 0..c_out {
                        let grow = &g[co * t_out..(co + 1) * t_out];
                        let wrow = &dw[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                        for (kk, &wv) in wrow.iter().enumerate() {
                            if wv == 0.0 {
                                continue;
                            }
                            let off = kk * dilation;
                            for (t, &gv) in grow.iter().enumerate() {
                                out[t * stride + off] += wv * gv;
                            }
                        }
                    }
                    out
                };
                let gx_rows: Vec<Vec<f64>> = if work > CONV_PAR_THRESHOLD {
                    (0..c_in).into_par_iter().map(xrow_grad).collect()
                } else {
                    (0..c_in).map(xrow_grad).collect()
                };
                let mut gx = Vec::with_capacity(c_in * t_in);
                for r in gx_rows {
                    gx.extend(r);
                }

                self.accumulate(w, &gw);
                self.accumulate(x, &gx);
                if let Some(bv) = b {
                    let gb: Vec<f64> = (0..c_out)
                        .map(|co| g[co * t_out..(co + 1) * t_out].iter().sum())
                        .collect();
                    self.accumulate(bv, &gb);
                }
            }
            Op::Mean(a) => {
                let a = *a;
                let n = self.nodes[a.0].value.numel() as f64;
                let delta = vec![g[0] / n; n as usize];
                self.accumulate(a, &delta);
            }
            Op::Sum(a) => {
                let a = *a;
                let n = self.nodes[a.0].value.numel();
                let delta = vec![g[0]; n];
                self.accumulate(a, &delta);
            }
            Op::MeanTime(a) => {
                let a = *a;
                let (c, t) = (
                    self.nodes[a.0].value.shape[0],
                    self.nodes[a.0].value.shape[1],
                );
                let mut delta = vec![0.0; c * t];
                for ci in 0..c {
                    let gv = g[ci] / t as f64;
                    for slot in &mut delta[ci * t..(ci + 1) * t] {
                        *slot = gv;
                    }
                }
                self.accumulate(a, &delta);
            }
            Op::Abs(a) => {
                let a = *a;
                let da = self.nodes[a.0].value.data.clone();
                let delta: Vec<f64> = g
                    .iter()
                    .zip(&da)
                    .map(|(gv, &x)| {
                        if x > 0.0 {
                            *gv
                        } else if x < 0.0 {
                            -gv
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(a, &delta);
            }
            Op::Log(a) => {
                let a = *a;
                let da = self.nodes[a.0].value.data.clone();
                let delta: Vec<f64> = g.iter().zip(&da).map(|(gv, &x)| gv / x).collect();
                self.accumulate(a, &delta);
            }
            Op::Sqrt(a) => {
                let a = *a;
                let y = self.nodes[node].value.data.clone();
                // Subgradient 0 at exactly zero.
                let delta: Vec<f64> = g
                    .iter()
                    .zip(&y)
                    .map(|(gv, &yv)| if yv == 0.0 { 0.0 } else { gv / (2.0 * yv) })
                    .collect();
                self.accumulate(a, &delta);
            }
            Op::Exp(a) => {
                let a = *a;
                let y = self.nodes[node].value.data.clone();
                let delta: Vec<f64> = g.iter().zip(&y).map(|(gv, yv)| gv * yv).collect();
                self.accumulate(a, &delta);
            }
            Op::Sin(a) => {
                let a = *a;
                let da = self.nodes[a.0].value.data.clone();
                let delta: Vec<f64> = g.iter().zip(&da).map(|(gv, &x)| gv * x.cos()).collect();
                self.accumulate(a, &delta);
            }
            Op::Cos(a) => {
                let a = *a;
                let da = self.nodes[a.0].value.data.clone();
                let delta: Vec<f64> = g.iter().zip(&da).map(|(gv, &x)| -gv * x.sin()).collect();
                self.accumulate(a, &delta);
            }
            Op::PowConst(a, p) => {
                let (a, p) = (*a, *p);
                let da = self.nodes[a.0].value.data.clone();
                let delta: Vec<f64> = g
                    .iter()
                    .zip(&da)
                    .map(|(gv, &x)| gv * p * x.powf(p - 1.0))
                    .collect();
                self.accumulate(a, &delta);
            }
            Op::Concat(parts) => {
                let parts = parts.clone();
                let mut off = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.numel();
                    let delta = g[off..off + n].to_vec();
                    self.accumulate(p, &delta);
                    off += n;
                }
            }
            Op::Crop { x, start, len } => {
                let (x, start, len) = (*x, *start, *len);
                let shape = self.nodes[x.0].value.shape.clone();
                let axis = *shape.last().unwrap();
                let rows: usize = shape[..shape.len() - 1].iter().product();
                let mut delta = vec![0.0; self.nodes[x.0].value.numel()];
                for r in 0..rows {
                    delta[r * axis + start..r * axis + start + len]
                        .copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                self.accumulate(x, &delta);
            }
            Op::Reshape(a) => {
                let a = *a;
                self.accumulate(a, g);
            }
            Op::PRelu { x, alpha } => {
                let (x, alpha) = (*x, *alpha);
                let dx = self.nodes[x.0].value.data.clone();
                let dav = self.nodes[alpha.0].value.data.clone();
                let per_channel = dav.len() > 1;
                let t = if per_channel {
                    self.nodes[x.0].value.shape[1]
                } else {
                    1
                };
                let gx: Vec<f64> = g
                    .iter()
                    .zip(dx.iter().enumerate())
                    .map(|(gv, (i, &x))| {
                        if x > 0.0 {
                            *gv
                        } else {
                            gv * if per_channel { dav[i / t] } else { dav[0] }
                        }
                    })
                    .collect();
                let mut ga = vec![0.0; dav.len()];
                for (i, (&gv, &x)) in g.iter().zip(&dx).enumerate() {
                    if x <= 0.0 {
                        let slot = if per_channel { i / t } else { 0 };
                        ga[slot] += gv * x;
                    }
                }
                self.accumulate(x, &gx);
                self.accumulate(alpha, &ga);
            }
            Op::Sigmoid(a) => {
                let a = *a;
                let y = self.nodes[node].value.data.clone();
                let delta: Vec<f64> = g
                    .iter()
                    .zip(&y)
                    .map(|(gv, &s)| gv * s * (1.0 - s))
                    .collect();
                self.accumulate(a, &delta);
            }
            Op::Tanh(a) => {
                let a = *a;
                let y = self.nodes[node].value.data.clone();
                let delta: Vec<f64> = g
                    .iter()
                    .zip(&y)
                    .map(|(gv, &t)| gv * (1.0 - t * t))
                    .collect();
                self.accumulate(a, &delta);
            }
            Op::BatchNormTrain { x, mean, istd } => {
                let x = *x;
                let (mean, istd) = (mean.clone(), istd.clone());
                let (c, t) = (
                    self.nodes[x.0].value.shape[0],
                    self.nodes[x.0].value.shape[1],
                );
                let dx = self.nodes[x.0].value.data.clone();
                let mut delta = vec![0.0; c * t];
                let tn = t as f64;
                for ci in 0..c {
                    let xrow = &dx[ci * t..(ci + 1) * t];
                    let grow = &g[ci * t..(ci + 1) * t];
                    let g_mean = grow.iter().sum::<f64>() / tn;
                    let mut gxh_mean = 0.0;
                    for (j, &gv) in grow.iter().enumerate() {
                        let xh = (xrow[j] - mean[ci]) * istd[ci];
                        gxh_mean += gv * xh;
                    }
                    gxh_mean /= tn;
                    for j in 0..t {
                        let xh = (xrow[j] - mean[ci]) * istd[ci];
                        delta[ci * t + j] = istd[ci] * (grow[j] - g_mean - xh * gxh_mean);
                    }
                }
                self.accumulate(x, &delta);
            }
            Op::BatchNormInfer { x, istd } => {
                let x = *x;
                let istd = istd.clone();
                let t = self.nodes[x.0].value.shape[1];
                let delta: Vec<f64> = g
                    .iter()
                    .enumerate()
                    .map(|(i, gv)| gv * istd[i / t])
                    .collect();
                self.accumulate(x, &delta);
            }
            Op::RfftMag { x, spectrum } => {
                let x = *x;
                let spectrum = spectrum.clone();
                let n = self.nodes[x.0].value.numel();
                let bins = n / 2 + 1;
                // grad_x = Re(DFT of c zero-padded to n), c_k = g_k conj(X_k)/|X_k|.
                let mut c = vec![Complex64::new(0.0, 0.0); n];
                for k in 0..bins {
                    let mag = spectrum[k].norm();
                    if mag > 0.0 {
                        c[k] = spectrum[k].conj() * (g[k] / mag);
                    }
                }
                let fft = self.planner.plan_fft_forward(n);
                fft.process(&mut c);
                let delta: Vec<f64> = c.iter().map(|z| z.re).collect();
                self.accumulate(x, &delta);
            }
        }
    }
}
