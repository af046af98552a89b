//! FiLM-conditioned dilated temporal convolutional network emulating the
//! EQ → compressor → reverb sub-chain, and the differentiable channel that
//! wraps it with directly-implemented gain/polarity (before) and fader/pan
//! (after).
//!
//! Blocks run conv → batchnorm (no affine) → FiLM → PReLU, with a
//! learnable-gain residual connection and a skip tap from every block; the
//! skip taps are center-cropped, averaged, and added to the final
//! activation before a 1x1 output projection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::console::{COND_PARAM_COUNT, PARAM_SPECS};

/// Batchnorm running-statistics momentum.
pub const BN_MOMENTUM: f64 = 0.1;
/// Batchnorm variance guard.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum TcnError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("input length {len} shorter than the receptive field {rf}")]
    InputTooShort { len: usize, rf: usize },
    #[error("conditioning vector has {got} values, expected {want}")]
    CondSize { got: usize, want: usize },
}

/// Which parameters the controller predicts and whether the TCN runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixTask {
    /// Gain and pan only; the TCN is removed from the channel.
    Basic,
    /// All 26 parameters; the TCN emulates EQ/compressor/reverb.
    Full,
}

/// Architecture hyperparameters of the transformation network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub n_blocks: usize,
    pub kernel_size: usize,
    pub channel_width: usize,
    pub cond_dim: usize,
}

impl TcnConfig {
    pub fn tcn10() -> Self {
        Self { n_blocks: 10, kernel_size: 15, channel_width: 32, cond_dim: 128 }
    }

    pub fn tcn20() -> Self {
        Self { n_blocks: 20, ..Self::tcn10() }
    }

    pub fn tcn30() -> Self {
        Self { n_blocks: 30, ..Self::tcn10() }
    }

    pub fn with_width(mut self, w: usize) -> Self {
        self.channel_width = w;
        self
    }

    /// Dilation of a zero-based block index: cycles 1, 2, ..., 512 per
    /// ten-block stack.
    pub fn dilation(block: usize) -> usize {
        1 << (block % 10)
    }

    /// Samples a block removes from the time axis.
    pub fn block_shrink(&self, block: usize) -> usize {
        Self::dilation(block) * (self.kernel_size - 1)
    }

    /// Receptive field in samples:
    /// 1 + (kernel - 1) * sum of dilations over all blocks.
    pub fn receptive_field(&self) -> usize {
        let dil_sum: usize = (0..self.n_blocks).map(Self::dilation).sum();
        1 + (self.kernel_size - 1) * dil_sum
    }

    /// Receptive field in milliseconds at a sample rate.
    pub fn receptive_field_ms(&self, sample_rate: u32) -> f64 {
        self.receptive_field() as f64 * 1000.0 / sample_rate as f64
    }

    /// Output length for an input, if long enough.
    pub fn output_len(&self, in_len: usize) -> Option<usize> {
        let rf = self.receptive_field();
        (in_len >= rf).then(|| in_len - rf + 1)
    }
}

struct BlockParams {
    conv_w: ParamId,
    film_w: ParamId,
    film_b: ParamId,
    alpha: ParamId,
    res_gain: ParamId,
    /// 1x1 projection of the residual path when input/output channel
    /// counts differ (the first block only).
    res_proj: Option<ParamId>,
    bn_mean: ParamId,
    bn_var: ParamId,
}

/// The transformation network's parameters registered in a store.
pub struct TcnModel {
    pub cfg: TcnConfig,
    film_mlp_w: [ParamId; 3],
    film_mlp_b: [ParamId; 3],
    film_mlp_alpha: [ParamId; 2],
    blocks: Vec<BlockParams>,
    out_w: ParamId,
    out_b: ParamId,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

fn linear_init(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    out_dim: usize,
    in_dim: usize,
) -> (ParamId, ParamId) {
    let bound = (1.0 / in_dim as f64).sqrt();
    let w = store.add(
        format!("{name}.w"),
        Tensor::matrix(out_dim, in_dim, uniform(rng, out_dim * in_dim, bound)),
        true,
    );
    let b = store.add(format!("{name}.b"), Tensor::vector(vec![0.0; out_dim]), true);
    (w, b)
}

impl TcnModel {
    /// Register all parameters under `prefix`, initialized from `rng`.
    ///
    /// FiLM projections start near identity (small weights, bias gamma 1 /
    /// beta 0); residual gains start at 1.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        cfg: TcnConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let d = cfg.cond_dim;
        let w = cfg.channel_width;
        let k = cfg.kernel_size;

        let (l0w, l0b) = linear_init(store, rng, &format!("{prefix}.film.l0"), d, COND_PARAM_COUNT);
        let (l1w, l1b) = linear_init(store, rng, &format!("{prefix}.film.l1"), d, d);
        let (l2w, l2b) = linear_init(store, rng, &format!("{prefix}.film.l2"), d, d);
        let film_mlp_alpha = [
            store.add(format!("{prefix}.film.l0.alpha"), Tensor::scalar(0.25), true),
            store.add(format!("{prefix}.film.l1.alpha"), Tensor::scalar(0.25), true),
        ];

        let mut blocks = Vec::with_capacity(cfg.n_blocks);
        for i in 0..cfg.n_blocks {
            let c_in = if i == 0 { 1 } else { w };
            let bound = (1.0 / (c_in * k) as f64).sqrt();
            let conv_w = store.add(
                format!("{prefix}.block{i}.conv.w"),
                Tensor {
                    shape: vec![w, c_in, k],
                    data: uniform(rng, w * c_in * k, bound),
                },
                true,
            );
            let film_w = store.add(
                format!("{prefix}.block{i}.film.w"),
                Tensor::matrix(2 * w, d, uniform(rng, 2 * w * d, 0.01)),
                true,
            );
            let mut film_bias = vec![1.0; w];
            film_bias.extend(vec![0.0; w]);
            let film_b = store.add(
                format!("{prefix}.block{i}.film.b"),
                Tensor::vector(film_bias),
                true,
            );
            let alpha = store.add(
                format!("{prefix}.block{i}.alpha"),
                Tensor::vector(vec![0.25; w]),
                true,
            );
            let res_gain = store.add(
                format!("{prefix}.block{i}.res_gain"),
                Tensor::scalar(1.0),
                true,
            );
            let res_proj = (c_in != w).then(|| {
                store.add(
                    format!("{prefix}.block{i}.res_proj.w"),
                    Tensor {
                        shape: vec![w, c_in, 1],
                        data: uniform(rng, w * c_in, (1.0 / c_in as f64).sqrt()),
                    },
                    true,
                )
            });
            let bn_mean = store.add(
                format!("{prefix}.block{i}.bn.mean"),
                Tensor::vector(vec![0.0; w]),
                false,
            );
            let bn_var = store.add(
                format!("{prefix}.block{i}.bn.var"),
                Tensor::vector(vec![1.0; w]),
                false,
            );
            blocks.push(BlockParams {
                conv_w,
                film_w,
                film_b,
                alpha,
                res_gain,
                res_proj,
                bn_mean,
                bn_var,
            });
        }

        let out_w = store.add(
            format!("{prefix}.out.w"),
            Tensor {
                shape: vec![1, w, 1],
                data: uniform(rng, w, (1.0 / w as f64).sqrt()),
            },
            true,
        );
        let out_b = store.add(format!("{prefix}.out.b"), Tensor::vector(vec![0.0]), true);

        Self {
            cfg,
            film_mlp_w: [l0w, l1w, l2w],
            film_mlp_b: [l0b, l1b, l2b],
            film_mlp_alpha,
            blocks,
            out_w,
            out_b,
        }
    }

    /// 3-layer MLP from the normalized processor parameters to the global
    /// conditioning vector.
    pub fn film_mlp(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        cond: Var,
    ) -> Result<Var, TcnError> {
        let got = tape.value(cond).numel();
        if got != COND_PARAM_COUNT {
            return Err(TcnError::CondSize {
                got,
                want: COND_PARAM_COUNT,
            });
        }
        let mut h = cond;
        for layer in 0..3 {
            let w = bound.var(self.film_mlp_w[layer]);
            let b = bound.var(self.film_mlp_b[layer]);
            let m = tape.matmul(w, h)?;
            h = tape.add(m, b)?;
            if layer < 2 {
                let alpha = bound.var(self.film_mlp_alpha[layer]);
                h = tape.prelu(h, alpha)?;
            }
        }
        Ok(h)
    }

    /// One TCN block: dilated conv → batchnorm → FiLM → PReLU, plus the
    /// scaled center-cropped residual. Returns (output, skip tap).
    #[allow(clippy::too_many_arguments)]
    pub fn block_forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        store: &mut ParamStore,
        block_idx: usize,
        x: Var,
        c_global: Var,
        training: bool,
    ) -> Result<(Var, Var), TcnError> {
        let blk = &self.blocks[block_idx];
        let w = self.cfg.channel_width;
        let dilation = TcnConfig::dilation(block_idx);

        // No conv bias: batch normalization would cancel it exactly.
        let conv = tape.conv1d(x, bound.var(blk.conv_w), None, dilation, 1)?;

        let bn = if training {
            let (bn, batch_mean, batch_var) = tape.batchnorm_train(conv, BN_EPS)?;
            let rm = &mut store.get_mut(blk.bn_mean).data;
            for (r, b) in rm.iter_mut().zip(&batch_mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
            let rv = &mut store.get_mut(blk.bn_var).data;
            for (r, b) in rv.iter_mut().zip(&batch_var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
            bn
        } else {
            let mean = store.get(blk.bn_mean).data.clone();
            let var = store.get(blk.bn_var).data.clone();
            tape.batchnorm_infer(conv, &mean, &var, BN_EPS)?
        };

        // FiLM: per-channel gamma/beta projected from the conditioning.
        let gb = tape.matmul(bound.var(blk.film_w), c_global)?;
        let gb = tape.add(gb, bound.var(blk.film_b))?;
        let gamma = tape.crop(gb, 0, w)?;
        let beta = tape.crop(gb, w, w)?;
        let scaled = tape.mul(bn, gamma)?;
        let filmed = tape.add(scaled, beta)?;

        let act = tape.prelu(filmed, bound.var(blk.alpha))?;

        // Residual: center crop of the input, projected when the channel
        // counts differ, scaled by the learnable gain.
        let t_in = tape.value(x).shape[1];
        let t_out = tape.value(act).shape[1];
        let offset = (t_in - t_out) / 2;
        let res_src = tape.crop(x, offset, t_out)?;
        let res = match blk.res_proj {
            Some(proj) => tape.conv1d(res_src, bound.var(proj), None, 1, 1)?,
            None => res_src,
        };
        let res_scaled = tape.mul(res, bound.var(blk.res_gain))?;
        let out = tape.add(act, res_scaled)?;
        Ok((out, act))
    }

    /// Run the full stack on a mono signal conditioned on the normalized
    /// EQ/compressor/reverb parameters. Output length is
    /// `in_len - receptive_field + 1`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        store: &mut ParamStore,
        x: Var,
        cond: Var,
        training: bool,
    ) -> Result<Var, TcnError> {
        let in_len = tape.value(x).numel();
        let rf = self.cfg.receptive_field();
        if in_len < rf {
            return Err(TcnError::InputTooShort { len: in_len, rf });
        }
        let c_global = self.film_mlp(tape, bound, cond)?;

        let mut h = tape.reshape(x, &[1, in_len])?;
        let mut taps = Vec::with_capacity(self.cfg.n_blocks);
        for i in 0..self.cfg.n_blocks {
            let (out, tap) = self.block_forward(tape, bound, store, i, h, c_global, training)?;
            taps.push(tap);
            h = out;
        }

        // Skip connections: every block's tap, center-cropped to the final
        // length and averaged, added to the last activation.
        let t_final = tape.value(h).shape[1];
        let mut skip_acc: Option<Var> = None;
        for tap in taps {
            let t_tap = tape.value(tap).shape[1];
            let cropped = tape.crop(tap, (t_tap - t_final) / 2, t_final)?;
            skip_acc = Some(match skip_acc {
                Some(acc) => tape.add(acc, cropped)?,
                None => cropped,
            });
        }
        let skip_mean = tape.scale(skip_acc.expect("at least one block"), 1.0 / self.cfg.n_blocks as f64);
        let merged = tape.add(h, skip_mean)?;

        let y = tape.conv1d(merged, bound.var(self.out_w), Some(bound.var(self.out_b)), 1, 1)?;
        Ok(tape.reshape(y, &[t_final])?)
    }

    /// Manifest describing this architecture, stored in checkpoints.
    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "tcn", "config": self.cfg })
    }
}

/// Differentiable per-channel parameters. Gain, fader, and pan are scalar
/// nodes; polarity is a non-differentiable sign; the conditioning vector
/// (normalized EQ/compressor/reverb parameters) is present in full mode.
pub struct ChannelParamNodes {
    pub gain_db: Var,
    pub polarity: f64,
    pub fader_db: Var,
    pub pan: Var,
    pub cond: Option<Var>,
}

impl ChannelParamNodes {
    /// Build from a normalized controller output vector (2 values for the
    /// basic task, 26 for the full task), denormalizing on the tape.
    /// Polarity is fixed to +1 for controller-predicted mixes.
    pub fn from_normalized(
        tape: &mut Tape,
        out: Var,
        task: MixTask,
    ) -> Result<Self, AdError> {
        match task {
            MixTask::Basic => {
                let g = tape.crop(out, 0, 1)?;
                let p = tape.crop(out, 1, 1)?;
                let gain_db = denorm_linear(tape, g, 0)?;
                let fader_db = tape.constant_scalar(0.0);
                Ok(Self {
                    gain_db,
                    polarity: 1.0,
                    fader_db,
                    pan: p,
                    cond: None,
                })
            }
            MixTask::Full => {
                let g = tape.crop(out, 0, 1)?;
                let f = tape.crop(out, 24, 1)?;
                let p = tape.crop(out, 25, 1)?;
                let cond = tape.crop(out, 2, COND_PARAM_COUNT)?;
                Ok(Self {
                    gain_db: denorm_linear(tape, g, 0)?,
                    polarity: 1.0,
                    fader_db: denorm_linear(tape, f, 24)?,
                    pan: p,
                    cond: Some(cond),
                })
            }
        }
    }
}

/// Denormalize a linear-scaled parameter on the tape using the canonical
/// range table.
fn denorm_linear(tape: &mut Tape, n: Var, spec_idx: usize) -> Result<Var, AdError> {
    let spec = &PARAM_SPECS[spec_idx];
    let scaled = tape.scale(n, spec.hi - spec.lo);
    Ok(tape.add_const(scaled, spec.lo))
}

const LN10_OVER_20: f64 = std::f64::consts::LN_10 / 20.0;

/// dB node to linear amplitude node: exp(db * ln(10)/20).
pub fn db_to_linear_node(tape: &mut Tape, db: Var) -> Var {
    let scaled = tape.scale(db, LN10_OVER_20);
    tape.exp(scaled)
}

/// The differentiable channel of the mixing console.
///
/// Basic task: gain·polarity → fader → constant-power pan (no TCN).
/// Full task: gain·polarity → TCN conditioned on the processor parameters
/// → fader → pan; output is shorter by the receptive field minus one.
/// Returns (left, right) nodes.
#[allow(clippy::too_many_arguments)]
pub fn diff_channel_forward(
    tape: &mut Tape,
    x: Var,
    params: &ChannelParamNodes,
    tcn: Option<(&TcnModel, &Bound)>,
    store: &mut ParamStore,
    training: bool,
) -> Result<(Var, Var), TcnError> {
    let gain_lin = db_to_linear_node(tape, params.gain_db);
    let pre = if params.polarity < 0.0 {
        tape.neg(gain_lin)
    } else {
        gain_lin
    };
    let mut y = tape.mul(x, pre)?;

    if let Some((model, bound)) = tcn {
        let cond = params.cond.expect("full mode requires a conditioning vector");
        y = model.forward(tape, bound, store, y, cond, training)?;
    }

    let fader_lin = db_to_linear_node(tape, params.fader_db);
    y = tape.mul(y, fader_lin)?;

    let theta = tape.scale(params.pan, std::f64::consts::FRAC_PI_2);
    let cos_t = tape.cos(theta);
    let sin_t = tape.sin(theta);
    let left = tape.mul(y, cos_t)?;
    let right = tape.mul(y, sin_t)?;
    Ok((left, right))
}
