//! The mix controller: a weight-shared track encoder, a mean context
//! embedding, and a post-processor MLP predicting normalized channel
//! parameters per track; assembled with the differentiable channel into an
//! end-to-end trainable console.
//!
//! One set of encoder/post-processor weights is applied to every track, so
//! the controller handles any number of input sources and is permutation
//! equivariant by construction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::autodiff::{AdError, Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::console::{ChannelParams, ConsoleError, PARAM_COUNT, PARAM_SPECS};
use crate::loss::{stft_mag, LossError, StftConfig};
use crate::tcn::{
    diff_channel_forward, ChannelParamNodes, MixTask, TcnError, TcnModel,
};

/// Dropout probability in the post-processor (training mode only).
pub const DROPOUT_P: f64 = 0.1;
/// Epsilon inside the log of the band spectrogram front-end.
pub const BAND_LOG_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Tcn(#[from] TcnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Console(#[from] ConsoleError),
    #[error("track of {len} samples is shorter than the encoder minimum {min}")]
    TrackTooShort { len: usize, min: usize },
    #[error("session has no tracks")]
    EmptySession,
    #[error("track {index} is not mono")]
    TrackNotMono { index: usize },
    #[error("track {index} length {got} differs from {expected}")]
    TrackLengthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("track {index} sample rate {got} differs from {expected}")]
    TrackRateMismatch { index: usize, expected: u32, got: u32 },
    #[error("cannot average an empty embedding list")]
    EmptyEmbeddingList,
    #[error("full task requires a transformation network")]
    MissingTcn,
}

/// Encoder architecture: log-band spectrogram front-end followed by a
/// stride-2 conv stack and temporal mean pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub frame_size: usize,
    pub hop_size: usize,
    pub n_bands: usize,
    pub n_layers: usize,
    pub embedding_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            frame_size: 1024,
            hop_size: 256,
            n_bands: 64,
            n_layers: 4,
            embedding_dim: 128,
        }
    }
}

impl EncoderConfig {
    /// Desk-scale variant: same structure, narrower embedding.
    pub fn with_embedding(mut self, dim: usize) -> Self {
        self.embedding_dim = dim;
        self
    }

    /// Miniature configuration for gradient checks: short frames so a
    /// 4096-sample track produces enough spectrogram columns.
    pub fn miniature() -> Self {
        Self {
            frame_size: 256,
            hop_size: 64,
            n_bands: 8,
            n_layers: 4,
            embedding_dim: 8,
        }
    }

    const KERNEL: usize = 3;
    const STRIDE: usize = 2;

    /// Spectrogram frames required to survive the conv stack.
    pub fn min_frames(&self) -> usize {
        let mut need = 1;
        for _ in 0..self.n_layers {
            need = Self::STRIDE * (need - 1) + Self::KERNEL;
        }
        need
    }

    /// Minimum track length in samples.
    pub fn min_samples(&self) -> usize {
        self.frame_size + (self.min_frames() - 1) * self.hop_size
    }
}

/// Log-magnitude spectrogram aggregated into log-spaced frequency bands:
/// the constant front-end of the encoder. Output shape [n_bands, frames].
pub fn spectrogram_bands(x: &[f64], cfg: &EncoderConfig) -> Result<Tensor, ControllerError> {
    let stft_cfg = StftConfig::new(cfg.frame_size, cfg.hop_size)?;
    let mags = stft_mag(x, &stft_cfg)?;
    let bins = mags.bins;

    // Geometric band edges over bins [1, bins), skipping DC; every band
    // covers at least one bin.
    let b = cfg.n_bands;
    let top = (bins - 1) as f64;
    let mut edges = Vec::with_capacity(b + 1);
    for i in 0..=b {
        let e = top.powf(i as f64 / b as f64); // 1.0 .. bins-1
        edges.push(e);
    }
    let mut lo = 1usize;
    let mut data = vec![0.0; b * mags.frames];
    for band in 0..b {
        let hi = (edges[band + 1].round() as usize).clamp(lo + 1, bins);
        for f in 0..mags.frames {
            let row = mags.frame(f);
            let mean = row[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
            data[band * mags.frames + f] = (mean + BAND_LOG_EPS).ln();
        }
        if hi < bins {
            lo = hi;
        }
    }
    Ok(Tensor {
        shape: vec![b, mags.frames],
        data,
    })
}

/// Controller weights: the shared encoder conv stack and the shared
/// 3-layer post-processor MLP.
pub struct ControllerModel {
    pub encoder: EncoderConfig,
    pub task: MixTask,
    enc_w: Vec<ParamId>,
    enc_b: Vec<ParamId>,
    enc_alpha: Vec<ParamId>,
    post_w: [ParamId; 3],
    post_b: [ParamId; 3],
    post_alpha: [ParamId; 2],
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

impl ControllerModel {
    /// Number of normalized parameters emitted per track.
    pub fn output_dim(task: MixTask) -> usize {
        match task {
            MixTask::Basic => 2,
            MixTask::Full => PARAM_COUNT,
        }
    }

    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        encoder: EncoderConfig,
        task: MixTask,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let e = encoder.embedding_dim;
        let k = EncoderConfig::KERNEL;
        let mut enc_w = Vec::new();
        let mut enc_b = Vec::new();
        let mut enc_alpha = Vec::new();
        for layer in 0..encoder.n_layers {
            let c_in = if layer == 0 { encoder.n_bands } else { e };
            let bound = (1.0 / (c_in * k) as f64).sqrt();
            enc_w.push(store.add(
                format!("{prefix}.enc.l{layer}.w"),
                Tensor {
                    shape: vec![e, c_in, k],
                    data: uniform(rng, e * c_in * k, bound),
                },
                true,
            ));
            enc_b.push(store.add(
                format!("{prefix}.enc.l{layer}.b"),
                Tensor::vector(vec![0.0; e]),
                true,
            ));
            enc_alpha.push(store.add(
                format!("{prefix}.enc.l{layer}.alpha"),
                Tensor::scalar(0.25),
                true,
            ));
        }

        let hidden = 2 * e;
        let out_dim = Self::output_dim(task);
        let dims = [(hidden, 2 * e), (hidden, hidden), (out_dim, hidden)];
        let mut post_w = Vec::new();
        let mut post_b = Vec::new();
        for (layer, (o, i)) in dims.iter().enumerate() {
            let bound = (1.0 / *i as f64).sqrt();
            post_w.push(store.add(
                format!("{prefix}.post.l{layer}.w"),
                Tensor::matrix(*o, *i, uniform(rng, o * i, bound)),
                true,
            ));
            post_b.push(store.add(
                format!("{prefix}.post.l{layer}.b"),
                Tensor::vector(vec![0.0; *o]),
                true,
            ));
        }
        let post_alpha = [
            store.add(format!("{prefix}.post.l0.alpha"), Tensor::scalar(0.25), true),
            store.add(format!("{prefix}.post.l1.alpha"), Tensor::scalar(0.25), true),
        ];

        Self {
            encoder,
            task,
            enc_w,
            enc_b,
            enc_alpha,
            post_w: [post_w[0], post_w[1], post_w[2]],
            post_b: [post_b[0], post_b[1], post_b[2]],
            post_alpha,
        }
    }

    /// Encode one track into a fixed-length embedding. The same weights
    /// serve every track; the embedding length is independent of duration.
    pub fn encode(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        track: &[f64],
    ) -> Result<Var, ControllerError> {
        let min = self.encoder.min_samples();
        if track.len() < min {
            return Err(ControllerError::TrackTooShort {
                len: track.len(),
                min,
            });
        }
        let bands = spectrogram_bands(track, &self.encoder)?;
        let mut h = tape.constant(bands);
        for layer in 0..self.encoder.n_layers {
            h = tape.conv1d(
                h,
                bound.var(self.enc_w[layer]),
                Some(bound.var(self.enc_b[layer])),
                1,
                EncoderConfig::STRIDE,
            )?;
            h = tape.prelu(h, bound.var(self.enc_alpha[layer]))?;
        }
        Ok(tape.mean_time(h)?)
    }

    /// Concatenate the track and context embeddings and run the 3-layer
    /// MLP with PReLU activations, dropout 0.1 (training only), and a
    /// sigmoid squashing outputs into (0, 1).
    pub fn post_process(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        track_emb: Var,
        context_emb: Var,
        training: bool,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, ControllerError> {
        let mut rng = dropout_rng;
        let mut h = tape.concat(&[track_emb, context_emb])?;
        for layer in 0..3 {
            let w = bound.var(self.post_w[layer]);
            let b = bound.var(self.post_b[layer]);
            let m = tape.matmul(w, h)?;
            h = tape.add(m, b)?;
            if layer < 2 {
                h = tape.prelu(h, bound.var(self.post_alpha[layer]))?;
                if training {
                    let r = rng
                        .as_deref_mut()
                        .expect("training mode requires a dropout rng");
                    let keep = 1.0 - DROPOUT_P;
                    let n = tape.value(h).numel();
                    let mask: Vec<f64> = (0..n)
                        .map(|_| {
                            if r.random_range(0.0..1.0) < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let mask = tape.constant(Tensor::vector(mask));
                    h = tape.mul(h, mask)?;
                }
            }
        }
        Ok(tape.sigmoid(h))
    }

    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "controller",
            "encoder": self.encoder,
            "task": self.task,
        })
    }
}

/// Elementwise mean of per-track embeddings: the cross-track context each
/// post-processor instance receives.
pub fn context_embedding(tape: &mut Tape, embeddings: &[Var]) -> Result<Var, ControllerError> {
    if embeddings.is_empty() {
        return Err(ControllerError::EmptyEmbeddingList);
    }
    let mut acc = embeddings[0];
    for &e in &embeddings[1..] {
        acc = tape.add(acc, e)?;
    }
    Ok(tape.scale(acc, 1.0 / embeddings.len() as f64))
}

/// A set of input tracks plus an optional target mix.
#[derive(Debug, Clone)]
pub struct MixSession {
    pub tracks: Vec<AudioBuffer>,
    pub target: Option<AudioBuffer>,
}

impl MixSession {
    pub fn new(tracks: Vec<AudioBuffer>, target: Option<AudioBuffer>) -> Self {
        Self { tracks, target }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.tracks.is_empty() {
            return Err(ControllerError::EmptySession);
        }
        let frames = self.tracks[0].frames();
        let rate = self.tracks[0].sample_rate();
        for (index, t) in self.tracks.iter().enumerate() {
            if !t.is_mono() {
                return Err(ControllerError::TrackNotMono { index });
            }
            if t.frames() != frames {
                return Err(ControllerError::TrackLengthMismatch {
                    index,
                    expected: frames,
                    got: t.frames(),
                });
            }
            if t.sample_rate() != rate {
                return Err(ControllerError::TrackRateMismatch {
                    index,
                    expected: rate,
                    got: t.sample_rate(),
                });
            }
        }
        if let Some(target) = &self.target {
            if target.sample_rate() != rate {
                return Err(ControllerError::TrackRateMismatch {
                    index: usize::MAX,
                    expected: rate,
                    got: target.sample_rate(),
                });
            }
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.tracks.first().map_or(0, |t| t.frames())
    }

    pub fn sample_rate(&self) -> u32 {
        self.tracks.first().map_or(0, |t| t.sample_rate())
    }
}

/// Tape-level result of running the controller over a session.
pub struct SessionForward {
    pub left: Var,
    pub right: Var,
    /// Per-track normalized parameter vectors, in track order.
    pub params_norm: Vec<Var>,
}

/// Run the whole differentiable console over a session: encode every
/// track, average the context, predict per-track parameters, render each
/// track through the differentiable channel, and sum to the stereo bus.
#[allow(clippy::too_many_arguments)]
pub fn session_forward(
    tape: &mut Tape,
    controller: &ControllerModel,
    tcn: Option<(&TcnModel, &Bound)>,
    bound: &Bound,
    store: &mut ParamStore,
    session: &MixSession,
    training: bool,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<SessionForward, ControllerError> {
    session.validate()?;
    if controller.task == MixTask::Full && tcn.is_none() {
        return Err(ControllerError::MissingTcn);
    }

    let embeddings: Vec<Var> = session
        .tracks
        .iter()
        .map(|t| controller.encode(tape, bound, t.channel(0)))
        .collect::<Result<_, _>>()?;
    let context = context_embedding(tape, &embeddings)?;

    let mut left_acc: Option<Var> = None;
    let mut right_acc: Option<Var> = None;
    let mut params_norm = Vec::with_capacity(session.tracks.len());
    for (track, &emb) in session.tracks.iter().zip(&embeddings) {
        let out = controller.post_process(
            tape,
            bound,
            emb,
            context,
            training,
            dropout_rng.as_deref_mut(),
        )?;
        params_norm.push(out);
        let nodes = ChannelParamNodes::from_normalized(tape, out, controller.task)?;
        let x = tape.constant(Tensor::vector(track.channel(0).to_vec()));
        let (l, r) = diff_channel_forward(tape, x, &nodes, tcn, store, training)?;
        left_acc = Some(match left_acc {
            Some(acc) => tape.add(acc, l)?,
            None => l,
        });
        right_acc = Some(match right_acc {
            Some(acc) => tape.add(acc, r)?,
            None => r,
        });
    }

    Ok(SessionForward {
        left: left_acc.expect("session has tracks"),
        right: right_acc.expect("session has tracks"),
        params_norm,
    })
}

/// Physical parameter record from a normalized controller output.
pub fn params_from_normalized(norm: &[f64], task: MixTask) -> ChannelParams {
    match task {
        MixTask::Basic => {
            let mut p = ChannelParams::neutral();
            p.gain_db = PARAM_SPECS[0].denormalize(norm[0]);
            p.pan = PARAM_SPECS[25].denormalize(norm[1]);
            p
        }
        MixTask::Full => {
            let mut n = [0.0; PARAM_COUNT];
            n.copy_from_slice(norm);
            let mut p = ChannelParams::denormalize(&n);
            // Controllers never flip polarity.
            p.polarity = 1.0;
            p
        }
    }
}

/// Inference output: the rendered stereo mix and the human-readable
/// parameters that produced it.
pub struct SessionOutput {
    pub mix: AudioBuffer,
    pub params: Vec<ChannelParams>,
}

/// Predict parameters for a session and render the mix.
///
/// Basic task: the mix is rendered through the reference console, so
/// re-rendering the emitted parameters reproduces it bitwise. Full task:
/// the mix is the transformation network's output (shorter than the input
/// by the receptive field minus one); re-rendering through the reference
/// console is the related but distinct "reference render" of the same
/// parameters.
pub fn predict_mix(
    controller: &ControllerModel,
    tcn: Option<&TcnModel>,
    store: &ParamStore,
    session: &MixSession,
) -> Result<SessionOutput, ControllerError> {
    let mut tape = Tape::new();
    let bound = store.bind_all(&mut tape, false);
    let mut scratch = store.clone();
    let fwd = session_forward(
        &mut tape,
        controller,
        tcn.map(|m| (m, &bound)),
        &bound,
        &mut scratch,
        session,
        false,
        None,
    )?;
    let params: Vec<ChannelParams> = fwd
        .params_norm
        .iter()
        .map(|&v| params_from_normalized(&tape.value(v).data, controller.task))
        .collect();

    let mix = match controller.task {
        MixTask::Basic => crate::console::console_mix(&session.tracks, &params)?,
        MixTask::Full => AudioBuffer::stereo(
            tape.value(fwd.left).data.clone(),
            tape.value(fwd.right).data.clone(),
            session.sample_rate(),
        ),
    };
    Ok(SessionOutput { mix, params })
}

#[cfg(test)]
mod tests;
