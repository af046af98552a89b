//! Differentiable mixing console toolkit.
//!
//! The crate provides, in rough dependency order:
//!
//! - [`audio`]: audio buffers, WAV file I/O, patch extraction, dB conversions.
//! - [`console`]: a reference (sample-exact) mixing console channel — gain,
//!   polarity, four-band EQ, compressor, reverb, fader, constant-power pan —
//!   and the N-channel console summing to a stereo bus.
//! - [`loss`]: the sum/difference multi-resolution STFT stereo loss, as a
//!   plain metric.
//! - [`autodiff`]: a minimal reverse-mode automatic differentiation engine
//!   with Adam, plateau learning-rate scheduling, a finite-difference
//!   gradient checker, and a binary checkpoint format.
//! - [`diffloss`]: the stereo loss built from autodiff ops, so gradients can
//!   flow into mix parameters and network weights.
//! - [`tcn`]: the FiLM-conditioned dilated temporal convolutional network
//!   that emulates the EQ→compressor→reverb sub-chain, plus the
//!   differentiable channel wrapper (gain/polarity in front, fader/pan after).
//! - [`controller`]: the weight-shared track encoder, context embedding, and
//!   post-processor MLP predicting channel parameters per track.
//! - [`train`]: synthetic multitrack generation, the channel-emulation and
//!   end-to-end mix training procedures, direct parameter fitting, and
//!   evaluation metrics.
//! - [`cli`]: the `dmix` command-line surface.

pub mod audio;
pub mod autodiff;
pub mod cli;
pub mod console;
pub mod controller;
pub mod diffloss;
pub mod loss;
pub mod tcn;
pub mod train;
pub mod util;
