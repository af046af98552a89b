//! The stereo sum/difference multi-resolution STFT loss as a tape node, so
//! gradients flow from the loss into predicted samples, mix parameters, and
//! network weights. Target-side quantities are plain constants computed by
//! [`crate::loss`]; only the prediction side runs through the engine.

use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::autodiff::{AdError, Tape, Tensor, Var};
use crate::loss::{hann_window, stft_mag, LossError, MultiResConfig, LOG_EPS, SC_DEN_FLOOR};

#[derive(Debug, Error)]
pub enum DiffLossError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("prediction length {pred} vs target length {target}")]
    LengthMismatch { pred: usize, target: usize },
    #[error("expected a 1-D prediction, got shape {0:?}")]
    NotVector(Vec<usize>),
}

fn expect_vector(tape: &Tape, v: Var) -> Result<usize, DiffLossError> {
    let t = tape.value(v);
    if t.shape.len() != 1 {
        return Err(DiffLossError::NotVector(t.shape.clone()));
    }
    Ok(t.numel())
}

/// STFT magnitudes of a tape signal at one resolution, flattened
/// frame-major to a 1-D node.
fn stft_mag_node(
    tape: &mut Tape,
    x: Var,
    frame_size: usize,
    hop_size: usize,
    window: Var,
) -> Result<Var, DiffLossError> {
    let len = expect_vector(tape, x)?;
    if len < frame_size {
        return Err(LossError::TooShort { len, frame_size }.into());
    }
    let n_frames = (len - frame_size) / hop_size + 1;
    let mut mags = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let frame = tape.crop(x, f * hop_size, frame_size)?;
        let windowed = tape.mul(frame, window)?;
        mags.push(tape.rfft_mag(windowed)?);
    }
    Ok(tape.concat(&mags)?)
}

/// Multi-resolution STFT loss node: prediction on the tape against a
/// constant target signal.
pub fn mr_loss_node(
    tape: &mut Tape,
    pred: Var,
    target: &[f64],
    cfg: &MultiResConfig,
) -> Result<Var, DiffLossError> {
    let len = expect_vector(tape, pred)?;
    if len != target.len() {
        return Err(DiffLossError::LengthMismatch {
            pred: len,
            target: target.len(),
        });
    }
    let mut acc: Option<Var> = None;
    for res in &cfg.resolutions {
        let tmag = stft_mag(target, res)?;
        let n_frames = tmag.frames as f64;
        let window = tape.constant(Tensor::vector(hann_window(res.frame_size)));
        let pmag = stft_mag_node(tape, pred, res.frame_size, res.hop_size, window)?;

        // Spectral convergence; denominator is a target-only constant.
        let tmag_const = tape.constant(Tensor::vector(tmag.data.clone()));
        let diff = tape.sub(tmag_const, pmag)?;
        let sq = tape.power(diff, 2.0);
        let ssq = tape.sum(sq);
        let num = tape.sqrt(ssq);
        let den = tmag.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sc = tape.scale(num, 1.0 / den.max(SC_DEN_FLOOR));

        // Spectral log-magnitude, normalized by frame count.
        let t_log: Vec<f64> = tmag.data.iter().map(|v| (v + LOG_EPS).ln()).collect();
        let t_log_const = tape.constant(Tensor::vector(t_log));
        let p_eps = tape.add_const(pmag, LOG_EPS);
        let p_log = tape.log(p_eps)?;
        let ldiff = tape.sub(t_log_const, p_log)?;
        let labs = tape.abs(ldiff);
        let lsum = tape.sum(labs);
        let sm = tape.scale(lsum, 1.0 / n_frames);

        let term = tape.add(sc, sm)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    let total = acc.expect("at least one resolution");
    Ok(tape.scale(total, 1.0 / cfg.resolutions.len() as f64))
}

/// Stereo loss node: the prediction's left/right channels live on the tape,
/// the target is a constant stereo buffer.
pub fn stereo_loss_node(
    tape: &mut Tape,
    pred_left: Var,
    pred_right: Var,
    target: &AudioBuffer,
    cfg: &MultiResConfig,
) -> Result<Var, DiffLossError> {
    let (ts, td) = crate::loss::sum_diff(target)?;
    let l_len = expect_vector(tape, pred_left)?;
    let r_len = expect_vector(tape, pred_right)?;
    if l_len != r_len || l_len != ts.len() {
        return Err(DiffLossError::LengthMismatch {
            pred: l_len.min(r_len),
            target: ts.len(),
        });
    }
    let psum = tape.add(pred_left, pred_right)?;
    let pdiff = tape.sub(pred_left, pred_right)?;
    let mr_sum = mr_loss_node(tape, psum, &ts, cfg)?;
    let mr_diff = mr_loss_node(tape, pdiff, &td, cfg)?;
    Ok(tape.add(mr_sum, mr_diff)?)
}

/// Mean absolute error node against a constant target of equal length.
pub fn l1_loss_node(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var, DiffLossError> {
    let len = expect_vector(tape, pred)?;
    if len != target.len() {
        return Err(DiffLossError::LengthMismatch {
            pred: len,
            target: target.len(),
        });
    }
    let t = tape.constant(Tensor::vector(target.to_vec()));
    let d = tape.sub(t, pred)?;
    let a = tape.abs(d);
    Ok(tape.mean(a))
}

/// Center crop of a slice to `out_len` samples.
pub fn center_crop(x: &[f64], out_len: usize) -> &[f64] {
    assert!(out_len <= x.len(), "crop longer than signal");
    let start = (x.len() - out_len) / 2;
    &x[start..start + out_len]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::loss;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    #[test]
    fn node_value_matches_plain_metric() {
        let cfg = MultiResConfig::standard();
        let target = AudioBuffer::stereo(noise(4096, 1), noise(4096, 2), 44_100);
        let pl = noise(4096, 3);
        let pr = noise(4096, 4);
        let pred = AudioBuffer::stereo(pl.clone(), pr.clone(), 44_100);

        let plain = loss::stereo_loss(&pred, &target, &cfg).unwrap();

        let mut tape = Tape::new();
        let l = tape.constant(Tensor::vector(pl));
        let r = tape.constant(Tensor::vector(pr));
        let node = stereo_loss_node(&mut tape, l, r, &target, &cfg).unwrap();
        let diff = (tape.value(node).item() - plain).abs();
        assert!(diff < 1e-12 * plain.max(1.0), "node vs plain: {diff}");
    }

    #[test]
    fn identical_signals_give_zero() {
        let cfg = MultiResConfig::standard();
        let l = noise(2048, 5);
        let r = noise(2048, 6);
        let target = AudioBuffer::stereo(l.clone(), r.clone(), 44_100);
        let mut tape = Tape::new();
        let lv = tape.constant(Tensor::vector(l));
        let rv = tape.constant(Tensor::vector(r));
        let node = stereo_loss_node(&mut tape, lv, rv, &target, &cfg).unwrap();
        assert_eq!(tape.value(node).item(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Small config keeps the finite-difference sweep cheap.
        let cfg = MultiResConfig {
            resolutions: vec![
                loss::StftConfig::new(64, 16).unwrap(),
                loss::StftConfig::new(128, 32).unwrap(),
            ],
        };
        let n = 160;
        let target = AudioBuffer::stereo(noise(n, 7), noise(n, 8), 44_100);
        let pred: Vec<f64> = noise(2 * n, 9);

        let report = grad_check(
            |tape, v| {
                let l = tape.crop(v, 0, n).unwrap();
                let r = tape.crop(v, n, n).unwrap();
                stereo_loss_node(tape, l, r, &target, &cfg).unwrap()
            },
            &Tensor::vector(pred),
            1e-4,
        );
        assert!(
            report.max_rel_err < 1e-4,
            "stereo loss grad err {} (excluded {:?})",
            report.max_rel_err,
            report.excluded
        );
    }

    #[test]
    fn l1_node_and_center_crop() {
        let target: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(center_crop(&target, 4), &[3.0, 4.0, 5.0, 6.0]);

        let mut tape = Tape::new();
        let p = tape.constant(Tensor::vector(vec![1.0, 2.0, 7.0, 2.0]));
        let node = l1_loss_node(&mut tape, p, center_crop(&target, 4)).unwrap();
        // |3-1| + |4-2| + |5-7| + |6-2| = 10, mean 2.5
        assert_eq!(tape.value(node).item(), 2.5);
    }

    #[test]
    fn length_mismatch_is_error() {
        let cfg = MultiResConfig::standard();
        let target = AudioBuffer::stereo(noise(1024, 1), noise(1024, 2), 44_100);
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::vector(noise(512, 3)));
        let r = tape.constant(Tensor::vector(noise(512, 4)));
        assert!(matches!(
            stereo_loss_node(&mut tape, l, r, &target, &cfg),
            Err(DiffLossError::LengthMismatch { .. })
        ));
    }
}
