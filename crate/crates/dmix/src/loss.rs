//! Sum/difference multi-resolution STFT stereo loss, as a plain metric.
//!
//! The stereo signal is split into sum (L + R) and difference (L - R)
//! signals; each is compared through spectral convergence and spectral
//! log-magnitude terms at several STFT resolutions. Absolute left/right
//! orientation lives in the phase of the difference signal, which the
//! magnitude STFT discards, so swapping channels leaves the loss unchanged.
//!
//! The differentiable counterpart lives in [`crate::diffloss`].

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::audio::AudioBuffer;

/// Epsilon added inside both log arguments of the log-magnitude term.
pub const LOG_EPS: f64 = 1e-7;
/// Floor for the spectral-convergence denominator.
pub const SC_DEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("expected stereo input, got {0} channels")]
    NotStereo(usize),
    #[error("signal length {len} shorter than one frame ({frame_size})")]
    TooShort { len: usize, frame_size: usize },
    #[error("magnitude shapes differ: {a_frames}x{a_bins} vs {b_frames}x{b_bins}")]
    ShapeMismatch {
        a_frames: usize,
        a_bins: usize,
        b_frames: usize,
        b_bins: usize,
    },
    #[error("signal lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("invalid stft config: frame {frame_size}, hop {hop_size}")]
    BadConfig { frame_size: usize, hop_size: usize },
}

/// One STFT resolution: frame size, hop, Hann window of the frame size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StftConfig {
    pub frame_size: usize,
    pub hop_size: usize,
}

impl StftConfig {
    pub fn new(frame_size: usize, hop_size: usize) -> Result<Self, LossError> {
        if frame_size == 0
            || !frame_size.is_power_of_two()
            || hop_size == 0
            || hop_size > frame_size
        {
            return Err(LossError::BadConfig { frame_size, hop_size });
        }
        Ok(Self { frame_size, hop_size })
    }

    pub fn bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    /// Number of frames for a signal of `len` samples: no centering,
    /// trailing partial frames dropped.
    pub fn num_frames(&self, len: usize) -> Result<usize, LossError> {
        if len < self.frame_size {
            return Err(LossError::TooShort {
                len,
                frame_size: self.frame_size,
            });
        }
        Ok((len - self.frame_size) / self.hop_size + 1)
    }
}

/// The set of resolutions whose errors are averaged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiResConfig {
    pub resolutions: Vec<StftConfig>,
}

impl MultiResConfig {
    /// Frame sizes 512/1024/2048 with 75% overlap.
    pub fn standard() -> Self {
        Self {
            resolutions: vec![
                StftConfig { frame_size: 512, hop_size: 128 },
                StftConfig { frame_size: 1024, hop_size: 256 },
                StftConfig { frame_size: 2048, hop_size: 512 },
            ],
        }
    }
}

impl Default for MultiResConfig {
    fn default() -> Self {
        Self::standard()
    }
}

/// Periodic Hann window of length n.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Split a stereo buffer into (sum, difference) mono signals.
pub fn sum_diff(y: &AudioBuffer) -> Result<(Vec<f64>, Vec<f64>), LossError> {
    if !y.is_stereo() {
        return Err(LossError::NotStereo(y.channels()));
    }
    let (l, r) = (y.channel(0), y.channel(1));
    let sum = l.iter().zip(r).map(|(a, b)| a + b).collect();
    let diff = l.iter().zip(r).map(|(a, b)| a - b).collect();
    Ok((sum, diff))
}

/// STFT magnitudes: rows are frames, columns are the frame_size/2 + 1
/// non-negative-frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Magnitudes {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl Magnitudes {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.bins..(i + 1) * self.bins]
    }
}

/// Hann-windowed, non-centered STFT magnitude of a mono signal.
pub fn stft_mag(x: &[f64], cfg: &StftConfig) -> Result<Magnitudes, LossError> {
    let n_frames = cfg.num_frames(x.len())?;
    let bins = cfg.bins();
    let window = hann_window(cfg.frame_size);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.frame_size);
    let mut data = Vec::with_capacity(n_frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.frame_size];
    for f in 0..n_frames {
        let start = f * cfg.hop_size;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(x[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        data.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    Ok(Magnitudes {
        frames: n_frames,
        bins,
        data,
    })
}

fn check_shapes(a: &Magnitudes, b: &Magnitudes) -> Result<(), LossError> {
    if a.frames != b.frames || a.bins != b.bins {
        return Err(LossError::ShapeMismatch {
            a_frames: a.frames,
            a_bins: a.bins,
            b_frames: b.frames,
            b_bins: b.bins,
        });
    }
    Ok(())
}

/// Spectral convergence: Frobenius norm of the magnitude difference over
/// the Frobenius norm of the target magnitude.
pub fn loss_sc(pred: &Magnitudes, target: &Magnitudes) -> Result<f64, LossError> {
    check_shapes(pred, target)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in pred.data.iter().zip(&target.data) {
        num += (t - p) * (t - p);
        den += t * t;
    }
    Ok(num.sqrt() / den.sqrt().max(SC_DEN_FLOOR))
}

/// Spectral log-magnitude: L1 distance of the log magnitudes, normalized
/// by the number of frames N (not by element count).
pub fn loss_sm(pred: &Magnitudes, target: &Magnitudes) -> Result<f64, LossError> {
    check_shapes(pred, target)?;
    let mut acc = 0.0;
    for (p, t) in pred.data.iter().zip(&target.data) {
        acc += ((t + LOG_EPS).ln() - (p + LOG_EPS).ln()).abs();
    }
    Ok(acc / target.frames as f64)
}

/// Multi-resolution STFT loss: mean over resolutions of SC + SM.
pub fn loss_mr(pred: &[f64], target: &[f64], cfg: &MultiResConfig) -> Result<f64, LossError> {
    if pred.len() != target.len() {
        return Err(LossError::LengthMismatch {
            a: pred.len(),
            b: target.len(),
        });
    }
    let mut acc = 0.0;
    for res in &cfg.resolutions {
        let p = stft_mag(pred, res)?;
        let t = stft_mag(target, res)?;
        acc += loss_sc(&p, &t)? + loss_sm(&p, &t)?;
    }
    Ok(acc / cfg.resolutions.len() as f64)
}

/// The stereo loss: multi-resolution loss on the sum signals plus the
/// multi-resolution loss on the difference signals.
pub fn stereo_loss(
    pred: &AudioBuffer,
    target: &AudioBuffer,
    cfg: &MultiResConfig,
) -> Result<f64, LossError> {
    let (ps, pd) = sum_diff(pred)?;
    let (ts, td) = sum_diff(target)?;
    if ps.len() != ts.len() {
        return Err(LossError::LengthMismatch {
            a: ps.len(),
            b: ts.len(),
        });
    }
    Ok(loss_mr(&ps, &ts, cfg)? + loss_mr(&pd, &td, cfg)?)
}

/// Per-resolution terms for one branch (sum or difference).
#[derive(Debug, Clone, Serialize)]
pub struct BranchTerms {
    pub sc: f64,
    pub sm: f64,
}

/// One resolution's report row.
#[derive(Debug, Clone, Serialize)]
pub struct ResolutionReport {
    pub frame_size: usize,
    pub hop_size: usize,
    pub sum: BranchTerms,
    pub diff: BranchTerms,
}

/// Full metric report: per-resolution SC/SM for both branches, the two
/// branch totals, and the stereo loss.
#[derive(Debug, Clone, Serialize)]
pub struct StereoLossReport {
    pub resolutions: Vec<ResolutionReport>,
    pub mr_sum: f64,
    pub mr_diff: f64,
    pub total: f64,
}

pub fn stereo_loss_report(
    pred: &AudioBuffer,
    target: &AudioBuffer,
    cfg: &MultiResConfig,
) -> Result<StereoLossReport, LossError> {
    let (ps, pd) = sum_diff(pred)?;
    let (ts, td) = sum_diff(target)?;
    if ps.len() != ts.len() {
        return Err(LossError::LengthMismatch {
            a: ps.len(),
            b: ts.len(),
        });
    }
    let mut rows = Vec::with_capacity(cfg.resolutions.len());
    let mut mr_sum = 0.0;
    let mut mr_diff = 0.0;
    for res in &cfg.resolutions {
        let (p, t) = (stft_mag(&ps, res)?, stft_mag(&ts, res)?);
        let sum = BranchTerms {
            sc: loss_sc(&p, &t)?,
            sm: loss_sm(&p, &t)?,
        };
        let (p, t) = (stft_mag(&pd, res)?, stft_mag(&td, res)?);
        let diff = BranchTerms {
            sc: loss_sc(&p, &t)?,
            sm: loss_sm(&p, &t)?,
        };
        mr_sum += sum.sc + sum.sm;
        mr_diff += diff.sc + diff.sm;
        rows.push(ResolutionReport {
            frame_size: res.frame_size,
            hop_size: res.hop_size,
            sum,
            diff,
        });
    }
    let m = cfg.resolutions.len() as f64;
    mr_sum /= m;
    mr_diff /= m;
    Ok(StereoLossReport {
        resolutions: rows,
        mr_sum,
        mr_diff,
        total: mr_sum + mr_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    fn stereo_noise(n: usize, seed: u64) -> AudioBuffer {
        AudioBuffer::stereo(noise(n, seed), noise(n, seed + 1000), 44_100)
    }

    /// Brute-force direct DFT magnitude of one windowed frame.
    fn dft_mag_oracle(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        let w = hann_window(n);
        (0..n / 2 + 1)
            .map(|k| {
                let mut re = 0.0;
                let mut im = 0.0;
                for (i, &x) in frame.iter().enumerate() {
                    let phase = -2.0 * std::f64::consts::PI * k as f64 * i as f64 / n as f64;
                    re += x * w[i] * phase.cos();
                    im += x * w[i] * phase.sin();
                }
                re.hypot(im)
            })
            .collect()
    }

    #[test]
    fn sum_diff_identities() {
        let x = noise(256, 1);
        let same = AudioBuffer::stereo(x.clone(), x.clone(), 44_100);
        let (s, d) = sum_diff(&same).unwrap();
        for (a, b) in s.iter().zip(&x) {
            assert_eq!(*a, 2.0 * b);
        }
        assert!(d.iter().all(|&v| v == 0.0));

        let anti = AudioBuffer::stereo(x.clone(), x.iter().map(|v| -v).collect(), 44_100);
        let (s, d) = sum_diff(&anti).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
        for (a, b) in d.iter().zip(&x) {
            assert_eq!(*a, 2.0 * b);
        }

        let y = stereo_noise(128, 2);
        let swapped =
            AudioBuffer::stereo(y.channel(1).to_vec(), y.channel(0).to_vec(), 44_100);
        let (s1, d1) = sum_diff(&y).unwrap();
        let (s2, d2) = sum_diff(&swapped).unwrap();
        assert_eq!(s1, s2);
        for (a, b) in d1.iter().zip(&d2) {
            assert_eq!(*a, -b);
        }

        assert!(matches!(
            sum_diff(&AudioBuffer::zeros(1, 8, 44_100)),
            Err(LossError::NotStereo(1))
        ));
    }

    #[test]
    fn stft_frame_count() {
        let cfg = StftConfig::new(2048, 512).unwrap();
        let m = stft_mag(&noise(44_100, 3), &cfg).unwrap();
        assert_eq!(m.frames, 83);
        assert_eq!(m.bins, 1025);
    }

    #[test]
    fn stft_of_silence_is_zero() {
        let cfg = StftConfig::new(512, 128).unwrap();
        let m = stft_mag(&vec![0.0; 1024], &cfg).unwrap();
        assert!(m.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stft_matches_direct_dft_oracle() {
        let cfg = StftConfig::new(64, 64).unwrap();
        let x = noise(64, 4);
        let m = stft_mag(&x, &cfg).unwrap();
        let oracle = dft_mag_oracle(&x);
        for (a, b) in m.frame(0).iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn stft_sine_peaks_at_expected_bin() {
        let cfg = StftConfig::new(256, 256).unwrap();
        let fs = 44_100.0;
        let f = 8.0 * fs / 256.0; // exactly bin 8
        let x: Vec<f64> = (0..256)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
            .collect();
        let m = stft_mag(&x, &cfg).unwrap();
        let frame = m.frame(0);
        let peak = frame
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 8);
        // Hann concentrates the energy in the peak bin and its neighbors.
        let local: f64 = frame[7..10].iter().map(|v| v * v).sum();
        let total: f64 = frame.iter().map(|v| v * v).sum();
        assert!(local / total > 0.99);
    }

    #[test]
    fn stft_too_short_is_error() {
        let cfg = StftConfig::new(512, 128).unwrap();
        assert!(matches!(
            stft_mag(&noise(100, 5), &cfg),
            Err(LossError::TooShort { .. })
        ));
    }

    #[test]
    fn sc_identities() {
        let cfg = StftConfig::new(256, 64).unwrap();
        let x = noise(1024, 6);
        let m = stft_mag(&x, &cfg).unwrap();
        assert_eq!(loss_sc(&m, &m).unwrap(), 0.0);

        let zero = stft_mag(&vec![0.0; 1024], &cfg).unwrap();
        assert_eq!(loss_sc(&zero, &m).unwrap(), 1.0);

        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let d = stft_mag(&doubled, &cfg).unwrap();
        // ||Y - 2Y|| / ||Y|| = 1
        assert!((loss_sc(&d, &m).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sm_log_ratio_values() {
        // N = 1 frame, one bin, |Y| = e*s, |Yhat| = s >> eps.
        let a = Magnitudes { frames: 1, bins: 1, data: vec![1.0] };
        let b = Magnitudes {
            frames: 1,
            bins: 1,
            data: vec![std::f64::consts::E],
        };
        let v = loss_sm(&a, &b).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "log ratio {v}");

        // Scaling by 10 adds ln(10) per element; with N-normalization the
        // total is bins * ln(10).
        let bins = 33;
        let base = Magnitudes {
            frames: 2,
            bins,
            data: vec![1.0; 2 * bins],
        };
        let scaled = Magnitudes {
            frames: 2,
            bins,
            data: vec![10.0; 2 * bins],
        };
        let v = loss_sm(&scaled, &base).unwrap();
        let expect = bins as f64 * 10f64.ln();
        assert!((v - expect).abs() < 1e-4 * expect, "{v} vs {expect}");
    }

    #[test]
    fn mr_is_mean_of_per_resolution_sums() {
        let cfg = MultiResConfig::standard();
        let fs = 44_100.0;
        let x: Vec<f64> = (0..8192)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / fs).sin())
            .collect();
        let silence = vec![0.0; 8192];
        let total = loss_mr(&silence, &x, &cfg).unwrap();
        let mut acc = 0.0;
        for res in &cfg.resolutions {
            let one = MultiResConfig { resolutions: vec![*res] };
            acc += loss_mr(&silence, &x, &one).unwrap();
        }
        assert!((total - acc / 3.0).abs() < 1e-12);

        assert_eq!(loss_mr(&x, &x, &cfg).unwrap(), 0.0);
        let one = MultiResConfig {
            resolutions: vec![StftConfig::new(512, 128).unwrap()],
        };
        let p = stft_mag(&silence, &one.resolutions[0]).unwrap();
        let t = stft_mag(&x, &one.resolutions[0]).unwrap();
        let expect = loss_sc(&p, &t).unwrap() + loss_sm(&p, &t).unwrap();
        assert!((loss_mr(&silence, &x, &one).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn stereo_loss_zero_on_identical() {
        let y = stereo_noise(4096, 7);
        assert_eq!(stereo_loss(&y, &y, &MultiResConfig::standard()).unwrap(), 0.0);
    }

    #[test]
    fn stereo_loss_swap_invariance() {
        let cfg = MultiResConfig::standard();
        for seed in 0..20 {
            let pred = stereo_noise(4096, 100 + seed);
            let target = stereo_noise(4096, 200 + seed);
            let swapped = AudioBuffer::stereo(
                pred.channel(1).to_vec(),
                pred.channel(0).to_vec(),
                44_100,
            );
            let a = stereo_loss(&pred, &target, &cfg).unwrap();
            let b = stereo_loss(&swapped, &target, &cfg).unwrap();
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");

            let tswapped = AudioBuffer::stereo(
                target.channel(1).to_vec(),
                target.channel(0).to_vec(),
                44_100,
            );
            let c = stereo_loss(&pred, &tswapped, &cfg).unwrap();
            assert!((a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn mono_fold_diff_branch_equals_silence_loss() {
        let cfg = MultiResConfig::standard();
        let target = stereo_noise(4096, 8);
        let folded: Vec<f64> = target
            .channel(0)
            .iter()
            .zip(target.channel(1))
            .map(|(l, r)| (l + r) / 2.0)
            .collect();
        let pred = AudioBuffer::stereo(folded.clone(), folded, 44_100);

        let (_, td) = sum_diff(&target).unwrap();
        let zero = vec![0.0; td.len()];
        let expect_diff = loss_mr(&zero, &td, &cfg).unwrap();
        assert!(expect_diff > 0.0);

        let report = stereo_loss_report(&pred, &target, &cfg).unwrap();
        assert!((report.mr_diff - expect_diff).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn stereo_loss_nonnegative_and_diff_phase_invariant(seed in 0u64..30) {
            let cfg = MultiResConfig::standard();
            let pred = stereo_noise(3000, 300 + seed);
            let target = stereo_noise(3000, 400 + seed);
            let l = stereo_loss(&pred, &target, &cfg).unwrap();
            prop_assert!(l >= 0.0);

            // Negating the prediction's difference signal = swapping its
            // channels; the loss only sees magnitudes.
            let (s, d) = sum_diff(&pred).unwrap();
            let l2: Vec<f64> = s.iter().zip(&d).map(|(a, b)| (a - b) / 2.0).collect();
            let r2: Vec<f64> = s.iter().zip(&d).map(|(a, b)| (a + b) / 2.0).collect();
            let negated = AudioBuffer::stereo(l2, r2, 44_100);
            let ln = stereo_loss(&negated, &target, &cfg).unwrap();
            prop_assert!((l - ln).abs() < 1e-9);
        }
    }
}
