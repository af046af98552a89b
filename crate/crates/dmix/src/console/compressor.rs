//! Feed-forward dynamic range compressor: peak detector, one-pole
//! attack/release envelope in the linear domain, hard-knee static curve in
//! the log domain.

/// Envelope level (linear) carried across blocks.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompressorState {
    pub envelope: f64,
}

impl CompressorState {
    pub fn reset(&mut self) {
        self.envelope = 0.0;
    }
}

/// Envelope floor in dB; keeps the static curve finite on silence.
const LEVEL_FLOOR_DB: f64 = -240.0;

/// One-pole smoothing coefficient for time constant tau (ms).
fn smoothing_alpha(sample_rate: u32, tau_ms: f64) -> f64 {
    (-1.0 / (sample_rate as f64 * tau_ms * 1e-3)).exp()
}

/// Compress a mono block in place.
///
/// Per sample: level = |x|; the envelope follows the level with the attack
/// coefficient when rising and the release coefficient when falling. With
/// L = envelope in dB, the hard-knee static curve is
/// `out_db = min(L, T + (L - T)/R)`, and the applied gain in dB is
/// `min(0, (T - L) * (1 - 1/R)) + makeup`. Ratio 1 therefore reduces to an
/// exact makeup gain.
#[allow(clippy::too_many_arguments)]
pub fn compressor_process(
    x: &mut [f64],
    sample_rate: u32,
    threshold_db: f64,
    ratio: f64,
    attack_ms: f64,
    release_ms: f64,
    makeup_db: f64,
    state: &mut CompressorState,
) {
    let alpha_a = smoothing_alpha(sample_rate, attack_ms);
    let alpha_r = smoothing_alpha(sample_rate, release_ms);
    let makeup = 10f64.powf(makeup_db / 20.0);
    let slope = 1.0 - 1.0 / ratio;
    let mut env = state.envelope;

    for v in x.iter_mut() {
        let level = v.abs();
        let alpha = if level > env { alpha_a } else { alpha_r };
        env = alpha * env + (1.0 - alpha) * level;

        let gain = if slope == 0.0 {
            makeup
        } else {
            let level_db = if env > 0.0 {
                (20.0 * env.log10()).max(LEVEL_FLOOR_DB)
            } else {
                LEVEL_FLOOR_DB
            };
            let reduction_db = ((threshold_db - level_db) * slope).min(0.0);
            10f64.powf(reduction_db / 20.0) * makeup
        };
        *v *= gain;
    }
    state.envelope = env;
}
