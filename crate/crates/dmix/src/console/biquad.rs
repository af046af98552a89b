//! Second-order EQ sections with RBJ cookbook shelving/peaking responses.

use super::ConsoleError;

/// Normalized biquad coefficients (a0 = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub const IDENTITY: Biquad = Biquad {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    /// Both poles strictly inside the unit circle.
    ///
    /// For z^2 + a1 z + a2 the stability triangle is |a2| < 1 and
    /// |a1| < 1 + a2.
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// Magnitude response at normalized angular frequency w (radians per
    /// sample): |H(e^{jw})|.
    pub fn magnitude_at(&self, w: f64) -> f64 {
        let (c1, s1) = (w.cos(), w.sin());
        let (c2, s2) = ((2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b0 + self.b1 * c1 + self.b2 * c2;
        let num_im = -(self.b1 * s1 + self.b2 * s2);
        let den_re = 1.0 + self.a1 * c1 + self.a2 * c2;
        let den_im = -(self.a1 * s1 + self.a2 * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }

    /// Process a block in place, direct form II transposed.
    pub fn process_block(&self, state: &mut BiquadState, x: &mut [f64]) {
        let (mut z1, mut z2) = (state.z1, state.z2);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b0 * input + z1;
            z1 = self.b1 * input - self.a1 * y + z2;
            z2 = self.b2 * input - self.a2 * y;
            *v = y;
        }
        state.z1 = z1;
        state.z2 = z2;
    }
}

/// Two delay registers of one section.
#[derive(Debug, Clone, Copy, Default)]
pub struct BiquadState {
    pub z1: f64,
    pub z2: f64,
}

impl BiquadState {
    pub fn reset(&mut self) {
        self.z1 = 0.0;
        self.z2 = 0.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqKind {
    LowShelf,
    Peak,
    HighShelf,
}

/// RBJ cookbook coefficients for a shelving or peaking section.
///
/// Shelves use slope S = 1 (no Q parameter); `q` is ignored for them.
/// Zero gain returns the exact identity section.
pub fn eq_coefficients(
    kind: EqKind,
    gain_db: f64,
    freq_hz: f64,
    q: f64,
    sample_rate: u32,
) -> Result<Biquad, ConsoleError> {
    // Zero gain is the identity for any frequency; only an acting filter
    // needs its center below Nyquist.
    if gain_db == 0.0 {
        return Ok(Biquad::IDENTITY);
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(freq_hz > 0.0 && freq_hz < nyquist) {
        return Err(ConsoleError::FrequencyAboveNyquist {
            freq: freq_hz,
            nyquist,
        });
    }

    let a = 10f64.powf(gain_db / 40.0);
    let w0 = 2.0 * std::f64::consts::PI * freq_hz / sample_rate as f64;
    let (cos_w0, sin_w0) = (w0.cos(), w0.sin());

    let (b0, b1, b2, a0, a1, a2) = match kind {
        EqKind::Peak => {
            let alpha = sin_w0 / (2.0 * q);
            (
                1.0 + alpha * a,
                -2.0 * cos_w0,
                1.0 - alpha * a,
                1.0 + alpha / a,
                -2.0 * cos_w0,
                1.0 - alpha / a,
            )
        }
        EqKind::LowShelf => {
            // S = 1: alpha = sin(w0)/2 * sqrt(2)
            let alpha = sin_w0 / 2.0 * std::f64::consts::SQRT_2;
            let two_rt_a_alpha = 2.0 * a.sqrt() * alpha;
            (
                a * ((a + 1.0) - (a - 1.0) * cos_w0 + two_rt_a_alpha),
                2.0 * a * ((a - 1.0) - (a + 1.0) * cos_w0),
                a * ((a + 1.0) - (a - 1.0) * cos_w0 - two_rt_a_alpha),
                (a + 1.0) + (a - 1.0) * cos_w0 + two_rt_a_alpha,
                -2.0 * ((a - 1.0) + (a + 1.0) * cos_w0),
                (a + 1.0) + (a - 1.0) * cos_w0 - two_rt_a_alpha,
            )
        }
        EqKind::HighShelf => {
            let alpha = sin_w0 / 2.0 * std::f64::consts::SQRT_2;
            let two_rt_a_alpha = 2.0 * a.sqrt() * alpha;
            (
                a * ((a + 1.0) + (a - 1.0) * cos_w0 + two_rt_a_alpha),
                -2.0 * a * ((a - 1.0) + (a + 1.0) * cos_w0),
                a * ((a + 1.0) + (a - 1.0) * cos_w0 - two_rt_a_alpha),
                (a + 1.0) - (a - 1.0) * cos_w0 + two_rt_a_alpha,
                2.0 * ((a - 1.0) - (a + 1.0) * cos_w0),
                (a + 1.0) - (a - 1.0) * cos_w0 - two_rt_a_alpha,
            )
        }
    };

    Ok(Biquad {
        b0: b0 / a0,
        b1: b1 / a0,
        b2: b2 / a0,
        a1: a1 / a0,
        a2: a2 / a0,
    })
}
