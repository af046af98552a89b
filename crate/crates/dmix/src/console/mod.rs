//! Reference mixing-console channel and stereo bus.
//!
//! The channel chain is gain → polarity → EQ (low shelf, three peaking
//! bands, high shelf) → compressor → reverb → fader → constant-power pan.
//! Processing is sample-exact, block-based with persistent state, and
//! deterministic, so it serves both as ground truth for emulation training
//! and as the renderer for predicted parameters.

mod biquad;
mod compressor;
mod reverb;

pub use biquad::{eq_coefficients, Biquad, BiquadState, EqKind};
pub use compressor::{compressor_process, CompressorState};
pub use reverb::{reverb_process, ReverbState};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{db_to_linear, AudioBuffer};
use crate::util::exact_sum;

#[derive(Debug, Error)]
pub enum ConsoleError {
    #[error("parameter {name} = {value} outside [{lo}, {hi}]")]
    ParamOutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("polarity must be +1 or -1, got {0}")]
    BadPolarity(f64),
    #[error("EQ frequency {freq} Hz at or above Nyquist ({nyquist} Hz)")]
    FrequencyAboveNyquist { freq: f64, nyquist: f64 },
    #[error("pan {0} outside [0, 1]")]
    PanOutOfRange(f64),
    #[error("expected mono input, got {0} channels")]
    NotMono(usize),
    #[error("track {index} length {got} differs from {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("track {index} sample rate {got} differs from {expected}")]
    RateMismatch { index: usize, expected: u32, got: u32 },
    #[error("{tracks} tracks but {params} parameter records")]
    CountMismatch { tracks: usize, params: usize },
    #[error("console needs at least one track")]
    NoTracks,
    #[error("params file schema version {got}, expected {expected}")]
    SchemaVersion { expected: u32, got: u32 },
    #[error("params json: {0}")]
    Json(String),
}

/// Number of parameters in one channel record.
pub const PARAM_COUNT: usize = 26;
/// Number of parameters conditioning the emulation network: the EQ,
/// compressor, and reverb subset.
pub const COND_PARAM_COUNT: usize = 22;
/// Index range of the conditioning subset inside the 26-vector.
pub const COND_RANGE: std::ops::Range<usize> = 2..24;
/// Params-file schema version.
pub const PARAMS_SCHEMA_VERSION: u32 = 1;

/// How a physical parameter maps to its normalized [0, 1] form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamScale {
    /// Linear map over [lo, hi]: dB values, ratios, unit-range amounts.
    Linear,
    /// Logarithmic map over [lo, hi]: frequencies, time constants, Q.
    Log,
    /// +1 / -1 with the normalized threshold at 0.5.
    Polarity,
}

/// Name, range, and scaling of one channel parameter.
#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub scale: ParamScale,
}

/// The 26 parameters, in canonical vector order.
pub const PARAM_SPECS: [ParamSpec; PARAM_COUNT] = [
    ParamSpec { name: "gain_db", lo: -24.0, hi: 24.0, scale: ParamScale::Linear },
    ParamSpec { name: "polarity", lo: -1.0, hi: 1.0, scale: ParamScale::Polarity },
    ParamSpec { name: "eq_ls_gain_db", lo: -24.0, hi: 24.0, scale: ParamScale::Linear },
    ParamSpec { name: "eq_ls_freq", lo: 20.0, hi: 1000.0, scale: ParamScale::Log },
    ParamSpec { name: "eq_b1_gain_db", lo: -24.0, hi: 24.0, scale: ParamScale::Linear },
    ParamSpec { name: "eq_b1_freq", lo: 82.0, hi: 3900.0, scale: ParamScale::Log },
    ParamSpec { name: "eq_b1_q", lo: 0.1, hi: 10.0, scale: ParamScale::Log },
    ParamSpec { name: "eq_b2_gain_db", lo: -24.0, hi: 24.0, scale: ParamScale::Linear },
    ParamSpec { name: "eq_b2_freq", lo: 180.0, hi: 8600.0, scale: ParamScale::Log },
    ParamSpec { name: "eq_b2_q", lo: 0.1, hi: 10.0, scale: ParamScale::Log },
    ParamSpec { name: "eq_b3_gain_db", lo: -24.0, hi: 24.0, scale: ParamScale::Linear },
    ParamSpec { name: "eq_b3_freq", lo: 220.0, hi: 10000.0, scale: ParamScale::Log },
    ParamSpec { name: "eq_b3_q", lo: 0.1, hi: 10.0, scale: ParamScale::Log },
    ParamSpec { name: "eq_hs_gain_db", lo: -24.0, hi: 24.0, scale: ParamScale::Linear },
    ParamSpec { name: "eq_hs_freq", lo: 2000.0, hi: 16000.0, scale: ParamScale::Log },
    ParamSpec { name: "comp_threshold_db", lo: -60.0, hi: 0.0, scale: ParamScale::Linear },
    ParamSpec { name: "comp_ratio", lo: 1.0, hi: 20.0, scale: ParamScale::Linear },
    ParamSpec { name: "comp_attack_ms", lo: 0.1, hi: 100.0, scale: ParamScale::Log },
    ParamSpec { name: "comp_release_ms", lo: 10.0, hi: 1000.0, scale: ParamScale::Log },
    ParamSpec { name: "comp_makeup_db", lo: 0.0, hi: 24.0, scale: ParamScale::Linear },
    ParamSpec { name: "rev_room_size", lo: 0.0, hi: 1.0, scale: ParamScale::Linear },
    ParamSpec { name: "rev_damping", lo: 0.0, hi: 1.0, scale: ParamScale::Linear },
    ParamSpec { name: "rev_wet", lo: 0.0, hi: 1.0, scale: ParamScale::Linear },
    ParamSpec { name: "rev_dry", lo: 0.0, hi: 1.0, scale: ParamScale::Linear },
    ParamSpec { name: "fader_db", lo: -80.0, hi: 12.0, scale: ParamScale::Linear },
    ParamSpec { name: "pan", lo: 0.0, hi: 1.0, scale: ParamScale::Linear },
];

impl ParamSpec {
    /// Physical value → normalized [0, 1].
    pub fn normalize(&self, v: f64) -> f64 {
        match self.scale {
            ParamScale::Linear => (v - self.lo) / (self.hi - self.lo),
            ParamScale::Log => (v / self.lo).ln() / (self.hi / self.lo).ln(),
            ParamScale::Polarity => {
                if v >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Normalized [0, 1] → physical value.
    pub fn denormalize(&self, n: f64) -> f64 {
        match self.scale {
            ParamScale::Linear => self.lo + n * (self.hi - self.lo),
            ParamScale::Log => self.lo * (self.hi / self.lo).powf(n),
            ParamScale::Polarity => {
                if n >= 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// The complete human-readable parameter record for one console channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub gain_db: f64,
    /// +1.0 or -1.0.
    pub polarity: f64,
    pub eq_ls_gain_db: f64,
    pub eq_ls_freq: f64,
    pub eq_b1_gain_db: f64,
    pub eq_b1_freq: f64,
    pub eq_b1_q: f64,
    pub eq_b2_gain_db: f64,
    pub eq_b2_freq: f64,
    pub eq_b2_q: f64,
    pub eq_b3_gain_db: f64,
    pub eq_b3_freq: f64,
    pub eq_b3_q: f64,
    pub eq_hs_gain_db: f64,
    pub eq_hs_freq: f64,
    pub comp_threshold_db: f64,
    pub comp_ratio: f64,
    pub comp_attack_ms: f64,
    pub comp_release_ms: f64,
    pub comp_makeup_db: f64,
    pub rev_room_size: f64,
    pub rev_damping: f64,
    pub rev_wet: f64,
    pub rev_dry: f64,
    pub fader_db: f64,
    pub pan: f64,
}

impl ChannelParams {
    /// All processors neutral: unity gain, flat EQ, 1:1 compression, dry
    /// reverb, 0 dB fader, center pan.
    pub fn neutral() -> Self {
        Self {
            gain_db: 0.0,
            polarity: 1.0,
            eq_ls_gain_db: 0.0,
            eq_ls_freq: 100.0,
            eq_b1_gain_db: 0.0,
            eq_b1_freq: 400.0,
            eq_b1_q: 0.71,
            eq_b2_gain_db: 0.0,
            eq_b2_freq: 1000.0,
            eq_b2_q: 0.71,
            eq_b3_gain_db: 0.0,
            eq_b3_freq: 3000.0,
            eq_b3_q: 0.71,
            eq_hs_gain_db: 0.0,
            eq_hs_freq: 8000.0,
            comp_threshold_db: 0.0,
            comp_ratio: 1.0,
            comp_attack_ms: 10.0,
            comp_release_ms: 100.0,
            comp_makeup_db: 0.0,
            rev_room_size: 0.5,
            rev_damping: 0.5,
            rev_wet: 0.0,
            rev_dry: 1.0,
            fader_db: 0.0,
            pan: 0.5,
        }
    }

    /// The record as a vector in canonical order.
    pub fn to_vec(&self) -> [f64; PARAM_COUNT] {
        [
            self.gain_db,
            self.polarity,
            self.eq_ls_gain_db,
            self.eq_ls_freq,
            self.eq_b1_gain_db,
            self.eq_b1_freq,
            self.eq_b1_q,
            self.eq_b2_gain_db,
            self.eq_b2_freq,
            self.eq_b2_q,
            self.eq_b3_gain_db,
            self.eq_b3_freq,
            self.eq_b3_q,
            self.eq_hs_gain_db,
            self.eq_hs_freq,
            self.comp_threshold_db,
            self.comp_ratio,
            self.comp_attack_ms,
            self.comp_release_ms,
            self.comp_makeup_db,
            self.rev_room_size,
            self.rev_damping,
            self.rev_wet,
            self.rev_dry,
            self.fader_db,
            self.pan,
        ]
    }

    pub fn from_vec(v: &[f64; PARAM_COUNT]) -> Self {
        Self {
            gain_db: v[0],
            polarity: v[1],
            eq_ls_gain_db: v[2],
            eq_ls_freq: v[3],
            eq_b1_gain_db: v[4],
            eq_b1_freq: v[5],
            eq_b1_q: v[6],
            eq_b2_gain_db: v[7],
            eq_b2_freq: v[8],
            eq_b2_q: v[9],
            eq_b3_gain_db: v[10],
            eq_b3_freq: v[11],
            eq_b3_q: v[12],
            eq_hs_gain_db: v[13],
            eq_hs_freq: v[14],
            comp_threshold_db: v[15],
            comp_ratio: v[16],
            comp_attack_ms: v[17],
            comp_release_ms: v[18],
            comp_makeup_db: v[19],
            rev_room_size: v[20],
            rev_damping: v[21],
            rev_wet: v[22],
            rev_dry: v[23],
            fader_db: v[24],
            pan: v[25],
        }
    }

    /// Normalized [0, 1] form in canonical order.
    pub fn normalize(&self) -> [f64; PARAM_COUNT] {
        let v = self.to_vec();
        let mut out = [0.0; PARAM_COUNT];
        for (i, spec) in PARAM_SPECS.iter().enumerate() {
            out[i] = spec.normalize(v[i]);
        }
        out
    }

    /// Physical record from a normalized vector.
    pub fn denormalize(n: &[f64; PARAM_COUNT]) -> Self {
        let mut v = [0.0; PARAM_COUNT];
        for (i, spec) in PARAM_SPECS.iter().enumerate() {
            v[i] = spec.denormalize(n[i]);
        }
        Self::from_vec(&v)
    }

    /// The normalized EQ/compressor/reverb subset that conditions the
    /// emulation network.
    pub fn cond_vector(&self) -> [f64; COND_PARAM_COUNT] {
        let n = self.normalize();
        let mut out = [0.0; COND_PARAM_COUNT];
        out.copy_from_slice(&n[COND_RANGE]);
        out
    }

    /// Check every value against its declared range.
    pub fn validate(&self) -> Result<(), ConsoleError> {
        let v = self.to_vec();
        for (i, spec) in PARAM_SPECS.iter().enumerate() {
            if spec.scale == ParamScale::Polarity {
                if v[i] != 1.0 && v[i] != -1.0 {
                    return Err(ConsoleError::BadPolarity(v[i]));
                }
                continue;
            }
            if !(v[i] >= spec.lo && v[i] <= spec.hi) {
                return Err(ConsoleError::ParamOutOfRange {
                    name: spec.name,
                    value: v[i],
                    lo: spec.lo,
                    hi: spec.hi,
                });
            }
        }
        Ok(())
    }
}

/// Sampling mode for random channel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    /// Random gain in [-12, +12] dB and random pan; all else neutral.
    Basic,
    /// Every parameter uniform over its normalized range.
    Full,
}

/// Deterministic random channel parameters.
pub fn random_params(seed: u64, mode: ParamMode) -> ChannelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_params_with(&mut rng, mode)
}

/// Random channel parameters from a caller-managed RNG.
pub fn random_params_with(rng: &mut impl Rng, mode: ParamMode) -> ChannelParams {
    match mode {
        ParamMode::Basic => {
            let mut p = ChannelParams::neutral();
            p.gain_db = rng.random_range(-12.0..=12.0);
            p.pan = rng.random_range(0.0..=1.0);
            p
        }
        ParamMode::Full => {
            let mut n = [0.0; PARAM_COUNT];
            for slot in n.iter_mut() {
                *slot = rng.random_range(0.0..1.0);
            }
            ChannelParams::denormalize(&n)
        }
    }
}

/// Random channel parameters guaranteed renderable at a sample rate: EQ
/// center frequencies are capped at 0.45 * sample_rate, and a band whose
/// whole frequency range sits above the cap is neutralized (zero gain).
/// At the canonical 44.1 kHz nothing is capped.
pub fn random_params_for_rate(
    rng: &mut impl Rng,
    mode: ParamMode,
    sample_rate: u32,
) -> ChannelParams {
    let mut p = random_params_with(rng, mode);
    let cap = 0.45 * sample_rate as f64;
    let mut fit = |freq: &mut f64, gain: &mut f64, lo: f64| {
        if cap < lo {
            *gain = 0.0;
        } else if *freq > cap {
            *freq = cap;
        }
    };
    fit(&mut p.eq_ls_freq, &mut p.eq_ls_gain_db, PARAM_SPECS[3].lo);
    fit(&mut p.eq_b1_freq, &mut p.eq_b1_gain_db, PARAM_SPECS[5].lo);
    fit(&mut p.eq_b2_freq, &mut p.eq_b2_gain_db, PARAM_SPECS[8].lo);
    fit(&mut p.eq_b3_freq, &mut p.eq_b3_gain_db, PARAM_SPECS[11].lo);
    fit(&mut p.eq_hs_freq, &mut p.eq_hs_gain_db, PARAM_SPECS[14].lo);
    p
}

/// Apply gain (dB) and polarity, elementwise. Shape preserved.
pub fn apply_gain(x: &AudioBuffer, gain_db: f64, polarity: f64) -> AudioBuffer {
    let g = polarity * db_to_linear(gain_db);
    let mut out = x.clone();
    for c in 0..out.channels() {
        for v in out.channel_mut(c) {
            *v *= g;
        }
    }
    out
}

/// Constant-power pan of a mono buffer into stereo.
///
/// theta = pan * pi/2; left = cos(theta) * x, right = sin(theta) * x, so
/// left^2 + right^2 = x^2 for every pan position.
pub fn pan_stereo(x: &AudioBuffer, pan: f64) -> Result<AudioBuffer, ConsoleError> {
    if !x.is_mono() {
        return Err(ConsoleError::NotMono(x.channels()));
    }
    if !(0.0..=1.0).contains(&pan) {
        return Err(ConsoleError::PanOutOfRange(pan));
    }
    let theta = pan * std::f64::consts::FRAC_PI_2;
    let (l, r) = (theta.cos(), theta.sin());
    let src = x.channel(0);
    let left = src.iter().map(|&v| l * v).collect();
    let right = src.iter().map(|&v| r * v).collect();
    Ok(AudioBuffer::stereo(left, right, x.sample_rate()))
}

/// Persistent state of one channel's stateful processors.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub eq: [BiquadState; 5],
    pub comp: CompressorState,
    pub reverb: ReverbState,
}

impl ChannelState {
    pub fn new(sample_rate: u32) -> Self {
        Self {
            eq: Default::default(),
            comp: CompressorState::default(),
            reverb: ReverbState::new(sample_rate),
        }
    }

    pub fn reset(&mut self) {
        for s in &mut self.eq {
            s.reset();
        }
        self.comp.reset();
        self.reverb.reset();
    }
}

/// One console channel: validated parameters, precomputed filter
/// coefficients, and processor state. Output is independent of the block
/// size used to feed it.
pub struct ChannelProcessor {
    params: ChannelParams,
    sample_rate: u32,
    eq_coeffs: [Biquad; 5],
    state: ChannelState,
}

impl ChannelProcessor {
    pub fn new(params: ChannelParams, sample_rate: u32) -> Result<Self, ConsoleError> {
        params.validate()?;
        let eq_coeffs = eq_sections(&params, sample_rate)?;
        Ok(Self {
            params,
            sample_rate,
            eq_coeffs,
            state: ChannelState::new(sample_rate),
        })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }

    /// Process one mono block through the full chain; returns (left, right).
    pub fn process_block(&mut self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let pre = p.polarity * db_to_linear(p.gain_db);
        let mut y: Vec<f64> = x.iter().map(|&v| pre * v).collect();
        for (biquad, state) in self.eq_coeffs.iter().zip(self.state.eq.iter_mut()) {
            biquad.process_block(state, &mut y);
        }
        compressor_process(
            &mut y,
            self.sample_rate,
            p.comp_threshold_db,
            p.comp_ratio,
            p.comp_attack_ms,
            p.comp_release_ms,
            p.comp_makeup_db,
            &mut self.state.comp,
        );
        reverb_process(&mut y, p.rev_room_size, p.rev_damping, p.rev_wet, p.rev_dry, &mut self.state.reverb);
        let fader = db_to_linear(p.fader_db);
        let theta = p.pan * std::f64::consts::FRAC_PI_2;
        let (gl, gr) = (fader * theta.cos(), fader * theta.sin());
        let left = y.iter().map(|&v| gl * v).collect();
        let right = y.iter().map(|&v| gr * v).collect();
        (left, right)
    }
}

/// The four cascaded EQ sections plus the low shelf, in chain order.
fn eq_sections(p: &ChannelParams, sample_rate: u32) -> Result<[Biquad; 5], ConsoleError> {
    Ok([
        eq_coefficients(EqKind::LowShelf, p.eq_ls_gain_db, p.eq_ls_freq, 0.0, sample_rate)?,
        eq_coefficients(EqKind::Peak, p.eq_b1_gain_db, p.eq_b1_freq, p.eq_b1_q, sample_rate)?,
        eq_coefficients(EqKind::Peak, p.eq_b2_gain_db, p.eq_b2_freq, p.eq_b2_q, sample_rate)?,
        eq_coefficients(EqKind::Peak, p.eq_b3_gain_db, p.eq_b3_freq, p.eq_b3_q, sample_rate)?,
        eq_coefficients(EqKind::HighShelf, p.eq_hs_gain_db, p.eq_hs_freq, 0.0, sample_rate)?,
    ])
}

/// Process a whole mono buffer through a fresh channel; returns stereo.
pub fn channel_process(x: &AudioBuffer, params: &ChannelParams) -> Result<AudioBuffer, ConsoleError> {
    if !x.is_mono() {
        return Err(ConsoleError::NotMono(x.channels()));
    }
    let mut proc = ChannelProcessor::new(*params, x.sample_rate())?;
    let (l, r) = proc.process_block(x.channel(0));
    Ok(AudioBuffer::stereo(l, r, x.sample_rate()))
}

/// The EQ → compressor → reverb sub-chain on its own (the part the
/// emulation network models), mono in, mono out, fresh state.
pub fn process_eq_comp_reverb(
    x: &AudioBuffer,
    params: &ChannelParams,
) -> Result<AudioBuffer, ConsoleError> {
    if !x.is_mono() {
        return Err(ConsoleError::NotMono(x.channels()));
    }
    params.validate()?;
    let sample_rate = x.sample_rate();
    let coeffs = eq_sections(params, sample_rate)?;
    let mut state = ChannelState::new(sample_rate);
    let mut y = x.channel(0).to_vec();
    for (biquad, st) in coeffs.iter().zip(state.eq.iter_mut()) {
        biquad.process_block(st, &mut y);
    }
    compressor_process(
        &mut y,
        sample_rate,
        params.comp_threshold_db,
        params.comp_ratio,
        params.comp_attack_ms,
        params.comp_release_ms,
        params.comp_makeup_db,
        &mut state.comp,
    );
    reverb_process(
        &mut y,
        params.rev_room_size,
        params.rev_damping,
        params.rev_wet,
        params.rev_dry,
        &mut state.reverb,
    );
    Ok(AudioBuffer::mono(y, sample_rate))
}

/// Mix mono tracks through their channels and sum to a stereo bus.
///
/// Per-sample summation is exact (correctly rounded), so jointly permuting
/// tracks and params leaves the mix bitwise unchanged.
pub fn console_mix(
    tracks: &[AudioBuffer],
    params: &[ChannelParams],
) -> Result<AudioBuffer, ConsoleError> {
    if tracks.is_empty() {
        return Err(ConsoleError::NoTracks);
    }
    if tracks.len() != params.len() {
        return Err(ConsoleError::CountMismatch {
            tracks: tracks.len(),
            params: params.len(),
        });
    }
    let frames = tracks[0].frames();
    let rate = tracks[0].sample_rate();
    for (i, t) in tracks.iter().enumerate() {
        if t.frames() != frames {
            return Err(ConsoleError::LengthMismatch {
                index: i,
                expected: frames,
                got: t.frames(),
            });
        }
        if t.sample_rate() != rate {
            return Err(ConsoleError::RateMismatch {
                index: i,
                expected: rate,
                got: t.sample_rate(),
            });
        }
    }

    let rendered: Vec<AudioBuffer> = tracks
        .iter()
        .zip(params)
        .map(|(t, p)| channel_process(t, p))
        .collect::<Result<_, _>>()?;

    let mut out = AudioBuffer::zeros(2, frames, rate);
    let mut terms = vec![0.0; rendered.len()];
    for c in 0..2 {
        for f in 0..frames {
            for (k, r) in rendered.iter().enumerate() {
                terms[k] = r.channel(c)[f];
            }
            out.channel_mut(c)[f] = exact_sum(&terms);
        }
    }
    Ok(out)
}

/// Parameters for one named track in a params file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackParams {
    pub name: String,
    #[serde(flatten)]
    pub params: ChannelParams,
}

/// The on-disk human-editable parameter document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pub schema_version: u32,
    pub tracks: Vec<TrackParams>,
}

impl ParamsFile {
    pub fn new(tracks: Vec<TrackParams>) -> Self {
        Self {
            schema_version: PARAMS_SCHEMA_VERSION,
            tracks,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, ConsoleError> {
        let file: ParamsFile =
            serde_json::from_str(s).map_err(|e| ConsoleError::Json(e.to_string()))?;
        if file.schema_version != PARAMS_SCHEMA_VERSION {
            return Err(ConsoleError::SchemaVersion {
                expected: PARAMS_SCHEMA_VERSION,
                got: file.schema_version,
            });
        }
        for t in &file.tracks {
            t.params.validate()?;
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests;
