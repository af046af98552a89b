//! Audio buffers, WAV file I/O, patch extraction, and dB conversions.
//!
//! All internal processing runs at f64; WAV files convert at the boundary.
//! Integer samples map to float by dividing by 2^(bits-1); float samples map
//! back by clipping to [-1, 1], scaling by 2^(bits-1) and rounding half away
//! from zero.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Canonical sample rate of the toolkit. Other rates are accepted but never
/// resampled; mixing tracks at different rates is an error.
pub const CANONICAL_SAMPLE_RATE: u32 = 44_100;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed wav header: {0}")]
    MalformedHeader(String),
    #[error("unsupported wav format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated data chunk: header declares {declared} bytes, {present} present")]
    TruncatedData { declared: usize, present: usize },
    #[error("non-finite sample at channel {channel}, frame {frame}")]
    NonFinite { channel: usize, frame: usize },
    #[error("source too short: {source_frames} frames, patch needs {patch_frames}")]
    SourceTooShort {
        source_frames: usize,
        patch_frames: usize,
    },
    #[error("non-positive amplitude {0} has no dB value")]
    NonPositiveAmplitude(f64),
    #[error("invalid patch duration {0}")]
    InvalidDuration(f64),
    #[error("sample rate mismatch: {a} vs {b}")]
    RateMismatch { a: u32, b: u32 },
    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
}

/// Multichannel sample matrix with a sample rate.
///
/// Samples are stored row-major, one row per channel. The nominal range is
/// [-1, 1] but values outside it are legal mid-pipeline; only integer WAV
/// output clips.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    channels: usize,
    frames: usize,
    sample_rate: u32,
    data: Vec<f64>,
}

impl AudioBuffer {
    pub fn zeros(channels: usize, frames: usize, sample_rate: u32) -> Self {
        assert!(channels >= 1, "buffer needs at least one channel");
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            channels,
            frames,
            sample_rate,
            data: vec![0.0; channels * frames],
        }
    }

    /// Build a mono buffer from raw samples.
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            channels: 1,
            frames: samples.len(),
            sample_rate,
            data: samples,
        }
    }

    /// Build a buffer from per-channel sample vectors, which must all have
    /// the same length.
    pub fn from_channels(channels: Vec<Vec<f64>>, sample_rate: u32) -> Self {
        assert!(!channels.is_empty(), "buffer needs at least one channel");
        assert!(sample_rate > 0, "sample rate must be positive");
        let frames = channels[0].len();
        assert!(
            channels.iter().all(|c| c.len() == frames),
            "all channels must have equal length"
        );
        let mut data = Vec::with_capacity(channels.len() * frames);
        for c in &channels {
            data.extend_from_slice(c);
        }
        Self {
            channels: channels.len(),
            frames,
            sample_rate,
            data,
        }
    }

    /// Build a stereo buffer from left/right sample vectors.
    pub fn stereo(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Self {
        assert_eq!(left.len(), right.len(), "stereo channels must match");
        Self::from_channels(vec![left, right], sample_rate)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.frames..(c + 1) * self.frames]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.frames..(c + 1) * self.frames]
    }

    pub fn is_mono(&self) -> bool {
        self.channels == 1
    }

    pub fn is_stereo(&self) -> bool {
        self.channels == 2
    }

    /// Error if any sample is NaN or infinite.
    pub fn check_finite(&self) -> Result<(), AudioError> {
        for c in 0..self.channels {
            if let Some(frame) = self.channel(c).iter().position(|v| !v.is_finite()) {
                return Err(AudioError::NonFinite { channel: c, frame });
            }
        }
        Ok(())
    }

    /// Contiguous excerpt of all channels: frames [start, start + len).
    pub fn slice_frames(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.frames, "slice out of range");
        let mut out = Self::zeros(self.channels, len, self.sample_rate);
        for c in 0..self.channels {
            out.channel_mut(c)
                .copy_from_slice(&self.channel(c)[start..start + len]);
        }
        out
    }
}

/// Bit depth for WAV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Pcm24,
    Float32,
}

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

/// Read a WAV file: PCM 16/24-bit or IEEE float-32, any channel count.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::FileNotFound(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    parse_wav(&bytes)
}

fn parse_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedHeader(
            "missing RIFF/WAVE signature".into(),
        ));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<(usize, usize)> = None; // offset, declared size
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if body + 16 > bytes.len() || size < 16 {
                    return Err(AudioError::MalformedHeader("short fmt chunk".into()));
                }
                let f = &bytes[body..];
                let format = u16::from_le_bytes([f[0], f[1]]);
                let channels = u16::from_le_bytes([f[2], f[3]]);
                let rate = u32::from_le_bytes([f[4], f[5], f[6], f[7]]);
                let bits = u16::from_le_bytes([f[14], f[15]]);
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => {
                data = Some((body, size));
                // The data chunk may legitimately be the last one and
                // truncated on disk; detected below.
            }
            _ => {}
        }
        // Chunks are word aligned; odd sizes carry a pad byte.
        pos = body + size + (size & 1);
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| AudioError::MalformedHeader("missing fmt chunk".into()))?;
    let (data_off, data_size) =
        data.ok_or_else(|| AudioError::MalformedHeader("missing data chunk".into()))?;

    if channels == 0 {
        return Err(AudioError::MalformedHeader("zero channels".into()));
    }
    if rate == 0 {
        return Err(AudioError::MalformedHeader("zero sample rate".into()));
    }
    let bytes_per_sample = match (format, bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_PCM, 24) => 3,
        (FORMAT_IEEE_FLOAT, 32) => 4,
        _ => {
            return Err(AudioError::UnsupportedFormat(format!(
                "format tag {format}, {bits} bits"
            )))
        }
    };

    let present = bytes.len().saturating_sub(data_off);
    if present < data_size {
        return Err(AudioError::TruncatedData {
            declared: data_size,
            present,
        });
    }
    let payload = &bytes[data_off..data_off + data_size];
    let block = bytes_per_sample * channels as usize;
    if block == 0 || payload.len() % block != 0 {
        return Err(AudioError::MalformedHeader(
            "data size not a multiple of the frame size".into(),
        ));
    }
    let frames = payload.len() / block;
    let nch = channels as usize;

    let mut buf = AudioBuffer::zeros(nch, frames, rate);
    for frame in 0..frames {
        for c in 0..nch {
            let off = frame * block + c * bytes_per_sample;
            let v = match (format, bits) {
                (FORMAT_PCM, 16) => {
                    let s = i16::from_le_bytes([payload[off], payload[off + 1]]);
                    s as f64 / 32768.0
                }
                (FORMAT_PCM, 24) => {
                    let s = i32::from_le_bytes([
                        0,
                        payload[off],
                        payload[off + 1],
                        payload[off + 2],
                    ]) >> 8;
                    s as f64 / 8_388_608.0
                }
                (FORMAT_IEEE_FLOAT, 32) => {
                    let s = f32::from_le_bytes([
                        payload[off],
                        payload[off + 1],
                        payload[off + 2],
                        payload[off + 3],
                    ]);
                    s as f64
                }
                _ => unreachable!(),
            };
            buf.channel_mut(c)[frame] = v;
        }
    }
    buf.check_finite()?;
    Ok(buf)
}

/// Write a WAV file at the given bit depth.
///
/// Float32 output stores samples as-is (lossless for f32-representable
/// values); integer depths clip to [-1, 1] and round half away from zero.
pub fn write_wav(
    buffer: &AudioBuffer,
    path: impl AsRef<Path>,
    depth: BitDepth,
) -> Result<(), AudioError> {
    buffer.check_finite()?;
    let (format, bits, bytes_per_sample): (u16, u16, usize) = match depth {
        BitDepth::Pcm16 => (FORMAT_PCM, 16, 2),
        BitDepth::Pcm24 => (FORMAT_PCM, 24, 3),
        BitDepth::Float32 => (FORMAT_IEEE_FLOAT, 32, 4),
    };
    let nch = buffer.channels();
    let frames = buffer.frames();
    let block = nch * bytes_per_sample;
    let data_size = frames * block;

    let mut payload = Vec::with_capacity(data_size);
    for frame in 0..frames {
        for c in 0..nch {
            let v = buffer.channel(c)[frame];
            match depth {
                BitDepth::Pcm16 => {
                    let q = quantize(v, 32768.0, i16::MIN as i64, i16::MAX as i64) as i16;
                    payload.extend_from_slice(&q.to_le_bytes());
                }
                BitDepth::Pcm24 => {
                    let q = quantize(v, 8_388_608.0, -8_388_608, 8_388_607) as i32;
                    payload.extend_from_slice(&q.to_le_bytes()[0..3]);
                }
                BitDepth::Float32 => {
                    payload.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
    }

    // fact chunk is required for non-PCM formats.
    let has_fact = format == FORMAT_IEEE_FLOAT;
    let riff_size = 4 + (8 + 16) + if has_fact { 8 + 4 } else { 0 } + (8 + data_size);

    let mut out = Vec::with_capacity(riff_size + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(riff_size as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&(nch as u16).to_le_bytes());
    out.extend_from_slice(&buffer.sample_rate().to_le_bytes());
    let byte_rate = buffer.sample_rate() * block as u32;
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&(block as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    if has_fact {
        out.extend_from_slice(b"fact");
        out.extend_from_slice(&4u32.to_le_bytes());
        out.extend_from_slice(&(frames as u32).to_le_bytes());
    }
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_size as u32).to_le_bytes());
    out.extend_from_slice(&payload);

    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Clip to [-1, 1], scale by `scale`, round half away from zero, clamp to
/// the integer range.
fn quantize(v: f64, scale: f64, min: i64, max: i64) -> i64 {
    let clipped = v.clamp(-1.0, 1.0);
    // f64::round rounds half away from zero.
    let q = (clipped * scale).round() as i64;
    q.clamp(min, max)
}

/// A request for a random contiguous excerpt.
#[derive(Debug, Clone, Copy)]
pub struct PatchSpec {
    pub duration_s: f64,
    pub seed: u64,
}

/// Extract a random contiguous patch of `round(duration_s * sample_rate)`
/// frames. The start offset is uniform over all valid positions and fully
/// determined by the seed.
pub fn sample_patch(buffer: &AudioBuffer, spec: &PatchSpec) -> Result<AudioBuffer, AudioError> {
    if !(spec.duration_s > 0.0) {
        return Err(AudioError::InvalidDuration(spec.duration_s));
    }
    let patch_frames = (spec.duration_s * buffer.sample_rate() as f64).round() as usize;
    patch_at_random_offset(buffer, patch_frames, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}

/// Patch extraction driven by an external RNG, for callers that manage
/// their own streams.
pub fn patch_at_random_offset(
    buffer: &AudioBuffer,
    patch_frames: usize,
    rng: &mut impl Rng,
) -> Result<AudioBuffer, AudioError> {
    if patch_frames > buffer.frames() {
        return Err(AudioError::SourceTooShort {
            source_frames: buffer.frames(),
            patch_frames,
        });
    }
    let max_offset = buffer.frames() - patch_frames;
    let offset = if max_offset == 0 {
        0
    } else {
        rng.random_range(0..=max_offset)
    };
    Ok(buffer.slice_frames(offset, patch_frames))
}

/// Decibels to linear amplitude: `10^(g/20)`.
pub fn db_to_linear(gain_db: f64) -> f64 {
    10f64.powf(gain_db / 20.0)
}

/// Linear amplitude to decibels: `20 log10(a)`. Errors on `a <= 0`.
pub fn linear_to_db(amplitude: f64) -> Result<f64, AudioError> {
    if amplitude <= 0.0 {
        return Err(AudioError::NonPositiveAmplitude(amplitude));
    }
    Ok(20.0 * amplitude.log10())
}
