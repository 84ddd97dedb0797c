//! WAV decoding/encoding and sample-rate conversion.
//!
//! Every decoded file becomes an [`AudioSignal`]: mono `f64` samples in
//! `[-1, 1]` plus the sample rate. Integer PCM is scaled by the magnitude of
//! the most negative value of its type (so 16-bit `+32767` maps to
//! `32767/32768`), and multi-channel frames are averaged.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("malformed RIFF/WAVE data in {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("unsupported encoding in {path}: {reason}")]
    Unsupported { path: PathBuf, reason: String },
    #[error("empty signal")]
    EmptySignal,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sample rate must be positive")]
    InvalidRate,
}

/// Mono PCM signal. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidRate);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

fn map_hound(path: &Path, err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => {
            AudioError::NotFound(path.to_path_buf())
        }
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            AudioError::Malformed {
                path: path.to_path_buf(),
                reason: "truncated file".into(),
            }
        }
        hound::Error::IoError(source) => AudioError::Io {
            path: path.to_path_buf(),
            source,
        },
        hound::Error::FormatError(reason) => AudioError::Malformed {
            path: path.to_path_buf(),
            reason: reason.into(),
        },
        hound::Error::Unsupported => AudioError::Unsupported {
            path: path.to_path_buf(),
            reason: "format code is not integer or float PCM".into(),
        },
        hound::Error::InvalidSampleFormat => AudioError::Unsupported {
            path: path.to_path_buf(),
            reason: "invalid sample format".into(),
        },
        other => AudioError::Malformed {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

/// Decode an 8/16/24/32-bit integer or 32-bit float PCM WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal, AudioError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::NotFound(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(AudioError::Unsupported {
            path: path.to_path_buf(),
            reason: format!("{channels} channels"),
        });
    }

    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(AudioError::Unsupported {
                    path: path.to_path_buf(),
                    reason: format!("{}-bit float", spec.bits_per_sample),
                });
            }
            reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<Result<_, _>>()
                .map_err(|e| map_hound(path, e))?
        }
        hound::SampleFormat::Int => {
            let bits = spec.bits_per_sample;
            if !matches!(bits, 8 | 16 | 24 | 32) {
                return Err(AudioError::Unsupported {
                    path: path.to_path_buf(),
                    reason: format!("{bits}-bit integer"),
                });
            }
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| map_hound(path, e))?
        }
    };

    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if samples.is_empty() {
        return Err(AudioError::Malformed {
            path: path.to_path_buf(),
            reason: "no sample frames".into(),
        });
    }
    AudioSignal::new(samples, spec.sample_rate)
}

/// Write a 16-bit mono PCM file. Out-of-range samples are clipped.
pub fn write_wav(signal: &AudioSignal, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    if signal.is_empty() {
        return Err(AudioError::EmptySignal);
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    let mut clipped = 0usize;
    for &s in signal.samples() {
        if !(-1.0..=1.0).contains(&s) {
            clipped += 1;
        }
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| map_hound(path, e))?;
    }
    if clipped > 0 {
        log::warn!("{}: clipped {clipped} samples outside [-1, 1]", path.display());
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

const RESAMPLE_HALF_TAPS: usize = 64;

/// Blackman-windowed sinc low-pass kernel, cutoff given as a fraction of the
/// sample rate (0 < cutoff < 0.5), normalized to unit DC gain.
fn lowpass_kernel(cutoff: f64, half: usize) -> Vec<f64> {
    let len = 2 * half + 1;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let m = i as f64 - half as f64;
            let sinc = if m == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * m).sin() / (PI * m)
            };
            let w = 0.42 - 0.5 * (2.0 * PI * i as f64 / (len - 1) as f64).cos()
                + 0.08 * (4.0 * PI * i as f64 / (len - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Zero-phase FIR filtering with zero padding at both ends.
fn filter_centered(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let half = taps.len() / 2;
    let n = x.len() as isize;
    (0..x.len())
        .map(|i| {
            taps.iter()
                .enumerate()
                .filter_map(|(j, t)| {
                    let idx = i as isize + j as isize - half as isize;
                    (0..n).contains(&idx).then(|| t * x[idx as usize])
                })
                .sum()
        })
        .collect()
}

/// Convert to `target_rate`: anti-alias low-pass (when downsampling), then
/// linear interpolation on the new grid. Identity when the rates match.
pub fn resample(signal: &AudioSignal, target_rate: u32) -> Result<AudioSignal, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidRate);
    }
    let src_rate = signal.sample_rate();
    if target_rate == src_rate || signal.is_empty() {
        return Ok(AudioSignal {
            samples: signal.samples().to_vec(),
            sample_rate: target_rate,
        });
    }

    let filtered = if target_rate < src_rate {
        // Leave a small transition band below the new Nyquist.
        let cutoff = 0.5 * 0.95 * target_rate as f64 / src_rate as f64;
        filter_centered(signal.samples(), &lowpass_kernel(cutoff, RESAMPLE_HALF_TAPS))
    } else {
        signal.samples().to_vec()
    };

    let ratio = src_rate as f64 / target_rate as f64;
    let out_len = ((filtered.len() as f64) / ratio).round().max(1.0) as usize;
    let last = filtered.len() - 1;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let i0 = (pos.floor() as usize).min(last);
            let i1 = (i0 + 1).min(last);
            let frac = pos - i0 as f64;
            filtered[i0] * (1.0 - frac) + filtered[i1] * frac
        })
        .collect();
    Ok(AudioSignal {
        samples,
        sample_rate: target_rate,
    })
}
