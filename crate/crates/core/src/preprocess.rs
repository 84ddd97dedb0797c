//! Recording preparation: trim leading/trailing silence, peak-normalize,
//! pick the most stationary short segment and apply a Hamming window.

use std::f64::consts::PI;

use thiserror::Error;

use crate::audio_io::AudioSignal;

#[derive(Debug, Error, PartialEq)]
pub enum PrepError {
    #[error("silent frame: no voiced content")]
    NoVoicedContent,
    #[error("signal is all zeros")]
    AllZero,
    #[error("signal of {have} samples is shorter than the {need}-sample frame")]
    TooShort { have: usize, need: usize },
    #[error("silence threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("hamming window needs at least 2 samples, got {0}")]
    WindowTooShort(usize),
    #[error("empty signal")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepConfig {
    pub frame_duration_s: f64,
    pub silence_rel_threshold: f64,
    pub silence_chunk_ms: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            frame_duration_s: 0.040,
            silence_rel_threshold: 0.05,
            silence_chunk_ms: 10.0,
        }
    }
}

/// A short analysis frame cut from a recording.
///
/// `samples` is what the analysis stages consume (windowed after
/// [`prepare`]); `segment` keeps the same stretch before windowing so stages
/// that filter before windowing (MFCC pre-emphasis) can start from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFrame {
    pub samples: Vec<f64>,
    pub segment: Vec<f64>,
    pub sample_rate: u32,
    pub source_offset: usize,
    pub windowed: bool,
}

impl PreparedFrame {
    /// Wrap raw samples as an unwindowed frame.
    pub fn from_segment(segment: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples: segment.clone(),
            segment,
            sample_rate,
            source_offset: 0,
            windowed: false,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn windowed(mut self) -> Result<Self, PrepError> {
        let w = hamming_window(self.segment.len())?;
        self.samples = self.segment.iter().zip(&w).map(|(s, w)| s * w).collect();
        self.windowed = true;
        Ok(self)
    }
}

fn samples_for(ms: f64, rate: u32) -> usize {
    ((ms / 1000.0 * rate as f64).round() as usize).max(1)
}

fn rms(chunk: &[f64]) -> f64 {
    (chunk.iter().map(|v| v * v).sum::<f64>() / chunk.len() as f64).sqrt()
}

/// Remove leading and trailing chunks whose RMS is below
/// `rel_threshold × (loudest chunk RMS)`.
pub fn trim_silence_with_chunk(
    signal: &AudioSignal,
    rel_threshold: f64,
    chunk_ms: f64,
) -> Result<AudioSignal, PrepError> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(PrepError::BadThreshold(rel_threshold));
    }
    if signal.is_empty() {
        return Err(PrepError::Empty);
    }
    let chunk = samples_for(chunk_ms, signal.sample_rate());
    let levels: Vec<f64> = signal.samples().chunks(chunk).map(rms).collect();
    let peak = levels.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(PrepError::NoVoicedContent);
    }
    let thr = rel_threshold * peak;
    let first = levels.iter().position(|&l| l >= thr).unwrap();
    let last = levels.iter().rposition(|&l| l >= thr).unwrap();
    let start = first * chunk;
    let end = ((last + 1) * chunk).min(signal.len());
    Ok(signal.with_samples(signal.samples()[start..end].to_vec()))
}

/// [`trim_silence_with_chunk`] with the default 10 ms chunk.
pub fn trim_silence(signal: &AudioSignal, rel_threshold: f64) -> Result<AudioSignal, PrepError> {
    trim_silence_with_chunk(signal, rel_threshold, PrepConfig::default().silence_chunk_ms)
}

/// Scale so that the largest magnitude becomes exactly 1.
pub fn normalize_amplitude(signal: &AudioSignal) -> Result<AudioSignal, PrepError> {
    let peak = signal.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(PrepError::AllZero);
    }
    if peak == 1.0 {
        return Ok(signal.clone());
    }
    let scale = 1.0 / peak;
    let mut out: Vec<f64> = signal.samples().iter().map(|v| v * scale).collect();
    // Division rounding can leave the peak one ulp off 1.0.
    for (o, s) in out.iter_mut().zip(signal.samples()) {
        if s.abs() == peak {
            *o = s.signum();
        }
    }
    Ok(signal.with_samples(out))
}

/// Energy variance across consecutive sub-chunks of a candidate window, from
/// a prefix sum of squares. Sub-chunk energies are mean squares.
fn window_energy_variance(prefix: &[f64], offset: usize, sub: usize, n_sub: usize) -> f64 {
    let energies = (0..n_sub).map(|j| {
        let a = offset + j * sub;
        (prefix[a + sub] - prefix[a]) / sub as f64
    });
    let mean = energies.clone().sum::<f64>() / n_sub as f64;
    energies.map(|e| (e - mean) * (e - mean)).sum::<f64>() / n_sub as f64
}

/// Pick the `duration`-long stretch whose sub-chunk energies vary least.
/// Ties go to the earliest offset. The result is not windowed.
pub fn select_frame_with_chunk(
    signal: &AudioSignal,
    duration: f64,
    chunk_ms: f64,
) -> Result<PreparedFrame, PrepError> {
    let rate = signal.sample_rate();
    let len = ((duration * rate as f64).round() as usize).max(1);
    if signal.len() < len {
        return Err(PrepError::TooShort {
            have: signal.len(),
            need: len,
        });
    }
    let sub = samples_for(chunk_ms, rate).min(len);
    let n_sub = (len / sub).max(1);

    let mut prefix = Vec::with_capacity(signal.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in signal.samples() {
        acc += v * v;
        prefix.push(acc);
    }

    let mut best = (0usize, f64::INFINITY);
    for offset in 0..=signal.len() - len {
        let var = window_energy_variance(&prefix, offset, sub, n_sub);
        if var < best.1 {
            best = (offset, var);
        }
    }
    let segment = signal.samples()[best.0..best.0 + len].to_vec();
    Ok(PreparedFrame {
        samples: segment.clone(),
        segment,
        sample_rate: rate,
        source_offset: best.0,
        windowed: false,
    })
}

pub fn select_frame(signal: &AudioSignal, duration: f64) -> Result<PreparedFrame, PrepError> {
    select_frame_with_chunk(signal, duration, PrepConfig::default().silence_chunk_ms)
}

/// `w[n] = 0.54 − 0.46·cos(2πn/(N−1))`.
pub fn hamming_window(n: usize) -> Result<Vec<f64>, PrepError> {
    if n < 2 {
        return Err(PrepError::WindowTooShort(n));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos())
        .collect())
}

/// trim → normalize → select → window.
pub fn prepare(signal: &AudioSignal, config: &PrepConfig) -> Result<PreparedFrame, PrepError> {
    let trimmed =
        trim_silence_with_chunk(signal, config.silence_rel_threshold, config.silence_chunk_ms)?;
    let normalized = normalize_amplitude(&trimmed)?;
    select_frame_with_chunk(&normalized, config.frame_duration_s, config.silence_chunk_ms)?
        .windowed()
}
