//! Mel-frequency cepstral coefficients for a single prepared frame.
//!
//! Chain: optional pre-emphasis → Hamming window → periodogram → triangular
//! mel filterbank → log (floored) → orthonormal DCT-II → coefficients
//! `1..=n_cep` (index 0, the overall log energy, is dropped).

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioSignal;
use crate::preprocess::{self, PrepError, PreparedFrame};
use crate::spectral::{self, SpectralError, Spectrum};

#[derive(Debug, Error, PartialEq)]
pub enum MfccError {
    #[error("negative frequency {0} Hz")]
    NegativeFrequency(f64),
    #[error("mel band too narrow: filter edges {0} and {1} snap to the same DFT bin")]
    BandTooNarrow(usize, usize),
    #[error("invalid filterbank: {0}")]
    BadFilterbank(String),
    #[error("all-zero frame")]
    AllZero,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Prep(#[from] PrepError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_filters: usize,
    pub n_cep: usize,
    /// Pre-emphasis coefficient; `0` disables it.
    pub preemph: f64,
    pub low_hz: f64,
    /// `None` means the Nyquist frequency of the frame.
    pub high_hz: Option<f64>,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_filters: 26,
            n_cep: 13,
            preemph: 0.97,
            low_hz: 0.0,
            high_hz: None,
            log_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccVector {
    pub coeffs: Vec<f64>,
    pub label: Option<String>,
}

pub fn hz_to_mel(hz: f64) -> Result<f64, MfccError> {
    if hz < 0.0 {
        return Err(MfccError::NegativeFrequency(hz));
    }
    Ok(2595.0 * (1.0 + hz / 700.0).log10())
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over the bins `0..=fft_size/2` of a periodogram.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_filters: usize,
    /// Row-major `n_filters × n_bins`.
    pub weights: Vec<Vec<f64>>,
    pub low_hz: f64,
    pub high_hz: f64,
    /// The `n_filters + 2` edge points in mel, before snapping.
    pub edges_mel: Vec<f64>,
    /// The same edges snapped to DFT bins.
    pub edge_bins: Vec<usize>,
}

impl MelFilterbank {
    /// Pass-through bank (one unit filter per bin).
    pub fn identity(n_bins: usize) -> Self {
        let weights = (0..n_bins)
            .map(|i| {
                let mut row = vec![0.0; n_bins];
                row[i] = 1.0;
                row
            })
            .collect();
        Self {
            n_filters: n_bins,
            weights,
            low_hz: 0.0,
            high_hz: 0.0,
            edges_mel: Vec::new(),
            edge_bins: Vec::new(),
        }
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

pub fn build_filterbank(
    n_filters: usize,
    fft_size: usize,
    sample_rate: f64,
    low_hz: f64,
    high_hz: f64,
) -> Result<MelFilterbank, MfccError> {
    if n_filters < 2 {
        return Err(MfccError::BadFilterbank(format!("{n_filters} filters")));
    }
    if !(low_hz < high_hz) || high_hz > sample_rate / 2.0 {
        return Err(MfccError::BadFilterbank(format!(
            "band {low_hz}–{high_hz} Hz at {sample_rate} Hz"
        )));
    }
    let n_bins = fft_size / 2 + 1;
    let lo = hz_to_mel(low_hz)?;
    let hi = hz_to_mel(high_hz)?;
    let step = (hi - lo) / (n_filters + 1) as f64;
    let edges_mel: Vec<f64> = (0..n_filters + 2).map(|i| lo + step * i as f64).collect();
    let edge_bins: Vec<usize> = edges_mel
        .iter()
        .map(|&m| {
            let b = ((fft_size + 1) as f64 * mel_to_hz(m) / sample_rate).floor() as usize;
            b.min(n_bins - 1)
        })
        .collect();
    if let Some(w) = edge_bins.windows(2).position(|w| w[1] <= w[0]) {
        return Err(MfccError::BandTooNarrow(w, w + 1));
    }

    let weights = (0..n_filters)
        .map(|j| {
            let (l, c, r) = (edge_bins[j], edge_bins[j + 1], edge_bins[j + 2]);
            let mut row = vec![0.0; n_bins];
            for (k, w) in row.iter_mut().enumerate().take(r + 1).skip(l) {
                *w = if k <= c {
                    (k - l) as f64 / (c - l) as f64
                } else {
                    (r - k) as f64 / (r - c) as f64
                };
            }
            row
        })
        .collect();
    Ok(MelFilterbank {
        n_filters,
        weights,
        low_hz,
        high_hz,
        edges_mel,
        edge_bins,
    })
}

type BankKey = (u64, usize, usize, u64, u64);

fn bank_cache() -> &'static RwLock<HashMap<BankKey, Arc<MelFilterbank>>> {
    static CACHE: OnceLock<RwLock<HashMap<BankKey, Arc<MelFilterbank>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// [`build_filterbank`] memoized per configuration.
pub fn cached_filterbank(
    n_filters: usize,
    fft_size: usize,
    sample_rate: f64,
    low_hz: f64,
    high_hz: f64,
) -> Result<Arc<MelFilterbank>, MfccError> {
    let key = (
        sample_rate.to_bits(),
        fft_size,
        n_filters,
        low_hz.to_bits(),
        high_hz.to_bits(),
    );
    if let Some(bank) = bank_cache().read().get(&key) {
        return Ok(Arc::clone(bank));
    }
    let bank = Arc::new(build_filterbank(n_filters, fft_size, sample_rate, low_hz, high_hz)?);
    Ok(Arc::clone(bank_cache().write().entry(key).or_insert(bank)))
}

fn pre_emphasis(x: &[f64], coeff: f64) -> Vec<f64> {
    std::iter::once(x[0])
        .chain(x.windows(2).map(|w| w[1] - coeff * w[0]))
        .collect()
}

/// Windowed time samples the cepstral chain starts from.
fn analysis_samples(frame: &PreparedFrame, config: &MfccConfig) -> Result<Vec<f64>, MfccError> {
    if frame.segment.is_empty() {
        return Err(MfccError::AllZero);
    }
    let windowed = if config.preemph != 0.0 {
        let y = pre_emphasis(&frame.segment, config.preemph);
        let w = preprocess::hamming_window(y.len())?;
        y.iter().zip(&w).map(|(a, b)| a * b).collect()
    } else if frame.windowed {
        frame.samples.clone()
    } else {
        let w = preprocess::hamming_window(frame.segment.len())?;
        frame.segment.iter().zip(&w).map(|(a, b)| a * b).collect()
    };
    if windowed.iter().all(|&v| v == 0.0) {
        return Err(MfccError::AllZero);
    }
    Ok(windowed)
}

pub fn frame_periodogram(frame: &PreparedFrame, config: &MfccConfig) -> Result<Spectrum, MfccError> {
    let x = analysis_samples(frame, config)?;
    let fft_size = x.len().next_power_of_two();
    Ok(spectral::dft_power(&x, fft_size, frame.sample_rate as f64)?)
}

/// Filterbank energies, optionally followed by log and DCT.
pub(crate) fn cepstral_chain(
    power: &[f64],
    bank: &MelFilterbank,
    log_floor: f64,
    log_and_dct: bool,
) -> Vec<f64> {
    let energies = bank.apply(power);
    if !log_and_dct {
        return energies;
    }
    let logs: Vec<f64> = energies.iter().map(|&e| e.max(log_floor).ln()).collect();
    spectral::dct2(&logs)
}

pub fn mfcc(frame: &PreparedFrame, config: &MfccConfig) -> Result<MfccVector, MfccError> {
    if config.n_cep + 1 > config.n_filters {
        return Err(MfccError::BadFilterbank(format!(
            "{} coefficients need more than {} filters",
            config.n_cep, config.n_filters
        )));
    }
    let spec = frame_periodogram(frame, config)?;
    let fs = frame.sample_rate as f64;
    let bank = cached_filterbank(
        config.n_filters,
        spec.fft_size,
        fs,
        config.low_hz,
        config.high_hz.unwrap_or(fs / 2.0),
    )?;
    let cep = cepstral_chain(&spec.power, &bank, config.log_floor, true);
    Ok(MfccVector {
        coeffs: cep[1..=config.n_cep].to_vec(),
        label: None,
    })
}

/// Average of per-frame MFCCs over 25 ms frames with a 10 ms hop, taken from
/// a trimmed and normalized signal.
pub fn mfcc_multi_frame(signal: &AudioSignal, config: &MfccConfig) -> Result<MfccVector, MfccError> {
    let rate = signal.sample_rate();
    let len = (0.025 * rate as f64).round() as usize;
    let hop = (0.010 * rate as f64).round() as usize;
    let x = signal.samples();
    if x.len() < len {
        return Err(PrepError::TooShort {
            have: x.len(),
            need: len,
        }
        .into());
    }
    let mut sum = vec![0.0; config.n_cep];
    let mut count = 0usize;
    for start in (0..=x.len() - len).step_by(hop.max(1)) {
        let frame = PreparedFrame::from_segment(x[start..start + len].to_vec(), rate);
        match mfcc(&frame, config) {
            Ok(v) => {
                sum.iter_mut().zip(&v.coeffs).for_each(|(s, c)| *s += c);
                count += 1;
            }
            Err(MfccError::AllZero) => continue,
            Err(e) => return Err(e),
        }
    }
    if count == 0 {
        return Err(MfccError::AllZero);
    }
    Ok(MfccVector {
        coeffs: sum.into_iter().map(|s| s / count as f64).collect(),
        label: None,
    })
}
