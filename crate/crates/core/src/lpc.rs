//! Autocorrelation-method LPC and formant picking from the predictor roots.
//!
//! The model predicts `s[n] ≈ Σ a_k·s[n−k]`, so the inverse filter is
//! `A(z) = 1 − Σ a_k·z^(−k)` and formants are the angles of its complex roots.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::PreparedFrame;
use crate::spectral::{self, SpectralError};

#[derive(Debug, Error, PartialEq)]
pub enum LpcError {
    #[error("silent frame")]
    SilentFrame,
    #[error("unstable model: reflection coefficient {k} at order {order}")]
    Unstable { order: usize, k: f64 },
    #[error("LPC order {order} invalid for a frame of {len} samples")]
    BadOrder { order: usize, len: usize },
    #[error("formants not found: {found} candidate(s) survived the gates")]
    FormantsNotFound { found: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpcModel {
    pub order: usize,
    pub coeffs: Vec<f64>,
    pub gain: f64,
    pub residual_energy: f64,
    pub reflection: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormantEstimate {
    pub f1: f64,
    pub f2: f64,
    pub bandwidths: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormantConfig {
    /// `None` picks `2 + rate/1000`.
    pub lpc_order: Option<usize>,
    pub formant_min_hz: f64,
    pub formant_max_hz: f64,
    pub formant_max_bw_hz: f64,
}

impl Default for FormantConfig {
    fn default() -> Self {
        Self {
            lpc_order: None,
            formant_min_hz: 90.0,
            formant_max_hz: 4000.0,
            formant_max_bw_hz: 400.0,
        }
    }
}

impl FormantConfig {
    pub fn order_for(&self, sample_rate: u32) -> usize {
        self.lpc_order
            .unwrap_or_else(|| 2 + (sample_rate as f64 / 1000.0).round() as usize)
    }
}

/// Levinson-Durbin solve of the Toeplitz normal equations built from
/// `r[0..=order]`.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcModel, LpcError> {
    if order == 0 || r.len() <= order {
        return Err(LpcError::BadOrder { order, len: r.len() });
    }
    if r[0] <= 0.0 {
        return Err(LpcError::SilentFrame);
    }
    let mut a = vec![0.0; order];
    let mut prev = vec![0.0; order];
    let mut reflection = Vec::with_capacity(order);
    let mut err = r[0];
    for i in 0..order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = (r[i + 1] - acc) / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(LpcError::Unstable { order: i + 1, k });
        }
        prev[..i].copy_from_slice(&a[..i]);
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        a[i] = k;
        reflection.push(k);
        err *= 1.0 - k * k;
    }
    Ok(LpcModel {
        order,
        coeffs: a,
        gain: err.max(0.0).sqrt(),
        residual_energy: err.max(0.0),
        reflection,
    })
}

/// Fit an order-`order` predictor to the frame's analysis samples.
pub fn lpc_fit(frame: &PreparedFrame, order: usize) -> Result<LpcModel, LpcError> {
    let x = &frame.samples;
    if order == 0 || x.len() <= order {
        return Err(LpcError::BadOrder {
            order,
            len: x.len(),
        });
    }
    let r = spectral::autocorrelation(x, order)?;
    levinson_durbin(&r, order)
}

/// `|A(e^{-iω})|` denominator evaluated at normalized angle `omega`.
fn inverse_filter(coeffs: &[f64], omega: f64) -> Complex64 {
    coeffs
        .iter()
        .enumerate()
        .fold(Complex64::new(1.0, 0.0), |acc, (k, &a)| {
            acc - Complex64::from_polar(a, -omega * (k + 1) as f64)
        })
}

/// All-pole envelope `G² / |A(e^{iω})|²` sampled on `n_points` frequencies
/// from 0 to Nyquist inclusive. Returns `(hz, value)` pairs.
pub fn lpc_envelope(model: &LpcModel, n_points: usize, sample_rate: f64) -> Vec<(f64, f64)> {
    let g2 = model.gain * model.gain;
    let nyq = sample_rate / 2.0;
    (0..n_points)
        .map(|i| {
            let hz = if n_points > 1 {
                nyq * i as f64 / (n_points - 1) as f64
            } else {
                0.0
            };
            let omega = 2.0 * PI * hz / sample_rate;
            (hz, g2 / inverse_filter(&model.coeffs, omega).norm_sqr())
        })
        .collect()
}

/// Roots of `z^M − a_1 z^(M−1) − … − a_M`, i.e. the poles of `1/A(z)`.
pub fn predictor_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let m = coeffs.len();
    if m == 0 {
        return Vec::new();
    }
    // Companion matrix: first row holds a_1..a_M, sub-diagonal ones.
    let mut c = DMatrix::<f64>::zeros(m, m);
    for (k, &a) in coeffs.iter().enumerate() {
        c[(0, k)] = a;
    }
    for i in 1..m {
        c[(i, i - 1)] = 1.0;
    }
    c.complex_eigenvalues().iter().copied().collect()
}

/// A pole-derived resonance: centre frequency and 3 dB bandwidth in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
}

/// Every upper-half-plane pole as a resonance, sorted by frequency.
pub fn resonances(model: &LpcModel, sample_rate: f64) -> Vec<Resonance> {
    let mut out: Vec<Resonance> = predictor_roots(&model.coeffs)
        .into_iter()
        .filter(|r| r.im > 0.0)
        .map(|r| Resonance {
            freq_hz: sample_rate / (2.0 * PI) * r.arg(),
            bandwidth_hz: -(sample_rate / PI) * r.norm().ln(),
        })
        .collect();
    out.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
    out
}

/// F1 and F2 from the gated pole candidates.
pub fn find_formants(
    model: &LpcModel,
    sample_rate: f64,
    config: &FormantConfig,
) -> Result<FormantEstimate, LpcError> {
    if model.order < 4 {
        return Err(LpcError::BadOrder {
            order: model.order,
            len: model.coeffs.len(),
        });
    }
    let picked: Vec<Resonance> = resonances(model, sample_rate)
        .into_iter()
        .filter(|r| {
            r.freq_hz >= config.formant_min_hz
                && r.freq_hz <= config.formant_max_hz
                && r.bandwidth_hz <= config.formant_max_bw_hz
        })
        .collect();
    match picked.as_slice() {
        [a, b, ..] => Ok(FormantEstimate {
            f1: a.freq_hz,
            f2: b.freq_hz,
            bandwidths: [a.bandwidth_hz, b.bandwidth_hz],
        }),
        _ => Err(LpcError::FormantsNotFound {
            found: picked.len(),
        }),
    }
}

/// Fit with the configured order and pick formants.
pub fn estimate_formants(
    frame: &PreparedFrame,
    config: &FormantConfig,
) -> Result<(LpcModel, FormantEstimate), LpcError> {
    let order = config.order_for(frame.sample_rate);
    let model = lpc_fit(frame, order)?;
    let est = find_formants(&model, frame.sample_rate as f64, config)?;
    Ok((model, est))
}
