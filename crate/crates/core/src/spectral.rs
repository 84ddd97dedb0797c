//! Shared DSP kernels: autocorrelation, radix-2 FFT, periodogram and the
//! orthonormal DCT-II / DCT-III pair.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("max lag {max_lag} must be smaller than the sequence length {len}")]
    LagTooLarge { max_lag: usize, len: usize },
    #[error("fft size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("fft size {fft_size} is smaller than the frame length {len}")]
    FrameTooLong { fft_size: usize, len: usize },
    #[error("empty input")]
    Empty,
}

/// One-sided periodogram over bins `0..=fft_size/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub power: Vec<f64>,
    pub bin_hz: f64,
    pub fft_size: usize,
}

/// Biased autocorrelation `r[k] = Σ x[n]·x[n+k]` for `k = 0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>, SpectralError> {
    if max_lag >= x.len() {
        return Err(SpectralError::LagTooLarge {
            max_lag,
            len: x.len(),
        });
    }
    Ok((0..=max_lag)
        .map(|k| x.iter().zip(&x[k..]).map(|(a, b)| a * b).sum())
        .collect())
}

/// In-place iterative radix-2 FFT (forward, unnormalized).
pub fn fft_in_place(buf: &mut [Complex64]) -> Result<(), SpectralError> {
    let n = buf.len();
    if !n.is_power_of_two() {
        return Err(SpectralError::NotPowerOfTwo(n));
    }
    if n <= 1 {
        return Ok(());
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let step = Complex64::from_polar(1.0, -2.0 * PI / len as f64);
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let a = buf[start + k];
                let b = buf[start + k + len / 2] * w;
                buf[start + k] = a + b;
                buf[start + k + len / 2] = a - b;
                w *= step;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// Full complex spectrum of `x` zero-padded to `fft_size`.
pub fn fft_real(x: &[f64], fft_size: usize) -> Result<Vec<Complex64>, SpectralError> {
    if !fft_size.is_power_of_two() {
        return Err(SpectralError::NotPowerOfTwo(fft_size));
    }
    if fft_size < x.len() {
        return Err(SpectralError::FrameTooLong {
            fft_size,
            len: x.len(),
        });
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(fft_size, Complex64::new(0.0, 0.0));
    fft_in_place(&mut buf)?;
    Ok(buf)
}

/// Periodogram `|X[k]|² / len(x)` for `k = 0..=fft_size/2`.
///
/// `bin_hz` is filled from `sample_rate`; pass `1.0` to get bins in cycles
/// per sample.
pub fn dft_power(x: &[f64], fft_size: usize, sample_rate: f64) -> Result<Spectrum, SpectralError> {
    if x.is_empty() {
        return Err(SpectralError::Empty);
    }
    let spec = fft_real(x, fft_size)?;
    let norm = x.len() as f64;
    Ok(Spectrum {
        power: spec[..=fft_size / 2]
            .iter()
            .map(|c| c.norm_sqr() / norm)
            .collect(),
        bin_hz: sample_rate / fft_size as f64,
        fft_size,
    })
}

fn dct_scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// Orthonormal DCT-II.
pub fn dct2(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .sum();
            dct_scale(k, n) * s
        })
        .collect()
}

/// Orthonormal DCT-III, the inverse of [`dct2`].
pub fn dct3(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    (0..n)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, &v)| {
                    dct_scale(k, n) * v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
                })
                .sum()
        })
        .collect()
}
