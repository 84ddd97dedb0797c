//! Principal component analysis via cyclic Jacobi eigendecomposition.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("need at least {need} samples, got {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("n_components {0} exceeds dimension {1}")]
    TooManyComponents(usize, usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Rows are orthonormal principal directions, descending variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Full eigenvalue spectrum of the covariance, descending.
    pub all_eigenvalues: Vec<f64>,
    /// Set when every eigenvalue is zero; components are then arbitrary.
    pub degenerate: bool,
}

/// Symmetric eigendecomposition: returns (eigenvalues, eigenvectors as
/// columns of `v`, row-major), unsorted.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A ← Jᵀ A J on rows/cols p, q.
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Sample covariance (divisor n − 1) of row vectors.
pub fn covariance(data: &[Vec<f64>], mean: &[f64]) -> Vec<Vec<f64>> {
    let d = mean.len();
    let n = data.len();
    let mut c = vec![vec![0.0; d]; d];
    for x in data {
        for i in 0..d {
            let xi = x[i] - mean[i];
            for j in i..d {
                c[i][j] += xi * (x[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            c[i][j] /= (n - 1) as f64;
            c[j][i] = c[i][j];
        }
    }
    c
}

pub fn pca_fit(data: &[Vec<f64>], n_components: usize) -> Result<PcaModel, PcaError> {
    let d = data.first().map_or(0, Vec::len);
    if n_components > d && !data.is_empty() {
        return Err(PcaError::TooManyComponents(n_components, d));
    }
    let need = 3.max(n_components);
    if data.len() < need {
        return Err(PcaError::TooFewSamples {
            have: data.len(),
            need,
        });
    }
    for x in data {
        if x.len() != d {
            return Err(PcaError::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PcaError::NonFinite);
        }
    }
    let n = data.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let cov = covariance(data, &mean);
    let (vals, vecs) = jacobi_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    // Stable: equal eigenvalues keep index order.
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let all_eigenvalues: Vec<f64> = order.iter().map(|&i| vals[i].max(0.0)).collect();
    let components = order[..n_components]
        .iter()
        .map(|&i| {
            let mut c: Vec<f64> = (0..d).map(|r| vecs[r][i]).collect();
            let big = c
                .iter()
                .copied()
                .reduce(|m, v| if v.abs() > m.abs() { v } else { m })
                .unwrap_or(0.0);
            if big < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
            c
        })
        .collect();
    let degenerate = all_eigenvalues.iter().all(|&v| v == 0.0);
    if degenerate {
        log::warn!("pca: zero-variance input; components are arbitrary");
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: all_eigenvalues[..n_components].to_vec(),
        all_eigenvalues,
        degenerate,
    })
}

impl PcaModel {
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, PcaError> {
        if x.len() != self.mean.len() {
            return Err(PcaError::Dimension {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};
    use rand_xoshiro::SplitMix64;

    fn gaussian(seed: u64, n: usize, scales: &[f64]) -> Vec<Vec<f64>> {
        let mut rng = SplitMix64::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                scales
                    .iter()
                    .map(|s| s * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect()
    }

    fn var(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    }

    #[test]
    fn rank_one_line() {
        let data: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let x = i as f64 * 0.3 - 4.0;
                let mut v = vec![0.0; 13];
                v[0] = x;
                v[1] = 2.0 * x;
                v
            })
            .collect();
        let m = pca_fit(&data, 2).unwrap();
        assert!(m.explained_variance[1].abs() <= 1e-9);
        let dir = [1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
        let c = &m.components[0];
        assert!((c[0] - dir[0]).abs() < 1e-9 && (c[1] - dir[1]).abs() < 1e-9, "{c:?}");
        assert!(c[2..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn isotropic_share() {
        let data = gaussian(42, 5000, &[1.0; 13]);
        let m = pca_fit(&data, 2).unwrap();
        let total: f64 = m.all_eigenvalues.iter().sum();
        let share = (m.explained_variance[0] + m.explained_variance[1]) / total;
        assert!((share / (2.0 / 13.0) - 1.0).abs() <= 0.10, "share {share}");
    }

    #[test]
    fn eigen_residual_trace_and_oracle() {
        let scales: Vec<f64> = (1..=13).map(|i| i as f64 * 0.5).collect();
        let mut data = gaussian(7, 400, &scales);
        // Mix the axes so the covariance is dense.
        let mut rng = SplitMix64::seed_from_u64(8);
        let mix: Vec<Vec<f64>> = (0..13).map(|_| (0..13).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        for x in data.iter_mut() {
            *x = (0..13).map(|i| (0..13).map(|j| mix[i][j] * x[j]).sum()).collect();
        }
        let m = pca_fit(&data, 2).unwrap();
        let cov = covariance(&data, &m.mean);
        for (k, c) in m.components.iter().enumerate() {
            let lam = m.explained_variance[k];
            let res: f64 = (0..13)
                .map(|i| ((0..13).map(|j| cov[i][j] * c[j]).sum::<f64>() - lam * c[i]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-8 * lam.max(1.0), "residual {res}");
            let norm: f64 = c.iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-9);
        }
        let dot: f64 = m.components[0].iter().zip(&m.components[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-9);
        let trace: f64 = (0..13).map(|i| cov[i][i]).sum();
        let sum: f64 = m.all_eigenvalues.iter().sum();
        assert!((sum - trace).abs() <= 1e-8 * trace);

        let oracle = SymmetricEigen::new(DMatrix::from_fn(13, 13, |i, j| cov[i][j]));
        let mut ev: Vec<f64> = oracle.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in m.all_eigenvalues.iter().zip(&ev) {
            assert!((a - b).abs() <= 1e-9 * ev[0], "{a} vs {b}");
        }
    }

    #[test]
    fn projection_variance_and_decorrelation() {
        let data = gaussian(3, 600, &[3.0, 2.0, 1.0, 0.5, 0.5, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]);
        let m = pca_fit(&data, 2).unwrap();
        assert_eq!(m.project(&m.mean).unwrap(), vec![0.0, 0.0]);
        let p: Vec<Vec<f64>> = data.iter().map(|x| m.project(x).unwrap()).collect();
        let a: Vec<f64> = p.iter().map(|v| v[0]).collect();
        let b: Vec<f64> = p.iter().map(|v| v[1]).collect();
        assert!((var(&a) / m.explained_variance[0] - 1.0).abs() <= 1e-8);
        assert!((var(&b) / m.explained_variance[1] - 1.0).abs() <= 1e-8);
        let (ma, mb) = (a.iter().sum::<f64>() / a.len() as f64, b.iter().sum::<f64>() / b.len() as f64);
        let cov_ab = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64;
        assert!((cov_ab / (var(&a) * var(&b)).sqrt()).abs() <= 1e-6);
        assert!(matches!(m.project(&[0.0; 3]), Err(PcaError::Dimension { .. })));
    }

    /// No random orthonormal 2-frame captures more variance than the fit.
    #[test]
    fn randomized_variance_optimality() {
        let scales: Vec<f64> = (0..13).map(|i| 1.0 + i as f64 * 0.2).collect();
        let data = gaussian(11, 300, &scales);
        let m = pca_fit(&data, 2).unwrap();
        let cov = covariance(&data, &m.mean);
        let captured = |u: &[f64]| -> f64 {
            (0..13).map(|i| (0..13).map(|j| u[i] * cov[i][j] * u[j]).sum::<f64>()).sum()
        };
        let best = captured(&m.components[0]) + captured(&m.components[1]);
        let mut rng = SplitMix64::seed_from_u64(99);
        for _ in 0..100 {
            // Gram-Schmidt on two Gaussian vectors → random orthonormal pair.
            let mut u: Vec<f64> = (0..13).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut w: Vec<f64> = (0..13).map(|_| StandardNormal.sample(&mut rng)).collect();
            let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= nu);
            let d: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
            w.iter_mut().zip(&u).for_each(|(w, u)| *w -= d * u);
            let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            w.iter_mut().for_each(|v| *v /= nw);
            assert!(captured(&u) + captured(&w) <= best + 1e-9);
        }
    }

    #[test]
    fn sign_convention_and_determinism() {
        let data = gaussian(5, 100, &[2.0, 1.0, 0.5]);
        let a = pca_fit(&data, 2).unwrap();
        assert_eq!(a, pca_fit(&data, 2).unwrap());
        for c in &a.components {
            let big = c.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn degenerate_and_errors() {
        let data = vec![vec![1.0; 13]; 5];
        let m = pca_fit(&data, 2).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.explained_variance, vec![0.0, 0.0]);
        assert!(matches!(pca_fit(&data[..2], 2), Err(PcaError::TooFewSamples { .. })));
        assert!(matches!(pca_fit(&data, 14), Err(PcaError::TooManyComponents(14, 13))));
    }
}
