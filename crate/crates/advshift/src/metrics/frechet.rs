//! Fréchet distance between Gaussian fits of pooled detector features.
//!
//! `FD = |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2})`, with the
//! matrix square root computed by symmetric eigendecomposition of
//! `S_a^{1/2} S_b S_a^{1/2}`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::detector::{forward_f1, DetectorParams};
use crate::error::{Error, Result};
use crate::image::Image;

/// Eigenvalues below this are treated as numerically indefinite.
const EIG_TOLERANCE: f64 = -1e-8;

#[derive(Debug, Clone)]
pub struct FeatureStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

/// Global-average-pooled F1 features, one `D = Cf` row per image. Row order
/// follows input order regardless of worker count.
pub fn extract_pooled_features(
    params: &DetectorParams,
    images: &[&Image],
) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|img| {
            let trace = forward_f1(params, &img.pixels)?;
            Ok(trace.activations.last().expect("f1 layers").spatial_mean())
        })
        .collect()
}

/// Mean and unbiased covariance of feature rows. Requires `n >= 2`.
pub fn fit_gaussian(features: &[Vec<f64>]) -> Result<FeatureStats> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 feature rows to fit a Gaussian, got {n}"
        )));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::Validation("ragged feature rows".into()));
    }
    let mut mu = DVector::zeros(d);
    for f in features {
        for (i, &v) in f.iter().enumerate() {
            mu[i] += v;
        }
    }
    mu /= n as f64;
    let mut sigma = DMatrix::zeros(d, d);
    for f in features {
        let centered = DVector::from_iterator(d, f.iter().enumerate().map(|(i, &v)| v - mu[i]));
        sigma += &centered * centered.transpose();
    }
    sigma /= (n - 1) as f64;
    // enforce exact symmetry against rounding
    sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(FeatureStats { mu, sigma, n })
}

/// Symmetric PSD square root via eigendecomposition. Small negative
/// eigenvalues clamp to zero; anything below the tolerance is an error.
fn psd_sqrt(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < EIG_TOLERANCE {
            return Err(Error::Numerical(format!(
                "{context}: covariance indefinite (eigenvalue {v})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&vals) * q.transpose())
}

/// Gaussian Fréchet distance between two feature statistics.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.mu.len() != b.mu.len() {
        return Err(Error::Config(format!(
            "feature dimension mismatch: {} vs {}",
            a.mu.len(),
            b.mu.len()
        )));
    }
    let diff = &a.mu - &b.mu;
    let mean_term = diff.dot(&diff);
    let a_half = psd_sqrt(&a.sigma, "frechet_distance lhs")?;
    let inner = &a_half * &b.sigma * &a_half;
    let inner_sym = (&inner + inner.transpose()) * 0.5;
    let eig = inner_sym.symmetric_eigen();
    let mut sqrt_trace = 0.0;
    for &v in eig.eigenvalues.iter() {
        if v < EIG_TOLERANCE {
            return Err(Error::Numerical(format!(
                "frechet_distance: product matrix indefinite (eigenvalue {v})"
            )));
        }
        sqrt_trace += v.max(0.0).sqrt();
    }
    let fd = mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * sqrt_trace;
    Ok(fd.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn stats_1d(mu: f64, var: f64) -> FeatureStats {
        FeatureStats {
            mu: DVector::from_vec(vec![mu]),
            sigma: DMatrix::from_vec(1, 1, vec![var]),
            n: 10,
        }
    }

    #[test]
    fn identical_stats_have_zero_distance() {
        let a = stats_1d(0.3, 1.7);
        assert!(frechet_distance(&a, &a).unwrap() < 1e-8);
    }

    #[test]
    fn one_dimensional_closed_form() {
        // FD = (mu1 - mu2)^2 + (sigma1 - sigma2)^2 in 1-D
        let a = stats_1d(0.0, 1.0);
        let b = stats_1d(1.0, 4.0);
        let fd = frechet_distance(&a, &b).unwrap();
        assert!((fd - 2.0).abs() < 1e-10, "fd = {fd}");
    }

    #[test]
    fn symmetric_within_tolerance() {
        let mut rng = crate::rng::derive(17, 106, 0);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let other: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|_| rng.gen_range(-0.5..1.5)).collect())
            .collect();
        let a = fit_gaussian(&rows).unwrap();
        let b = fit_gaussian(&other).unwrap();
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-8, "{ab} vs {ba}");
        assert!(ab >= 0.0);
    }

    #[test]
    fn rotation_invariance() {
        let mut rng = crate::rng::derive(18, 107, 0);
        let d = 5usize;
        let rows_a: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let rows_b: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..2.0)).collect())
            .collect();
        // random rotation from QR of a random matrix
        let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let qr = m.qr();
        let q = qr.q();
        let rotate = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| {
                    let v = DVector::from_vec(r.clone());
                    (&q * v).iter().cloned().collect()
                })
                .collect()
        };
        let fd = frechet_distance(&fit_gaussian(&rows_a).unwrap(), &fit_gaussian(&rows_b).unwrap())
            .unwrap();
        let fd_rot = frechet_distance(
            &fit_gaussian(&rotate(&rows_a)).unwrap(),
            &fit_gaussian(&rotate(&rows_b)).unwrap(),
        )
        .unwrap();
        assert!((fd - fd_rot).abs() < 1e-8, "{fd} vs {fd_rot}");
    }

    #[test]
    fn fit_gaussian_hand_cases() {
        let stats = fit_gaussian(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(stats.mu[0], 1.0);
        assert_eq!(stats.sigma[(0, 0)], 2.0); // unbiased: ((1)^2 + (1)^2) / 1
        let same = fit_gaussian(&[vec![3.0, 1.0], vec![3.0, 1.0]]).unwrap();
        assert!(same.sigma.iter().all(|&v| v == 0.0));
        assert!(fit_gaussian(&[vec![1.0]]).is_err());
    }

    #[test]
    fn covariance_is_symmetric() {
        let mut rng = crate::rng::derive(19, 108, 0);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let stats = fit_gaussian(&rows).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!((stats.sigma[(i, j)] - stats.sigma[(j, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = stats_1d(0.0, 1.0);
        let rows: Vec<Vec<f64>> = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]];
        let b = fit_gaussian(&rows).unwrap();
        assert!(frechet_distance(&a, &b).is_err());
    }
}
