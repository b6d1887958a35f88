// SPDX-License-Identifier: MIT OR Apache-2.0

use super::ModelError;
use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    /// Output scale θ_s.
    pub theta_s: f64,
    /// Length scale θ_ℓ.
    pub theta_l: f64,
    /// Observation noise standard deviation σ_n.
    pub sigma_n: f64,
}

impl GpHyper {
    pub fn new(theta_s: f64, theta_l: f64, sigma_n: f64) -> Result<GpHyper, ModelError> {
        let h = GpHyper {
            theta_s,
            theta_l,
            sigma_n,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("theta_s", self.theta_s),
            ("theta_l", self.theta_l),
            ("sigma_n", self.sigma_n),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidHyper(format!("{name} = {v}")));
            }
        }
        Ok(())
    }

    pub fn to_log(self) -> [f64; 3] {
        [self.theta_s.ln(), self.theta_l.ln(), self.sigma_n.ln()]
    }

    pub fn from_log(p: [f64; 3]) -> GpHyper {
        GpHyper {
            theta_s: p[0].exp(),
            theta_l: p[1].exp(),
            sigma_n: p[2].exp(),
        }
    }
}

/// Squared-exponential covariance θ_s² exp(−‖x−x'‖² / (2θ_ℓ²)).
pub fn se_kernel(x: &[f64], y: &[f64], hyper: &GpHyper) -> Result<f64, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(se_from_sq_dist(r2, hyper))
}

pub(crate) fn se_from_sq_dist(r2: f64, hyper: &GpHyper) -> f64 {
    hyper.theta_s * hyper.theta_s * (-r2 / (2.0 * hyper.theta_l * hyper.theta_l)).exp()
}

/// Pairwise squared distances between the rows of `a` and `b`.
pub fn sq_dists(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m, d) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = DMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..d {
                let t = a[(i, k)] - b[(j, k)];
                s += t * t;
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Noise-free Gram matrix K_f over the rows of `x`; exactly symmetric.
pub fn gram(x: &DMatrix<f64>, hyper: &GpHyper) -> DMatrix<f64> {
    let n = x.nrows();
    let r2 = sq_dists(x, x);
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = se_from_sq_dist(r2[(i, j)], hyper);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

pub fn cross_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, hyper: &GpHyper) -> DMatrix<f64> {
    sq_dists(a, b).map(|r2| se_from_sq_dist(r2, hyper))
}

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor of `k`, adding diagonal jitter (relative to the mean
/// diagonal) in decades from 1e-10 up to 1e-4 until it succeeds. Returns
/// the factorization and the absolute jitter used.
pub fn jittered_cholesky(k: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), ModelError> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    let n = k.nrows();
    let scale = (k.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
        rel *= 10.0;
    }
    Err(ModelError::NotPositiveDefinite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use nalgebra::SymmetricEigen;
    use rand::Rng;

    #[test]
    fn diagonal_is_theta_s_squared() {
        let h = GpHyper::new(2.0, 0.7, 0.1).unwrap();
        assert_eq!(se_kernel(&[1.0, 2.0], &[1.0, 2.0], &h).unwrap(), 4.0);
    }

    #[test]
    fn unit_distance() {
        let h = GpHyper::new(1.0, 1.0, 0.1).unwrap();
        let v = se_kernel(&[0.0, 0.0], &[0.6, 0.8], &h).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.606_531).abs() < 1e-6);
    }

    #[test]
    fn decays_with_distance() {
        let h = GpHyper::new(1.5, 2.0, 0.1).unwrap();
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let v = se_kernel(&[0.0], &[i as f64], &h).unwrap();
            assert!(v < last || (v == 0.0 && last == 0.0));
            last = v;
        }
        assert!(last < 1e-100);
    }

    #[test]
    fn dimension_mismatch() {
        let h = GpHyper::new(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            se_kernel(&[0.0], &[0.0, 1.0], &h),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_hyper() {
        assert!(GpHyper::new(0.0, 1.0, 1.0).is_err());
        assert!(GpHyper::new(1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn gram_symmetric_psd() {
        let mut rng = seed::rng(3);
        for _ in 0..10 {
            let n = rng.random_range(2..40);
            let d = rng.random_range(1..6);
            let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
            let h = GpHyper::new(rng.random_range(0.2..5.0), rng.random_range(0.2..3.0), 0.1).unwrap();
            let k = gram(&x, &h);
            assert!((&k - k.transpose()).amax() <= 1e-12);
            let min = SymmetricEigen::new(k).eigenvalues.min();
            assert!(min >= -1e-8, "{min}");
        }
    }

    #[test]
    fn jitter_rescues_duplicate_rows() {
        let x = DMatrix::from_row_slice(3, 1, &[0.5, 0.5, 0.5]);
        let k = gram(&x, &GpHyper::new(1.0, 1.0, 1.0).unwrap());
        let (c, jitter) = jittered_cholesky(&k).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-4);
        assert_eq!(c.l().nrows(), 3);
    }

    #[test]
    fn indefinite_fails() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(jittered_cholesky(&k), Err(ModelError::NotPositiveDefinite)));
    }
}
