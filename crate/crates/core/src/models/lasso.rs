// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const MAX_SWEEPS: usize = 10_000;
pub const TOL: f64 = 1e-8;

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// ½n⁻¹‖y − Xβ‖² + λ‖β‖₁
pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let r = y - x * beta;
    0.5 * r.norm_squared() / x.nrows() as f64 + lambda * beta.lp_norm(1)
}

/// Smallest λ for which the solution is all zeros.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = x.nrows() as f64;
    (0..x.ncols()).map(|j| x.column(j).dot(y).abs() / n).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdResult {
    pub beta: DVector<f64>,
    pub sweeps: usize,
    /// Objective after each sweep.
    pub objective: Vec<f64>,
}

/// Cyclic coordinate descent on the lasso objective for the given design,
/// without intercept.
pub fn lasso_cd(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, record: bool) -> CdResult {
    let (n, d) = x.shape();
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..d).map(|j| x.column(j).norm_squared() / nf).collect();
    let mut beta = DVector::zeros(d);
    let mut r = y.clone();
    let mut objective = Vec::new();
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let xj = x.column(j);
            let old = beta[j];
            let rho = xj.dot(&r) / nf + col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            if new != old {
                r.axpy(old - new, &xj, 1.0);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if record {
            objective.push(0.5 * r.norm_squared() / nf + lambda * beta.lp_norm(1));
        }
        if max_change < TOL {
            break;
        }
    }
    CdResult {
        beta,
        sweeps,
        objective,
    }
}

/// Lasso on internally standardized columns and centered targets;
/// coefficients are reported on the original feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub lambda: f64,
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LassoModel {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> LassoModel {
        let (n, d) = x.shape();
        let s = super::Standardizer::fit(x);
        let xs = s.apply(x);
        let ym = y.mean();
        let yc = y.map(|v| v - ym);
        let fit = lasso_cd(&xs, &yc, lambda, false);
        let coef: Vec<f64> = (0..d).map(|j| fit.beta[j] / s.scale[j]).collect();
        let intercept = ym - (0..d).map(|j| coef[j] * s.mean[j]).sum::<f64>();
        debug_assert_eq!(n, y.len());
        LassoModel {
            lambda,
            coef,
            intercept,
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| self.intercept + (0..x.ncols()).map(|j| self.coef[j] * x[(i, j)]).sum::<f64>())
            .collect()
    }
}

/// `count` values log-spaced from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
