// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::seed;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    /// Stop once the duality gap is at most `gap_tol · n`.
    pub gap_tol: f64,
    pub max_epochs: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig {
            c: 1.0,
            epsilon: 1.0,
            gap_tol: 1e-4,
            max_epochs: 2000,
        }
    }
}

/// ½‖w‖² + C Σ max(0, |yᵢ − w·xᵢ| − ε)
pub fn svr_primal(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, c: f64, eps: f64) -> f64 {
    let r = y - x * w;
    0.5 * w.norm_squared() + c * r.iter().map(|v| (v.abs() - eps).max(0.0)).sum::<f64>()
}

/// Dual objective at β with w = Xᵀβ: −½‖w‖² + yᵀβ − ε‖β‖₁.
pub fn svr_dual(y: &DVector<f64>, beta: &DVector<f64>, w: &DVector<f64>, eps: f64) -> f64 {
    -0.5 * w.norm_squared() + y.dot(beta) - eps * beta.lp_norm(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrFit {
    pub w: DVector<f64>,
    pub beta: DVector<f64>,
    pub gap: f64,
    pub epochs: usize,
}

/// Dual coordinate descent for linear ε-insensitive SVR without bias.
pub fn svr_dual_cd(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &SvrConfig, seed: u64) -> SvrFit {
    let (n, d) = x.shape();
    let c = cfg.c;
    let eps = cfg.epsilon;
    let q: Vec<f64> = (0..n).map(|i| x.row(i).norm_squared()).collect();
    let mut beta = DVector::zeros(n);
    let mut w = DVector::zeros(d);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed);
    let tol = cfg.gap_tol * n as f64;
    let mut gap = svr_primal(x, y, &w, c, eps) - svr_dual(y, &beta, &w, eps);
    let mut epochs = 0;
    while epochs < cfg.max_epochs && gap > tol {
        epochs += 1;
        order.shuffle(&mut rng);
        for &i in &order {
            let h = q[i];
            if h == 0.0 {
                continue;
            }
            let xi = x.row(i);
            let g = xi.dot(&w.transpose()) - y[i];
            let (gp, gn) = (g + eps, g - eps);
            let b = beta[i];
            let z = if gp < h * b {
                -gp / h
            } else if gn > h * b {
                -gn / h
            } else {
                -b
            };
            let z = z.clamp(-c - b, c - b);
            if z != 0.0 {
                beta[i] = b + z;
                w.axpy(z, &xi.transpose(), 1.0);
            }
        }
        gap = svr_primal(x, y, &w, c, eps) - svr_dual(y, &beta, &w, eps);
    }
    SvrFit { w, beta, gap, epochs }
}

/// Linear ε-SVR on centered targets; the intercept is the training mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub c: f64,
    pub epsilon: f64,
    pub w: Vec<f64>,
    pub intercept: f64,
}

impl SvrModel {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &SvrConfig, seed: u64) -> SvrModel {
        let intercept = y.mean();
        let yc = y.map(|v| v - intercept);
        let fit = svr_dual_cd(x, &yc, cfg, seed);
        SvrModel {
            c: cfg.c,
            epsilon: cfg.epsilon,
            w: fit.w.iter().copied().collect(),
            intercept,
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| self.intercept + (0..x.ncols()).map(|j| self.w[j] * x[(i, j)]).sum::<f64>())
            .collect()
    }
}
