// SPDX-License-Identifier: MIT OR Apache-2.0

use super::kernel::{cross_gram, gram, jittered_cholesky, sq_dists, GpHyper};
use super::{ModelError, Prediction};
use crate::seed;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    /// Optimizer starts; the first is data-driven, the rest perturbed.
    pub restarts: usize,
    pub max_iter: usize,
    /// Rows used when optimizing hyperparameters.
    pub search_subsample: usize,
    /// Rows used for the final posterior.
    pub max_n: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            restarts: 5,
            max_iter: 60,
            search_subsample: 200,
            max_n: 4000,
        }
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log marginal likelihood of centered targets and its gradient with
/// respect to (ln θ_s, ln θ_ℓ, ln σ_n).
pub fn log_marginal_likelihood(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    hyper: &GpHyper,
) -> Result<(f64, [f64; 3]), ModelError> {
    let n = x.nrows();
    let r2 = sq_dists(x, x);
    let kf = r2.map(|d| super::kernel::se_from_sq_dist(d, hyper));
    let mut ky = kf.clone();
    let s2 = hyper.sigma_n * hyper.sigma_n;
    for i in 0..n {
        ky[(i, i)] += s2;
    }
    let (chol, _) = jittered_cholesky(&ky)?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
    let kinv = chol.inverse();
    let l2 = hyper.theta_l * hyper.theta_l;
    let (mut gs, mut gl, mut tr) = (0.0, 0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            gs += w * kf[(i, j)];
            gl += w * kf[(i, j)] * r2[(i, j)] / l2;
        }
        tr += alpha[j] * alpha[j] - kinv[(j, j)];
    }
    Ok((lml, [gs, 0.5 * gl, s2 * tr]))
}

fn sd(y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let m = y.sum() / n;
    (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

fn median_distance(x: &DMatrix<f64>) -> f64 {
    let r2 = sq_dists(x, x);
    let mut d: Vec<f64> = Vec::new();
    for j in 0..x.nrows() {
        for i in 0..j {
            if r2[(i, j)] > 0.0 {
                d.push(r2[(i, j)].sqrt());
            }
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

struct Search<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Search<'_> {
    fn clamp(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| p[i].clamp(self.lo[i], self.hi[i]))
    }

    /// Negative LML and gradient; an unfactorizable point counts as +∞.
    fn eval(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        match log_marginal_likelihood(self.x, self.y, &GpHyper::from_log(p)) {
            Ok((l, g)) if l.is_finite() => (-l, g.map(|v| -v)),
            _ => (f64::INFINITY, [0.0; 3]),
        }
    }

    /// Projected BFGS with Armijo backtracking.
    fn minimize(&self, p0: [f64; 3], max_iter: usize) -> ([f64; 3], f64) {
        let dot = |a: &[f64; 3], b: &[f64; 3]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut p = self.clamp(p0);
        let (mut f, mut g) = self.eval(p);
        if !f.is_finite() {
            return (p, f);
        }
        let mut h = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for _ in 0..max_iter {
            let mut d: [f64; 3] = std::array::from_fn(|i| -dot(&h[i], &g));
            if dot(&g, &d) >= 0.0 {
                h = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
                d = g.map(|v| -v);
            }
            let big = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if big > 2.0 {
                d = d.map(|v| v * 2.0 / big);
            }
            let mut t = 1.0;
            let accepted = loop {
                let pn = self.clamp(std::array::from_fn(|i| p[i] + t * d[i]));
                let step: [f64; 3] = std::array::from_fn(|i| pn[i] - p[i]);
                let (fnew, gnew) = self.eval(pn);
                if fnew.is_finite() && fnew <= f + 1e-4 * dot(&g, &step) {
                    break Some((pn, fnew, gnew, step));
                }
                t *= 0.5;
                if t < 1e-8 {
                    break None;
                }
            };
            let Some((pn, fnew, gnew, s)) = accepted else { break };
            let yv: [f64; 3] = std::array::from_fn(|i| gnew[i] - g[i]);
            let sy = dot(&s, &yv);
            if sy > 1e-12 {
                let hy: [f64; 3] = std::array::from_fn(|i| dot(&h[i], &yv));
                let yhy = dot(&yv, &hy);
                for i in 0..3 {
                    for j in 0..3 {
                        h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                    }
                }
            }
            let done = (f - fnew).abs() <= 1e-9 * (1.0 + f.abs());
            p = pn;
            f = fnew;
            g = gnew;
            let free_grad = (0..3)
                .filter(|&i| !((p[i] <= self.lo[i] && g[i] > 0.0) || (p[i] >= self.hi[i] && g[i] < 0.0)))
                .fold(0.0f64, |m, i| m.max(g[i].abs()));
            if done || free_grad < 1e-6 {
                break;
            }
        }
        (p, f)
    }
}

/// Hyperparameters maximizing the marginal likelihood over several starts.
pub fn optimize_hyper(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &GpConfig,
    rng: &mut seed::Rng,
) -> Result<GpHyper, ModelError> {
    let sy = sd(y);
    let sy = if sy > 1e-12 { sy } else { 1.0 };
    let ml = median_distance(x);
    let centre = [sy.ln(), ml.ln(), (0.3 * sy).ln()];
    let search = Search {
        x,
        y,
        lo: [centre[0] - 9.0, centre[1] - 5.0, centre[2] - 10.0],
        hi: [centre[0] + 3.0, centre[1] + 5.0, centre[2] + 2.0],
    };
    let mut best: Option<([f64; 3], f64)> = None;
    for r in 0..cfg.restarts.max(1) {
        let start = if r == 0 {
            centre
        } else {
            std::array::from_fn(|i| centre[i] + rng.random_range(-1.5..1.5))
        };
        let (p, f) = search.minimize(start, cfg.max_iter);
        if f.is_finite() && best.is_none_or(|(_, bf)| f < bf) {
            best = Some((p, f));
        }
    }
    best.map(|(p, _)| GpHyper::from_log(p))
        .ok_or(ModelError::NotPositiveDefinite)
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

/// Exact GP posterior with squared-exponential covariance.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub hyper: GpHyper,
    pub y_mean: f64,
    pub jitter: f64,
    x: DMatrix<f64>,
    y: DVector<f64>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl PartialEq for GpModel {
    fn eq(&self, other: &Self) -> bool {
        self.hyper == other.hyper && self.y_mean == other.y_mean && self.x == other.x && self.y == other.y
    }
}

impl GpModel {
    /// Posterior for fixed hyperparameters.
    pub fn with_hyper(x: DMatrix<f64>, y_raw: &DVector<f64>, hyper: GpHyper) -> Result<GpModel, ModelError> {
        hyper.validate()?;
        let n = x.nrows();
        if n < 2 {
            return Err(ModelError::Degenerate { n });
        }
        let y_mean = y_raw.mean();
        let y = y_raw.map(|v| v - y_mean);
        let mut ky = gram(&x, &hyper);
        for i in 0..n {
            ky[(i, i)] += hyper.sigma_n * hyper.sigma_n;
        }
        let (chol, jitter) = jittered_cholesky(&ky)?;
        let alpha = chol.solve(&y);
        Ok(GpModel {
            hyper,
            y_mean,
            jitter,
            x,
            y,
            alpha,
            chol,
        })
    }

    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &GpConfig, seed: u64) -> Result<GpModel, ModelError> {
        let n = x.nrows();
        if n < 2 {
            return Err(ModelError::Degenerate { n });
        }
        let mut rng = seed::rng(seed);
        let pick = |rng: &mut seed::Rng, cap: usize| -> Vec<usize> {
            if n <= cap {
                (0..n).collect()
            } else {
                let mut v = sample(rng, n, cap).into_vec();
                v.sort_unstable();
                v
            }
        };
        let fit_idx = pick(&mut rng, cfg.max_n);
        let search_idx = pick(&mut rng, cfg.search_subsample.max(2));
        let xs = rows(x, &search_idx);
        let ys = DVector::from_iterator(search_idx.len(), search_idx.iter().map(|&i| y[i]));
        let ys = ys.map(|v| v - ys.mean());
        let hyper = optimize_hyper(&xs, &ys, cfg, &mut rng)?;
        let xf = rows(x, &fit_idx);
        let yf = DVector::from_iterator(fit_idx.len(), fit_idx.iter().map(|&i| y[i]));
        GpModel::with_hyper(xf, &yf, hyper)
    }

    pub fn n_train(&self) -> usize {
        self.x.nrows()
    }

    pub fn predict_mean(&self, xte: &DMatrix<f64>) -> Vec<f64> {
        let ks = cross_gram(xte, &self.x, &self.hyper);
        (ks * &self.alpha).iter().map(|v| v + self.y_mean).collect()
    }

    /// Posterior mean and latent-function variance, clamped at zero.
    pub fn predict(&self, xte: &DMatrix<f64>) -> Vec<Prediction> {
        let ks = cross_gram(xte, &self.x, &self.hyper);
        let mean = &ks * &self.alpha;
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&ks.transpose())
            .expect("triangular factor is non-singular");
        let prior = self.hyper.theta_s * self.hyper.theta_s;
        (0..xte.nrows())
            .map(|i| Prediction {
                mean: mean[i] + self.y_mean,
                variance: (prior - v.column(i).norm_squared()).max(0.0),
            })
            .collect()
    }

    pub(crate) fn to_stored(&self) -> StoredGp {
        StoredGp {
            hyper: self.hyper,
            d: self.x.ncols(),
            x: self.x.transpose().as_slice().to_vec(),
            y: self.y.iter().map(|v| v + self.y_mean).collect(),
        }
    }
}

/// Serialized form: training rows and hyperparameters; the factorization
/// is recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct StoredGp {
    hyper: GpHyper,
    d: usize,
    /// Row-major training inputs.
    x: Vec<f64>,
    y: Vec<f64>,
}

impl StoredGp {
    pub(crate) fn restore(self) -> Result<GpModel, ModelError> {
        let n = self.y.len();
        if self.x.len() != n * self.d {
            return Err(ModelError::Format("GP input size mismatch".into()));
        }
        let x = DMatrix::from_row_slice(n, self.d, &self.x);
        GpModel::with_hyper(x, &DVector::from_vec(self.y), self.hyper)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    /// y drawn from the GP prior with the given hyperparameters.
    pub(crate) fn gp_draw(n: usize, d: usize, h: &GpHyper, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        gp_draw_on(n, d, 5.0, h, seed)
    }

    /// Inputs uniform on [0, width)^d.
    pub(crate) fn gp_draw_on(n: usize, d: usize, width: f64, h: &GpHyper, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = seed::rng(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(0.0..width));
        let mut k = gram(&x, h);
        for i in 0..n {
            k[(i, i)] += h.sigma_n * h.sigma_n;
        }
        let (c, _) = jittered_cholesky(&k).unwrap();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let z = DVector::from_fn(n, |_, _| normal.sample(&mut rng));
        (x, c.l() * z)
    }

    /// Central-difference gradient of the LML in log space.
    pub(crate) fn fd_gradient(x: &DMatrix<f64>, y: &DVector<f64>, h: &GpHyper, step: f64) -> [f64; 3] {
        let p = h.to_log();
        std::array::from_fn(|i| {
            let mut a = p;
            let mut b = p;
            a[i] += step;
            b[i] -= step;
            let fa = log_marginal_likelihood(x, y, &GpHyper::from_log(a)).unwrap().0;
            let fb = log_marginal_likelihood(x, y, &GpHyper::from_log(b)).unwrap().0;
            (fa - fb) / (2.0 * step)
        })
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::rng(40);
        for s in 0..20 {
            let n = rng.random_range(5..40);
            let d = rng.random_range(1..6);
            let truth = GpHyper::new(
                rng.random_range(0.5..3.0),
                rng.random_range(0.5..3.0),
                rng.random_range(0.1..1.0),
            )
            .unwrap();
            let (x, y) = gp_draw(n, d, &truth, s);
            let h = GpHyper::new(
                rng.random_range(0.5..3.0),
                rng.random_range(0.5..3.0),
                rng.random_range(0.2..1.0),
            )
            .unwrap();
            let (_, g) = log_marginal_likelihood(&x, &y, &h).unwrap();
            let fd = fd_gradient(&x, &y, &h, 1e-5);
            for i in 0..3 {
                let rel = (g[i] - fd[i]).abs() / fd[i].abs().max(1e-3);
                assert!(rel <= 1e-4, "instance {s} coord {i}: {} vs {}", g[i], fd[i]);
            }
        }
    }

    #[test]
    fn lml_matches_dense_formula() {
        let h = GpHyper::new(1.3, 0.8, 0.4).unwrap();
        let (x, y) = gp_draw(12, 2, &h, 9);
        let mut k = gram(&x, &h);
        for i in 0..12 {
            k[(i, i)] += 0.16;
        }
        let inv = k.clone().try_inverse().unwrap();
        let direct = -0.5 * (y.transpose() * &inv * &y)[0]
            - 0.5 * k.determinant().ln()
            - 6.0 * (2.0 * std::f64::consts::PI).ln();
        let (lml, _) = log_marginal_likelihood(&x, &y, &h).unwrap();
        assert!((lml - direct).abs() < 1e-9);
    }

    #[test]
    fn hyper_recovery() {
        let truth = GpHyper::new(2.0, 1.0, 0.05).unwrap();
        let mut ok = 0;
        for s in 0..20 {
            // A wide domain holds enough independent lengths to pin θ_s.
            let (x, y) = gp_draw_on(50, 1, 25.0, &truth, 100 + s);
            let m = GpModel::fit(&x, &y, &GpConfig::default(), s).unwrap();
            let (got, want) = (m.hyper.to_log(), truth.to_log());
            if (got[0] - want[0]).abs() <= 0.5 && (got[1] - want[1]).abs() <= 0.5 {
                ok += 1;
            }
        }
        assert!(ok >= 16, "recovered in {ok}/20");
    }

    #[test]
    fn posterior_matches_dense_recomputation() {
        let h = GpHyper::new(1.7, 1.1, 0.3).unwrap();
        let (x, y) = gp_draw(30, 3, &h, 5);
        let y = y.map(|v| v + 40.0);
        let m = GpModel::with_hyper(x.clone(), &y, h).unwrap();
        let mut rng = seed::rng(6);
        let xt = DMatrix::from_fn(7, 3, |_, _| rng.random_range(0.0..5.0));
        let mut k = gram(&x, &h);
        for i in 0..30 {
            k[(i, i)] += 0.09;
        }
        let inv = k.try_inverse().unwrap();
        let ks = cross_gram(&xt, &x, &h);
        let ybar = y.mean();
        let yc = y.map(|v| v - ybar);
        let mean = &ks * &inv * &yc;
        let cov = DMatrix::from_element(7, 7, 0.0) + cross_gram(&xt, &xt, &h) - &ks * &inv * ks.transpose();
        for (i, p) in m.predict(&xt).iter().enumerate() {
            assert!((p.mean - (mean[i] + ybar)).abs() < 1e-8);
            assert!((p.variance - cov[(i, i)].max(0.0)).abs() < 1e-8);
        }
        let means = m.predict_mean(&xt);
        for i in 0..7 {
            assert!((means[i] - (mean[i] + ybar)).abs() < 1e-8);
        }
    }

    #[test]
    fn interpolates_with_tiny_noise() {
        let h = GpHyper::new(1.0, 1.0, 1e-6).unwrap();
        let x = DMatrix::from_row_slice(5, 1, &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = DVector::from_vec(vec![1.0, -0.5, 0.3, 0.8, -1.2]);
        let m = GpModel::with_hyper(x.clone(), &y, h).unwrap();
        for (p, t) in m.predict(&x).iter().zip(y.iter()) {
            assert!((p.mean - t).abs() < 1e-3, "{} vs {t}", p.mean);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let h = GpHyper::new(1.5, 0.5, 0.1).unwrap();
        let (x, y) = gp_draw(20, 2, &h, 8);
        let m = GpModel::with_hyper(x, &y, h).unwrap();
        let p = m.predict(&DMatrix::from_row_slice(1, 2, &[1e3, 1e3]))[0];
        assert!((p.mean - m.y_mean).abs() < 1e-12);
        assert!((p.variance - 2.25).abs() < 1e-12);
    }

    #[test]
    fn constant_targets() {
        let mut rng = seed::rng(1);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random_range(0.0..1.0));
        let y = DVector::from_element(30, 42.0);
        let m = GpModel::fit(&x, &y, &GpConfig::default(), 3).unwrap();
        for p in m.predict(&x) {
            assert!((p.mean - 42.0).abs() < 1e-6);
            assert!(p.variance < 1e-3);
        }
        assert!(m.hyper.theta_s < 0.01);
    }

    #[test]
    fn degenerate() {
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(matches!(
            GpModel::fit(&x, &DVector::from_vec(vec![1.0]), &GpConfig::default(), 0),
            Err(ModelError::Degenerate { n: 1 })
        ));
    }
}
