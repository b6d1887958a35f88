// SPDX-License-Identifier: MIT OR Apache-2.0

//! Regression back-ends behind one fit/predict interface.
//!
//! Saved models are JSON documents:
//!
//! ```text
//! { "format": "affectgroups-model", "version": 1, "kind": "gp", "seed": 7,
//!   "fallback": false, "selected": null,
//!   "standardizer": { "mean": [...], "scale": [...] },
//!   "body": { "Gp": { "hyper": {...}, "d": 16, "x": [...], "y": [...] } } }
//! ```
//!
//! A GP stores its training rows and hyperparameters and is refactorized
//! on load; the other kinds store their fitted parameters directly.

mod forest;
mod gp;
mod kernel;
mod lasso;
mod svr;

pub use forest::{Node, RandomForest, RfConfig, Tree};
pub use gp::{log_marginal_likelihood, optimize_hyper, GpConfig, GpModel};
pub use kernel::{cross_gram, gram, jittered_cholesky, se_kernel, sq_dists, GpHyper, JITTER_MAX, JITTER_START};
pub use lasso::{lambda_max, lasso_cd, lasso_objective, logspace, CdResult, LassoModel};
pub use svr::{svr_dual, svr_dual_cd, svr_primal, SvrConfig, SvrFit, SvrModel};

use crate::seed;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("kernel matrix not positive definite after maximum jitter")]
    NotPositiveDefinite,
    #[error("need at least 2 training rows, got {n}")]
    Degenerate { n: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("unknown model kind `{0}`")]
    UnknownKind(String),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gp,
    Lasso,
    Rf,
    Svr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Gp, ModelKind::Lasso, ModelKind::Rf, ModelKind::Svr];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gp => "gp",
            ModelKind::Lasso => "lasso",
            ModelKind::Rf => "rf",
            ModelKind::Svr => "svr",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gp" => Ok(ModelKind::Gp),
            "lasso" => Ok(ModelKind::Lasso),
            "rf" | "randomforest" | "random_forest" => Ok(ModelKind::Rf),
            "svr" | "svm" => Ok(ModelKind::Svr),
            _ => Err(ModelError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    /// Posterior variance; NaN when the model does not provide one.
    pub variance: f64,
}

impl Prediction {
    pub fn point(mean: f64) -> Prediction {
        Prediction {
            mean,
            variance: f64::NAN,
        }
    }

    pub fn has_variance(&self) -> bool {
        !self.variance.is_nan()
    }
}

/// Per-column centring and scaling from training data (population std;
/// constant columns keep scale 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Standardizer {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let c = x.column(j);
            let m = c.sum() / n;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            mean.push(m);
            scale.push(if sd > 1e-12 { sd } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.scale[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub gp: GpConfig,
    pub rf: RfConfig,
    pub svr_epsilon: f64,
    pub svr_c_grid: Vec<f64>,
    pub svr_max_epochs: usize,
    pub lasso_grid_len: usize,
    /// Smallest λ in the grid as a fraction of λ_max.
    pub lasso_min_ratio: f64,
    pub inner_folds: usize,
    /// Below this many training rows the training mean is predicted.
    pub min_train: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gp: GpConfig::default(),
            rf: RfConfig::default(),
            svr_epsilon: 1.0,
            svr_c_grid: vec![0.01, 0.1, 1.0, 10.0],
            svr_max_epochs: 2000,
            lasso_grid_len: 10,
            lasso_min_ratio: 1e-4,
            inner_folds: 3,
            min_train: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Mean(f64),
    Gp(GpModel),
    Lasso(LassoModel),
    Rf(RandomForest),
    Svr(SvrModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub standardizer: Standardizer,
    pub seed: u64,
    /// True when the training set was too small and the mean is predicted.
    pub fallback: bool,
    /// λ (lasso) or C (SVR) chosen by inner cross-validation.
    pub selected: Option<f64>,
    pub body: ModelBody,
}

fn check_dims(model: usize, x: &DMatrix<f64>) -> Result<(), ModelError> {
    if model != x.ncols() {
        return Err(ModelError::DimensionMismatch {
            expected: model,
            got: x.ncols(),
        });
    }
    Ok(())
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn predict_mean(&self, x: &DMatrix<f64>) -> Result<Vec<f64>, ModelError> {
        check_dims(self.n_features(), x)?;
        let xs = self.standardizer.apply(x);
        Ok(match &self.body {
            ModelBody::Mean(m) => vec![*m; x.nrows()],
            ModelBody::Gp(g) => g.predict_mean(&xs),
            ModelBody::Lasso(l) => l.predict(&xs),
            ModelBody::Rf(r) => r.predict(&xs),
            ModelBody::Svr(s) => s.predict(&xs),
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<Prediction>, ModelError> {
        if let ModelBody::Gp(g) = &self.body {
            check_dims(self.n_features(), x)?;
            return Ok(g.predict(&self.standardizer.apply(x)));
        }
        Ok(self.predict_mean(x)?.into_iter().map(Prediction::point).collect())
    }
}

/// Row indices of `folds` near-equal contiguous chunks of a seeded
/// permutation.
pub fn row_folds(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let k = folds.clamp(1, n.max(1));
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

fn take_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

fn take(y: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]))
}

/// Inner-CV RMSE for each grid value (pooled over folds) and the index of
/// the first minimum.
pub fn cv_select(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &[f64],
    folds: usize,
    seed: u64,
    fit_predict: impl Fn(&DMatrix<f64>, &DVector<f64>, &DMatrix<f64>, f64) -> Vec<f64>,
) -> (usize, Vec<f64>) {
    let plan = row_folds(x.nrows(), folds, seed);
    let scores: Vec<f64> = grid
        .iter()
        .map(|&g| {
            let mut sse = 0.0;
            for held in &plan {
                let train: Vec<usize> = (0..x.nrows()).filter(|i| !held.contains(i)).collect();
                let pred = fit_predict(&take_rows(x, &train), &take(y, &train), &take_rows(x, held), g);
                sse += held.iter().zip(&pred).map(|(&i, p)| (p - y[i]).powi(2)).sum::<f64>();
            }
            (sse / x.nrows() as f64).sqrt()
        })
        .collect();
    let best = (0..grid.len()).fold(0, |b, i| if scores[i] < scores[b] { i } else { b });
    (best, scores)
}

/// The λ grid for standardized `x` and centered `y`.
pub fn lasso_grid(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &ModelConfig) -> Vec<f64> {
    let ym = y.mean();
    let lm = lambda_max(x, &y.map(|v| v - ym));
    if lm <= 0.0 {
        return vec![0.0];
    }
    logspace(cfg.lasso_min_ratio * lm, lm, cfg.lasso_grid_len.max(1))
}

/// Fit one model on the training rows: standardize, select by inner CV
/// where the kind has a grid, refit on everything.
pub fn fit(
    kind: ModelKind,
    xtr: &DMatrix<f64>,
    ytr: &[f64],
    cfg: &ModelConfig,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    let n = xtr.nrows();
    if n == 0 || ytr.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if ytr.len() != n {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            got: ytr.len(),
        });
    }
    let standardizer = Standardizer::fit(xtr);
    let y = DVector::from_column_slice(ytr);
    let mut model = TrainedModel {
        kind,
        standardizer,
        seed,
        fallback: false,
        selected: None,
        body: ModelBody::Mean(y.mean()),
    };
    if n < cfg.min_train {
        model.fallback = true;
        return Ok(model);
    }
    let x = model.standardizer.apply(xtr);
    let cv_seed = seed::derive(seed, &["inner-cv"]);
    model.body = match kind {
        ModelKind::Gp => ModelBody::Gp(GpModel::fit(&x, &y, &cfg.gp, seed::derive(seed, &["gp"]))?),
        ModelKind::Rf => ModelBody::Rf(RandomForest::fit(&x, &y, &cfg.rf, seed::derive(seed, &["rf"]))),
        ModelKind::Lasso => {
            let grid = lasso_grid(&x, &y, cfg);
            let (best, _) = cv_select(&x, &y, &grid, cfg.inner_folds, cv_seed, |a, b, t, l| {
                LassoModel::fit(a, b, l).predict(t)
            });
            model.selected = Some(grid[best]);
            ModelBody::Lasso(LassoModel::fit(&x, &y, grid[best]))
        }
        ModelKind::Svr => {
            let svr_seed = seed::derive(seed, &["svr"]);
            let svr_cfg = |c: f64| SvrConfig {
                c,
                epsilon: cfg.svr_epsilon,
                max_epochs: cfg.svr_max_epochs,
                ..Default::default()
            };
            let (best, _) = cv_select(&x, &y, &cfg.svr_c_grid, cfg.inner_folds, cv_seed, |a, b, t, c| {
                SvrModel::fit(a, b, &svr_cfg(c), svr_seed).predict(t)
            });
            let c = cfg.svr_c_grid[best];
            model.selected = Some(c);
            ModelBody::Svr(SvrModel::fit(&x, &y, &svr_cfg(c), svr_seed))
        }
    };
    Ok(model)
}

/// Fit on the training rows and predict the test rows.
pub fn fit_predict(
    kind: ModelKind,
    xtr: &DMatrix<f64>,
    ytr: &[f64],
    xte: &DMatrix<f64>,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<(Vec<Prediction>, TrainedModel), ModelError> {
    let model = fit(kind, xtr, ytr, cfg, seed)?;
    Ok((model.predict(xte)?, model))
}

pub const FORMAT: &str = "affectgroups-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
enum StoredBody {
    Mean(f64),
    Gp(gp::StoredGp),
    Lasso(LassoModel),
    Rf(RandomForest),
    Svr(SvrModel),
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    format: String,
    version: u32,
    kind: ModelKind,
    seed: u64,
    fallback: bool,
    selected: Option<f64>,
    standardizer: Standardizer,
    body: StoredBody,
}

pub fn dump_model<W: Write>(model: &TrainedModel, w: W) -> Result<(), ModelError> {
    let body = match &model.body {
        ModelBody::Mean(m) => StoredBody::Mean(*m),
        ModelBody::Gp(g) => StoredBody::Gp(g.to_stored()),
        ModelBody::Lasso(l) => StoredBody::Lasso(l.clone()),
        ModelBody::Rf(r) => StoredBody::Rf(r.clone()),
        ModelBody::Svr(s) => StoredBody::Svr(s.clone()),
    };
    let stored = StoredModel {
        format: FORMAT.to_string(),
        version: FORMAT_VERSION,
        kind: model.kind,
        seed: model.seed,
        fallback: model.fallback,
        selected: model.selected,
        standardizer: model.standardizer.clone(),
        body,
    };
    serde_json::to_writer(w, &stored).map_err(|e| ModelError::Format(e.to_string()))
}

pub fn load_model<R: Read>(r: R) -> Result<TrainedModel, ModelError> {
    let s: StoredModel = serde_json::from_reader(r).map_err(|e| ModelError::Format(e.to_string()))?;
    if s.format != FORMAT {
        return Err(ModelError::Format(format!("not a model file (format `{}`)", s.format)));
    }
    if s.version != FORMAT_VERSION {
        return Err(ModelError::Format(format!("unsupported version {}", s.version)));
    }
    let body = match s.body {
        StoredBody::Mean(m) => ModelBody::Mean(m),
        StoredBody::Gp(g) => ModelBody::Gp(g.restore()?),
        StoredBody::Lasso(l) => ModelBody::Lasso(l),
        StoredBody::Rf(r) => ModelBody::Rf(r),
        StoredBody::Svr(v) => ModelBody::Svr(v),
    };
    Ok(TrainedModel {
        kind: s.kind,
        standardizer: s.standardizer,
        seed: s.seed,
        fallback: s.fallback,
        selected: s.selected,
        body,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn linear(n: usize, d: usize, noise: f64, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = seed::rng(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(0.0..1.0));
        let y = (0..n)
            .map(|i| {
                50.0 + (0..d).map(|j| (j as f64 - 1.5) * 8.0 * x[(i, j)]).sum::<f64>() + noise * normal.sample(&mut rng)
            })
            .collect();
        (x, y)
    }

    fn rmse(p: &[f64], y: &[f64]) -> f64 {
        (p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64).sqrt()
    }

    #[test]
    fn tiny_training_set_falls_back() {
        let (x, y) = linear(3, 2, 1.0, 1);
        for kind in ModelKind::ALL {
            let (pred, m) = fit_predict(kind, &x, &y, &x, &ModelConfig::default(), 0).unwrap();
            assert!(m.fallback);
            let mean = y.iter().sum::<f64>() / 3.0;
            assert!(pred.iter().all(|p| (p.mean - mean).abs() < 1e-12));
        }
    }

    #[test]
    fn noiseless_linear_fits() {
        let (x, y) = linear(200, 4, 0.0, 2);
        for kind in [ModelKind::Lasso, ModelKind::Svr] {
            let (pred, _) = fit_predict(kind, &x, &y, &x, &ModelConfig::default(), 0).unwrap();
            let p: Vec<f64> = pred.iter().map(|p| p.mean).collect();
            let tol = if kind == ModelKind::Svr { 1.0 } else { 1e-2 };
            assert!(rmse(&p, &y) < tol, "{kind}: {}", rmse(&p, &y));
        }
    }

    #[test]
    fn grid_choice_matches_exhaustive_evaluation() {
        let (x, y) = linear(90, 6, 4.0, 3);
        let cfg = ModelConfig::default();
        let seed = 5;
        let m = fit(ModelKind::Lasso, &x, &y, &cfg, seed).unwrap();
        // Recompute every grid point's inner-CV error independently.
        let s = Standardizer::fit(&x);
        let xs = s.apply(&x);
        let yv = DVector::from_column_slice(&y);
        let grid = lasso_grid(&xs, &yv, &cfg);
        let folds = row_folds(90, 3, seed::derive(seed, &["inner-cv"]));
        let errs: Vec<f64> = grid
            .iter()
            .map(|&l| {
                let mut sse = 0.0;
                for held in &folds {
                    let tr: Vec<usize> = (0..90).filter(|i| !held.contains(i)).collect();
                    let model = LassoModel::fit(&take_rows(&xs, &tr), &take(&yv, &tr), l);
                    let p = model.predict(&take_rows(&xs, held));
                    sse += held.iter().zip(p).map(|(&i, q)| (q - y[i]).powi(2)).sum::<f64>();
                }
                sse
            })
            .collect();
        let best = errs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(m.selected, Some(grid[best]));
    }

    #[test]
    fn row_folds_partition() {
        let f = row_folds(10, 3, 1);
        assert_eq!(f.iter().map(Vec::len).collect::<Vec<_>>(), [4, 3, 3]);
        let mut all: Vec<usize> = f.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_and_bounded() {
        let (x, y) = linear(120, 5, 5.0, 4);
        let sd = {
            let m = y.iter().sum::<f64>() / 120.0;
            (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 120.0).sqrt()
        };
        for kind in ModelKind::ALL {
            let a = fit(kind, &x, &y, &ModelConfig::default(), 9)
                .unwrap()
                .predict_mean(&x)
                .unwrap();
            let b = fit(kind, &x, &y, &ModelConfig::default(), 9)
                .unwrap()
                .predict_mean(&x)
                .unwrap();
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()), "{kind}");
            assert!(a.iter().all(|&p| p >= 1.0 - 3.0 * sd && p <= 100.0 + 3.0 * sd));
        }
    }

    #[test]
    fn only_gp_reports_variance() {
        let (x, y) = linear(40, 2, 1.0, 6);
        for kind in ModelKind::ALL {
            let (pred, _) = fit_predict(kind, &x, &y, &x, &ModelConfig::default(), 1).unwrap();
            assert_eq!(pred.iter().all(Prediction::has_variance), kind == ModelKind::Gp);
            if kind == ModelKind::Gp {
                assert!(pred.iter().all(|p| p.variance >= 0.0));
            }
        }
    }

    #[test]
    fn dump_load_round_trip() {
        let (x, y) = linear(60, 3, 2.0, 7);
        for kind in ModelKind::ALL {
            let m = fit(kind, &x, &y, &ModelConfig::default(), 2).unwrap();
            let mut buf = Vec::new();
            dump_model(&m, &mut buf).unwrap();
            let back = load_model(buf.as_slice()).unwrap();
            let a = m.predict_mean(&x).unwrap();
            let b = back.predict_mean(&x).unwrap();
            assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-9), "{kind}");
            assert_eq!(back.kind, kind);
        }
        assert!(matches!(
            load_model(&br#"{"format":"x"}"#[..]),
            Err(ModelError::Format(_))
        ));
    }

    #[test]
    fn dimension_checked() {
        let (x, y) = linear(30, 3, 1.0, 8);
        let m = fit(ModelKind::Lasso, &x, &y, &ModelConfig::default(), 0).unwrap();
        assert!(matches!(
            m.predict(&DMatrix::zeros(2, 4)),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kind_names() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("xgboost".parse::<ModelKind>().is_err());
    }
}
