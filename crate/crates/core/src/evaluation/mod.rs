// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cross-validated comparison of group models against one generalized
//! model on identical test observations.

mod folds;
mod report;

pub use folds::{balanced_sizes, make_folds, FoldPlan};
pub use report::{
    read_summary, sample_size_analysis, write_plotdata, write_report, write_sample_sizes, write_summary, SampleSizeRow,
    SampleSizeTable, SummaryRow,
};

use crate::features::EmaFeatureVector;
use crate::ids::ParticipantId;
use crate::models::{self, ModelConfig, ModelError, ModelKind};
use crate::profiling::Grouping;
use crate::seed;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} predictions for {1} targets")]
    LengthMismatch(usize, usize),
    #[error("group {0} has a single participant")]
    GroupTooSmall(usize),
    #[error("participant {0} has no feature rows")]
    NoObservations(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{what} line {line}: {reason}")]
    Csv {
        what: &'static str,
        line: u64,
        reason: String,
    },
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if predictions.len() != targets.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), targets.len()));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

/// Weighted mean of per-group RMSEs, weights being the counts given.
pub fn wrmse(per_group: &[(usize, f64)]) -> Result<f64, EvalError> {
    let total: usize = per_group.iter().map(|(n, _)| n).sum();
    if per_group.is_empty() || total == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok(per_group.iter().map(|&(n, r)| n as f64 * r).sum::<f64>() / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Weight groups by test observations.
    #[default]
    Observations,
    /// Weight groups by participants.
    Participants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub folds: usize,
    pub weighting: Weighting,
    pub hour_of_day: bool,
    pub model: ModelConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            weighting: Weighting::Observations,
            hour_of_day: true,
            model: ModelConfig::default(),
        }
    }
}

impl EvalConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config is serializable");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group_id: usize,
    pub n_participants: usize,
    pub n_test_obs: usize,
    pub rmse: f64,
    /// Predicted by the generalized model.
    pub singleton: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub generalized_rmse: f64,
    pub n_test_obs: usize,
    pub wrmse: f64,
    pub groups: Vec<GroupResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: String,
    pub model: ModelKind,
    pub seed: u64,
    pub config_digest: String,
    pub generalized_rmse: f64,
    pub wrmse: f64,
    /// Pooled over folds.
    pub groups: Vec<GroupResult>,
    pub folds: Vec<FoldResult>,
    /// Two standard deviations of the per-fold values.
    pub wrmse_err2sd: f64,
    pub generalized_err2sd: f64,
    /// Fits that fell back to the training mean.
    pub fallback_fits: usize,
}

impl EvalReport {
    /// generalized RMSE − WRMSE; positive when grouping helps.
    pub fn delta(&self) -> f64 {
        self.generalized_rmse - self.wrmse
    }
}

fn two_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    2.0 * (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Feature rows arranged for repeated train/test selection.
pub struct Dataset<'a> {
    rows: &'a [EmaFeatureVector],
    x: DMatrix<f64>,
    y: Vec<f64>,
}

impl<'a> Dataset<'a> {
    pub fn new(rows: &'a [EmaFeatureVector], hour_of_day: bool) -> Dataset<'a> {
        let d = EmaFeatureVector::n_predictors(hour_of_day);
        let mut x = DMatrix::zeros(rows.len(), d);
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.predictors(hour_of_day).into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        Dataset {
            rows,
            x,
            y: rows.iter().map(|r| r.target).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn select(&self, keep: impl Fn(&ParticipantId) -> bool) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| keep(&self.rows[i].participant_id))
            .collect()
    }

    fn matrix(&self, idx: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
        let x = DMatrix::from_fn(idx.len(), self.x.ncols(), |i, j| self.x[(idx[i], j)]);
        (x, idx.iter().map(|&i| self.y[i]).collect())
    }
}

struct Job {
    fold: usize,
    /// `None` is the generalized model.
    group: Option<usize>,
    train: Vec<usize>,
    test: Vec<usize>,
}

struct JobOutput {
    predictions: Vec<f64>,
    fallback: bool,
}

fn run_job(data: &Dataset, job: &Job, kind: ModelKind, cfg: &ModelConfig, seed: u64) -> Result<JobOutput, ModelError> {
    let (xtr, ytr) = data.matrix(&job.train);
    let (xte, _) = data.matrix(&job.test);
    // The same seed for both conditions makes a one-group strategy
    // reproduce the generalized model exactly.
    let fit_seed = seed::derive(seed, &["fit", kind.name(), &job.fold.to_string()]);
    let m = models::fit(kind, &xtr, &ytr, cfg, fit_seed)?;
    Ok(JobOutput {
        predictions: m.predict_mean(&xte)?,
        fallback: m.fallback,
    })
}

/// Train and score the generalized model and every group model on each
/// fold. `rows` must contain the feature rows of every grouped participant.
pub fn evaluate(
    rows: &[EmaFeatureVector],
    grouping: &Grouping,
    kind: ModelKind,
    plan: &FoldPlan,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let data = Dataset::new(rows, cfg.hour_of_day);
    evaluate_dataset(&data, grouping, kind, plan, cfg, seed)
}

pub fn evaluate_dataset(
    data: &Dataset,
    grouping: &Grouping,
    kind: ModelKind,
    plan: &FoldPlan,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let group_of: HashMap<ParticipantId, usize> = grouping.assignment_map().into_iter().collect();
    for p in &grouping.participants {
        if !data.rows.iter().any(|r| &r.participant_id == p) {
            return Err(EvalError::NoObservations(p.to_string()));
        }
    }
    let fold_of = plan.fold_of();
    let in_cohort = |p: &ParticipantId| group_of.contains_key(p);

    let mut jobs = Vec::new();
    for f in 0..plan.n_folds() {
        let test_set = plan.test_set(f);
        let held = |p: &ParticipantId| test_set.contains(p);
        jobs.push(Job {
            fold: f,
            group: None,
            train: data.select(|p| in_cohort(p) && !held(p)),
            test: data.select(|p| in_cohort(p) && held(p)),
        });
        for g in 0..grouping.k() {
            if plan.singleton[g] || plan.groups[g].len() <= f {
                continue;
            }
            let mine = |p: &ParticipantId| group_of.get(p) == Some(&g);
            jobs.push(Job {
                fold: f,
                group: Some(g),
                train: data.select(|p| mine(p) && !held(p)),
                test: data.select(|p| mine(p) && held(p)),
            });
        }
    }
    let outputs: Vec<JobOutput> = jobs
        .par_iter()
        .map(|j| run_job(data, j, kind, &cfg.model, seed))
        .collect::<Result<_, _>>()?;

    // Pooled predictions for both conditions, indexed by row.
    let n = data.len();
    let mut gen_pred = vec![f64::NAN; n];
    let mut grp_pred = vec![f64::NAN; n];
    let mut fallback_fits = 0;
    for (job, out) in jobs.iter().zip(&outputs) {
        fallback_fits += usize::from(out.fallback);
        let target = if job.group.is_none() {
            &mut gen_pred
        } else {
            &mut grp_pred
        };
        for (&i, &p) in job.test.iter().zip(&out.predictions) {
            target[i] = p;
        }
    }
    for i in 0..n {
        if let Some(&g) = group_of.get(&data.rows[i].participant_id) {
            if plan.singleton[g] {
                grp_pred[i] = gen_pred[i];
            }
        }
    }

    /// Predictions, targets and participants of one group.
    type Pooled<'p> = (Vec<f64>, Vec<f64>, std::collections::BTreeSet<&'p ParticipantId>);
    let score = |fold: Option<usize>| -> Result<(f64, usize, Vec<GroupResult>), EvalError> {
        let in_scope = |i: usize| {
            let p = &data.rows[i].participant_id;
            in_cohort(p) && fold.is_none_or(|f| fold_of.get(p) == Some(&f))
        };
        let (mut gp, mut gt) = (Vec::new(), Vec::new());
        let mut per: BTreeMap<usize, Pooled> = BTreeMap::new();
        for i in (0..n).filter(|&i| in_scope(i)) {
            let p = &data.rows[i].participant_id;
            gp.push(gen_pred[i]);
            gt.push(data.y[i]);
            let e = per.entry(group_of[p]).or_default();
            e.0.push(grp_pred[i]);
            e.1.push(data.y[i]);
            e.2.insert(p);
        }
        let gen = rmse(&gp, &gt)?;
        let groups = per
            .into_iter()
            .map(|(g, (p, t, members))| {
                Ok(GroupResult {
                    group_id: g,
                    n_participants: members.len(),
                    n_test_obs: t.len(),
                    rmse: rmse(&p, &t)?,
                    singleton: plan.singleton[g],
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        Ok((gen, gt.len(), groups))
    };
    let weigh = |groups: &[GroupResult]| -> Result<f64, EvalError> {
        let w: Vec<(usize, f64)> = groups
            .iter()
            .map(|g| {
                let n = match cfg.weighting {
                    Weighting::Observations => g.n_test_obs,
                    Weighting::Participants => g.n_participants,
                };
                (n, g.rmse)
            })
            .collect();
        wrmse(&w)
    };

    let (generalized_rmse, _, groups) = score(None)?;
    let wrmse_all = weigh(&groups)?;
    let mut folds = Vec::new();
    for f in 0..plan.n_folds() {
        let (g, n_obs, gs) = score(Some(f))?;
        folds.push(FoldResult {
            fold: f,
            generalized_rmse: g,
            n_test_obs: n_obs,
            wrmse: weigh(&gs)?,
            groups: gs,
        });
    }
    let fw: Vec<f64> = folds.iter().map(|f| f.wrmse).collect();
    let fg: Vec<f64> = folds.iter().map(|f| f.generalized_rmse).collect();
    Ok(EvalReport {
        strategy: grouping.strategy_name.clone(),
        model: kind,
        seed,
        config_digest: cfg.digest(),
        generalized_rmse,
        wrmse: wrmse_all,
        groups,
        wrmse_err2sd: two_sd(&fw),
        generalized_err2sd: two_sd(&fg),
        folds,
        fallback_fits,
    })
}
