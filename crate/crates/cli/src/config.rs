// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::Invalid;
use affectgroups::digest::sha256_hex;
use affectgroups::evaluation::{EvalConfig, Weighting};
use affectgroups::features::FeatureConfig;
use affectgroups::mobility::MobilityConfig;
use affectgroups::models::{ModelConfig, ModelKind};
use affectgroups::profiling::{ProfilingConfig, Strategy};
use affectgroups::synthgen::{homogeneous_spec, imbalanced_spec, CohortSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Planted,
    Homogeneous,
    Imbalanced,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub preset: Preset,
    pub participants: Option<usize>,
    pub days: Option<usize>,
    pub drop_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub folds: usize,
    pub weighting: Weighting,
    pub model: ModelConfig,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        EvaluationSection {
            folds: e.folds,
            weighting: e.weighting,
            model: e.model,
        }
    }
}

/// Everything a run needs. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Raw channel files. Defaults to `out_dir`.
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Work pool width; 0 uses every core.
    pub threads: usize,
    pub utc_offset_s: i64,
    /// `osm_tag = category` lines replacing the built-in tag map.
    pub tag_map: Option<PathBuf>,
    pub strategies: Vec<String>,
    pub models: Vec<String>,
    pub synth: SynthSection,
    pub mobility: MobilityConfig,
    pub features: FeatureConfig,
    pub profiling: ProfilingConfig,
    pub evaluation: EvaluationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            out_dir: PathBuf::from("."),
            seed: 0,
            threads: 0,
            utc_offset_s: 0,
            tag_map: None,
            strategies: vec![Strategy::DailyActivity.name().into()],
            models: ModelKind::ALL.iter().map(|m| m.name().to_string()).collect(),
            synth: SynthSection::default(),
            mobility: MobilityConfig::default(),
            features: FeatureConfig::default(),
            profiling: ProfilingConfig::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Invalid> {
        let text = std::fs::read_to_string(path).map_err(|e| Invalid(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Invalid(format!("config {}: {e}", path.display())))
    }

    pub fn data_dir(&self) -> &Path {
        self.data_dir.as_deref().unwrap_or(&self.out_dir)
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>, Invalid> {
        self.strategies
            .iter()
            .map(|s| s.parse().map_err(|e| Invalid(format!("strategies: {e}"))))
            .collect()
    }

    pub fn models(&self) -> Result<Vec<ModelKind>, Invalid> {
        self.models
            .iter()
            .map(|s| s.parse().map_err(|e| Invalid(format!("models: {e}"))))
            .collect()
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            folds: self.evaluation.folds,
            weighting: self.evaluation.weighting,
            hour_of_day: self.features.hour_of_day,
            model: self.evaluation.model.clone(),
        }
    }

    pub fn cohort_spec(&self) -> CohortSpec {
        let mut spec = match self.synth.preset {
            Preset::Planted => CohortSpec {
                seed: self.seed,
                ..CohortSpec::default()
            },
            Preset::Homogeneous => homogeneous_spec(self.seed),
            Preset::Imbalanced => imbalanced_spec(self.seed),
        };
        spec.utc_offset_s = self.utc_offset_s;
        if let Some(n) = self.synth.participants {
            spec.n_participants = n;
        }
        if let Some(d) = self.synth.days {
            spec.days = d;
        }
        if let Some(r) = self.synth.drop_rate {
            spec.drop_rate = r;
        }
        spec
    }

    /// Checks that do not touch the file system.
    pub fn validate(&self) -> Result<(), Invalid> {
        let positive = [
            ("mobility.d_max_m", self.mobility.d_max_m > 0.0),
            ("mobility.t_min_s", self.mobility.t_min_s > 0),
            ("mobility.out_of_town_km", self.mobility.out_of_town_km > 0.0),
            ("features.epoch_minutes", self.features.epoch_minutes > 0),
            ("features.comm_window_s", self.features.comm_window_s > 0),
        ];
        for (name, ok) in positive {
            if !ok {
                return Err(Invalid(format!("{name} must be positive")));
            }
        }
        if self.evaluation.folds < 2 {
            return Err(Invalid("evaluation.folds must be at least 2".into()));
        }
        if self.strategies.is_empty() || self.models.is_empty() {
            return Err(Invalid("strategies and models must not be empty".into()));
        }
        self.strategies()?;
        self.models()?;
        self.profiling
            .gmeans
            .validate()
            .map_err(|e| Invalid(format!("profiling.gmeans: {e}")))?;
        self.cohort_spec()
            .validate()
            .map_err(|e| Invalid(format!("synth: {e}")))?;
        Ok(())
    }

    /// Digest of the settings that affect results. Paths and pool width are
    /// left out so the same analysis in another directory hashes the same.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.data_dir = None;
        c.out_dir = PathBuf::new();
        c.threads = 0;
        sha256_hex(&serde_json::to_vec(&c).expect("config is serializable"))
    }
}

/// Fails with a message naming `path` unless it is an existing directory.
pub fn require_dir(what: &str, path: &Path) -> Result<(), Invalid> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Invalid(format!(
            "{what} {} does not exist or is not a directory",
            path.display()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_parse_from_empty_toml() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn sections_override_defaults() {
        let c: RunConfig = toml::from_str(
            "seed = 7\nstrategies = [\"Location\", \"SMS\"]\n[mobility]\nd_max_m = 150.0\n[evaluation]\nfolds = 3\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.mobility.d_max_m, 150.0);
        assert_eq!(c.mobility.t_min_s, 600);
        assert_eq!(c.eval_config().folds, 3);
        assert_eq!(c.strategies().unwrap(), [Strategy::Location, Strategy::Sms]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        let mut c = RunConfig::default();
        c.mobility.t_min_s = 0;
        assert!(c.validate().unwrap_err().0.contains("t_min_s"));
        let c = RunConfig {
            models: vec!["xgboost".into()],
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_ignores_paths() {
        let a = RunConfig::default();
        let b = RunConfig {
            out_dir: "elsewhere".into(),
            threads: 3,
            ..RunConfig::default()
        };
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), RunConfig { seed: 1, ..a.clone() }.digest());
    }
}
