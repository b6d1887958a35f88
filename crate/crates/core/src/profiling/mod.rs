// SPDX-License-Identifier: MIT OR Apache-2.0

//! Participant grouping: k-means, G-means, SIAS levels and the named
//! strategies built on them.

mod anderson;
mod gmeans;
mod grouping;
mod kmeans;
mod strategy;

pub use anderson::{anderson_darling_normal, critical_value, AdTest, MIN_POINTS};
pub use gmeans::{gmeans, GmeansConfig, GmeansResult};
pub use grouping::{adjusted_rand_index, read_groupings, same_partition, write_groupings, Grouping};
pub use kmeans::{kmeans, kmeans_pp_init, lloyd, KMeansResult, LloydConfig};
pub use strategy::{
    active_flags, cluster_design, communication_flags, regroup_communication, sias_groups, sias_level,
    standardize_columns, strategy_groups, CommunicationFlags, ProfilingConfig, ProfilingInput, Strategy, COMM_LEVELS,
    SIAS_CUTOFFS, SIAS_LEVELS,
};

use crate::features::FeatureError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfilingError {
    #[error("k = {k} is not in 1..={n}")]
    KTooLarge { k: usize, n: usize },
    #[error("need at least {min} points, got {n}")]
    TooFewPoints { n: usize, min: usize },
    #[error("unsupported significance level {0}")]
    InvalidAlpha(f64),
    #[error("no SIAS score for participant {0}")]
    MissingScore(String),
    #[error("no behavior profile for participant {0}")]
    MissingProfile(String),
    #[error("unknown grouping strategy `{0}`")]
    UnknownStrategy(String),
    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),
    #[error("groups.csv line {line}: {reason}")]
    GroupsCsv { line: usize, reason: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}
