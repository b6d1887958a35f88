// SPDX-License-Identifier: MIT OR Apache-2.0

//! Group-based prediction of negative affect from passively sensed
//! smartphone data.

pub mod digest;
pub mod evaluation;
pub mod features;
pub mod ids;
pub mod ingest;
pub mod mobility;
pub mod models;
pub mod pipeline;
pub mod profiling;
pub mod seed;
pub mod synthgen;

pub use evaluation::{EvalConfig, EvalReport};
pub use features::{BehaviorProfile, EmaFeatureVector};
pub use ids::ParticipantId;
pub use ingest::RawCohort;
pub use mobility::{SemanticLabel, SemanticTimeline};
pub use models::ModelKind;
pub use profiling::{Grouping, Strategy};
