// SPDX-License-Identifier: MIT OR Apache-2.0

//! Raw cohort to features and profiles in one call.

use crate::features::{cohort_features, cohort_profiles, BehaviorProfile, EmaFeatureVector, FeatureConfig};
use crate::ids::ParticipantId;
use crate::ingest::RawCohort;
use crate::mobility::{process_cohort, MobilityConfig, ParticipantMobility, SemanticTimeline, TagMap};
use crate::profiling::ProfilingInput;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct Derived {
    pub participants: Vec<ParticipantId>,
    pub mobility: BTreeMap<ParticipantId, ParticipantMobility>,
    pub timelines: BTreeMap<ParticipantId, SemanticTimeline>,
    pub features: Vec<EmaFeatureVector>,
    pub profiles: BTreeMap<ParticipantId, BehaviorProfile>,
    pub sias: BTreeMap<ParticipantId, u32>,
}

impl Derived {
    pub fn profiling_input(&self) -> ProfilingInput<'_> {
        ProfilingInput {
            participants: &self.participants,
            profiles: &self.profiles,
            sias: &self.sias,
        }
    }
}

pub fn derive(cohort: &RawCohort, tags: &TagMap, mobility: &MobilityConfig, features: &FeatureConfig) -> Derived {
    let mob = process_cohort(cohort, tags, mobility);
    let timelines: BTreeMap<_, _> = mob.iter().map(|(id, m)| (id.clone(), m.timeline.clone())).collect();
    Derived {
        participants: cohort.ids().cloned().collect(),
        features: cohort_features(cohort, &timelines, features),
        profiles: cohort_profiles(cohort, &timelines),
        sias: cohort.sias.clone(),
        mobility: mob,
        timelines,
    }
}

/// [`derive`] with the default tag map and configurations.
pub fn derive_default(cohort: &RawCohort) -> Derived {
    derive(
        cohort,
        &crate::mobility::default_tag_map(),
        &MobilityConfig::default(),
        &FeatureConfig::default(),
    )
}
