// SPDX-License-Identifier: MIT OR Apache-2.0

use super::gmeans::{gmeans, GmeansConfig};
use super::grouping::Grouping;
use super::ProfilingError;
use crate::features::{build_design_matrix, BehaviorProfile, DesignMatrix, Modality};
use crate::ids::ParticipantId;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub const SIAS_CUTOFFS: [u32; 2] = [34, 43];
pub const SIAS_LEVELS: [&str; 3] = ["low", "medium", "high"];
pub const COMM_LEVELS: [&str; 3] = ["both", "either", "neither"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    Location,
    Activity,
    Sms,
    Calls,
    Sias,
    DailyActivity,
    Communication,
    SiasCommunication,
    AllMinusCommunication,
    AllMinusSias,
    /// Everyone in one group.
    Global,
}

impl Strategy {
    /// The ten profile-based strategies.
    pub const CANONICAL: [Strategy; 10] = [
        Strategy::Location,
        Strategy::Activity,
        Strategy::Sms,
        Strategy::Calls,
        Strategy::Sias,
        Strategy::DailyActivity,
        Strategy::Communication,
        Strategy::SiasCommunication,
        Strategy::AllMinusCommunication,
        Strategy::AllMinusSias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Location => "Location",
            Strategy::Activity => "Activity",
            Strategy::Sms => "SMS",
            Strategy::Calls => "Calls",
            Strategy::Sias => "SIAS",
            Strategy::DailyActivity => "DailyActivity",
            Strategy::Communication => "Communication",
            Strategy::SiasCommunication => "SIAS+Communication",
            Strategy::AllMinusCommunication => "AllMinusCommunication",
            Strategy::AllMinusSias => "AllMinusSIAS",
            Strategy::Global => "Global",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = ProfilingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Strategy::CANONICAL
            .iter()
            .chain(std::iter::once(&Strategy::Global))
            .find(|st| st.name().eq_ignore_ascii_case(t))
            .copied()
            .ok_or_else(|| ProfilingError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfilingConfig {
    pub gmeans: GmeansConfig,
    /// z-score each column before clustering.
    pub standardize: bool,
}

impl Default for ProfilingConfig {
    fn default() -> Self {
        ProfilingConfig {
            gmeans: GmeansConfig::default(),
            standardize: true,
        }
    }
}

/// What the strategies group: the cohort's profiles and SIAS scores.
#[derive(Debug, Clone, Copy)]
pub struct ProfilingInput<'a> {
    pub participants: &'a [ParticipantId],
    pub profiles: &'a BTreeMap<ParticipantId, BehaviorProfile>,
    pub sias: &'a BTreeMap<ParticipantId, u32>,
}

/// Column z-scores (population std); constant columns become zero.
pub fn standardize_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    let n = x.nrows() as f64;
    for j in 0..x.ncols() {
        let col = x.column(j);
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        for i in 0..x.nrows() {
            out[(i, j)] = if sd > 1e-12 { (x[(i, j)] - mean) / sd } else { 0.0 };
        }
    }
    out
}

pub fn sias_level(score: u32) -> usize {
    SIAS_CUTOFFS.iter().filter(|&&c| score >= c).count()
}

pub fn sias_groups(
    participants: &[ParticipantId],
    scores: &BTreeMap<ParticipantId, u32>,
) -> Result<Grouping, ProfilingError> {
    let labels = participants
        .iter()
        .map(|p| {
            scores
                .get(p)
                .map(|&s| SIAS_LEVELS[sias_level(s)].to_string())
                .ok_or_else(|| ProfilingError::MissingScore(p.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Grouping::from_labels(
        Strategy::Sias.name(),
        participants.to_vec(),
        &labels,
        &SIAS_LEVELS,
    ))
}

/// Cluster the rows of a design matrix.
pub fn cluster_design(strategy: &str, dm: &DesignMatrix, cfg: &ProfilingConfig) -> Result<Grouping, ProfilingError> {
    let x = if cfg.standardize {
        standardize_columns(&dm.x)
    } else {
        dm.x.clone()
    };
    let g = gmeans(&x, &cfg.gmeans)?;
    let k = g.k();
    Ok(Grouping {
        strategy_name: strategy.to_string(),
        participants: dm.row_ids.clone(),
        assignment: g.assignment,
        labels: (0..k).map(|i| format!("g{i}")).collect(),
        centroids: Some(g.centroids),
    })
}

fn expected_level(levels: &[f64]) -> f64 {
    levels.iter().enumerate().map(|(l, p)| l as f64 * p).sum()
}

/// Mark the most communicative half of the groups (by mean expected
/// level of their members' profiles) as active.
pub fn active_flags(
    grouping: &Grouping,
    profiles: &BTreeMap<ParticipantId, BehaviorProfile>,
    modality: Modality,
) -> Result<BTreeMap<ParticipantId, bool>, ProfilingError> {
    let k = grouping.k();
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (p, &g) in grouping.participants.iter().zip(&grouping.assignment) {
        let prof = profiles
            .get(p)
            .ok_or_else(|| ProfilingError::MissingProfile(p.to_string()))?;
        sum[g] += expected_level(modality.slice(prof));
        count[g] += 1;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let (ma, mb) = (sum[a] / count[a] as f64, sum[b] / count[b] as f64);
        mb.total_cmp(&ma).then(a.cmp(&b))
    });
    let mut active = vec![false; k];
    for &g in order.iter().take(k / 2) {
        active[g] = true;
    }
    Ok(grouping
        .participants
        .iter()
        .zip(&grouping.assignment)
        .map(|(p, &g)| (p.clone(), active[g]))
        .collect())
}

pub type CommunicationFlags = BTreeMap<ParticipantId, (bool, bool)>;

/// Per-participant (sms_active, calls_active) from the single-modality
/// groupings.
pub fn communication_flags(
    sms: &Grouping,
    calls: &Grouping,
    profiles: &BTreeMap<ParticipantId, BehaviorProfile>,
) -> Result<CommunicationFlags, ProfilingError> {
    let s = active_flags(sms, profiles, Modality::Sms)?;
    let c = active_flags(calls, profiles, Modality::Calls)?;
    sms.participants
        .iter()
        .map(|p| {
            let cs = *c
                .get(p)
                .ok_or_else(|| ProfilingError::InvalidGrouping(format!("{p} missing from calls grouping")))?;
            Ok((p.clone(), (s[p], cs)))
        })
        .collect()
}

fn comm_label(flags: (bool, bool)) -> &'static str {
    match flags {
        (true, true) => COMM_LEVELS[0],
        (false, false) => COMM_LEVELS[2],
        _ => COMM_LEVELS[1],
    }
}

pub fn regroup_communication(
    sms: &Grouping,
    calls: &Grouping,
    profiles: &BTreeMap<ParticipantId, BehaviorProfile>,
) -> Result<Grouping, ProfilingError> {
    let flags = communication_flags(sms, calls, profiles)?;
    let labels: Vec<String> = sms
        .participants
        .iter()
        .map(|p| comm_label(flags[p]).to_string())
        .collect();
    Ok(Grouping::from_labels(
        Strategy::Communication.name(),
        sms.participants.clone(),
        &labels,
        &COMM_LEVELS,
    ))
}

fn design(input: &ProfilingInput, modalities: &[Modality]) -> Result<DesignMatrix, ProfilingError> {
    Ok(build_design_matrix(input.profiles, input.participants, modalities)?)
}

fn communication(
    input: &ProfilingInput,
    cfg: &ProfilingConfig,
) -> Result<(Grouping, CommunicationFlags), ProfilingError> {
    let sms = cluster_design(Strategy::Sms.name(), &design(input, &[Modality::Sms])?, cfg)?;
    let calls = cluster_design(Strategy::Calls.name(), &design(input, &[Modality::Calls])?, cfg)?;
    let flags = communication_flags(&sms, &calls, input.profiles)?;
    Ok((regroup_communication(&sms, &calls, input.profiles)?, flags))
}

pub fn strategy_groups(
    strategy: Strategy,
    input: &ProfilingInput,
    cfg: &ProfilingConfig,
) -> Result<Grouping, ProfilingError> {
    let name = strategy.name();
    let ids = input.participants;
    let mut g = match strategy {
        Strategy::Global => Grouping::single(name, ids.to_vec()),
        Strategy::Location | Strategy::Activity | Strategy::Sms | Strategy::Calls => {
            let m = match strategy {
                Strategy::Location => Modality::Location,
                Strategy::Activity => Modality::Activity,
                Strategy::Sms => Modality::Sms,
                _ => Modality::Calls,
            };
            cluster_design(name, &design(input, &[m])?, cfg)?
        }
        Strategy::Sias => sias_groups(ids, input.sias)?,
        Strategy::Communication => communication(input, cfg)?.0,
        Strategy::SiasCommunication => {
            let sias = sias_groups(ids, input.sias)?;
            let comm = communication(input, cfg)?.0;
            let order: Vec<String> = SIAS_LEVELS
                .iter()
                .flat_map(|s| COMM_LEVELS.iter().map(move |c| format!("{s}/{c}")))
                .collect();
            let order: Vec<&str> = order.iter().map(String::as_str).collect();
            let labels: Vec<String> = sias
                .assignment
                .iter()
                .zip(&comm.assignment)
                .map(|(&a, &b)| format!("{}/{}", sias.labels[a], comm.labels[b]))
                .collect();
            Grouping::from_labels(name, ids.to_vec(), &labels, &order)
        }
        Strategy::DailyActivity => {
            let (_, flags) = communication(input, cfg)?;
            let dm = design(input, &[Modality::Location, Modality::Activity])?.with_block("communication", 2, |p| {
                let (s, c) = flags[p];
                vec![f64::from(u8::from(s)), f64::from(u8::from(c))]
            });
            cluster_design(name, &dm, cfg)?
        }
        Strategy::AllMinusCommunication => {
            if let Some(p) = ids.iter().find(|p| !input.sias.contains_key(*p)) {
                return Err(ProfilingError::MissingScore(p.to_string()));
            }
            let dm = design(input, &[Modality::Location, Modality::Activity])?.with_block("sias", 3, |p| {
                let mut v = vec![0.0; 3];
                v[sias_level(input.sias[p])] = 1.0;
                v
            });
            cluster_design(name, &dm, cfg)?
        }
        Strategy::AllMinusSias => cluster_design(name, &design(input, &Modality::ALL)?, cfg)?,
    };
    g.strategy_name = name.to_string();
    g.validate()?;
    Ok(g)
}
