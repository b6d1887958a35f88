// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded synthetic cohorts with known behavioral archetypes.
//!
//! Each participant follows a daily routine among the POIs of their
//! archetype, carries a duty-cycled accelerometer and exchanges messages and
//! calls at archetype-specific levels. Negative affect at each prompt is a
//! linear function of that prompt's features plus Gaussian noise, so the
//! true grouping and the true regression surface are both known.

mod layout;
mod streams;

pub use layout::{Layout, Place, Segment};
pub use streams::TrueFeatures;

use crate::digest;
use crate::ids::ParticipantId;
use crate::ingest::{write_cohort, IngestError, RawCohort};
use crate::profiling::Grouping;
use crate::seed;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// 2023-01-02 00:00 UTC, a Monday.
pub const DEFAULT_START: i64 = 1_672_617_600;
pub const EMA_PER_DAY: usize = 6;
pub const EMA_FIRST_HOUR: i64 = 9;
pub const EMA_BLOCK_S: i64 = 7_200;

/// Negative affect = intercept + accel·(epoch mean magnitude) + sms·(messages
/// in the last hour) + calls·(calls in the last hour) + home·[at home].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffectModel {
    pub intercept: f64,
    pub accel: f64,
    pub sms: f64,
    pub calls: f64,
    pub home: f64,
}

impl AffectModel {
    pub fn eval(&self, f: &TrueFeatures) -> f64 {
        self.intercept
            + self.accel * f.accel_mean
            + self.sms * f.sms_1h as f64
            + self.calls * f.calls_1h as f64
            + self.home * if f.at_home { 1.0 } else { 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    pub weight: f64,
    /// Dwell proportions in profile order: out of town, education, other
    /// house, home, leisure.
    pub location: [f64; 5],
    /// Proportions of low, medium and high normalized activity.
    pub activity: [f64; 3],
    /// Proportions of hourly message bins per level.
    pub sms_levels: [f64; 5],
    /// Proportions of two-hour call bins per level.
    pub call_levels: [f64; 4],
    /// Physical magnitude range the normalized activity maps onto.
    pub accel_range: (f64, f64),
    pub sias_mean: f64,
    pub affect: AffectModel,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub n_participants: usize,
    pub days: usize,
    pub archetypes: Vec<Archetype>,
    pub seed: u64,
    /// UTC second of local midnight on day one is `start_utc`.
    pub start_utc: i64,
    pub utc_offset_s: i64,
    pub gps_period_s: i64,
    pub gps_noise_m: f64,
    pub accel_period_s: i64,
    /// Consecutive 1 Hz samples at the start of each accelerometer period.
    pub accel_burst_s: i64,
    pub transition_s: i64,
    /// Log-scale spread of per-participant proportions around their
    /// archetype's.
    pub participant_jitter: f64,
    /// Uniform probability of dropping a GPS fix, accelerometer sample or
    /// EMA response.
    pub drop_rate: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_participants: 30,
            days: 14,
            archetypes: planted_archetypes(),
            seed: 0,
            start_utc: DEFAULT_START,
            utc_offset_s: 0,
            gps_period_s: 150,
            gps_noise_m: 10.0,
            accel_period_s: 300,
            accel_burst_s: 10,
            transition_s: 1_200,
            participant_jitter: 0.1,
            drop_rate: 0.0,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), SynthError> {
    if ok {
        Ok(())
    } else {
        Err(SynthError::InvalidSpec(msg()))
    }
}

fn simplex(name: &str, field: &str, p: &[f64]) -> Result<(), SynthError> {
    check(p.iter().all(|&v| v.is_finite() && v >= 0.0), || {
        format!("archetype `{name}`: negative proportion in {field}")
    })?;
    let s: f64 = p.iter().sum();
    check((s - 1.0).abs() <= 1e-9, || {
        format!("archetype `{name}`: {field} sums to {s}, not 1")
    })
}

impl CohortSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        check(self.n_participants >= 1, || "n_participants must be at least 1".into())?;
        check(self.days >= 1, || "days must be at least 1".into())?;
        check(!self.archetypes.is_empty(), || "no archetypes".into())?;
        let w: f64 = self.archetypes.iter().map(|a| a.weight).sum();
        check(self.archetypes.iter().all(|a| a.weight >= 0.0), || {
            "negative archetype weight".into()
        })?;
        check((w - 1.0).abs() <= 1e-9, || {
            format!("archetype weights sum to {w}, not 1")
        })?;
        check(self.gps_period_s > 0 && 86_400 % self.gps_period_s == 0, || {
            "gps_period_s must divide a day".into()
        })?;
        check(self.gps_noise_m >= 0.0, || "gps_noise_m must be non-negative".into())?;
        check(
            self.accel_period_s > 0 && self.accel_burst_s >= 2 && self.accel_burst_s <= self.accel_period_s,
            || "accelerometer bursts must hold at least two samples and fit their period".into(),
        )?;
        check(self.transition_s > 0 && self.transition_s < 3_600, || {
            "transition_s must be in (0, 3600)".into()
        })?;
        check(self.participant_jitter >= 0.0, || {
            "participant_jitter must be non-negative".into()
        })?;
        check((0.0..1.0).contains(&self.drop_rate), || {
            "drop_rate must be in [0, 1)".into()
        })?;
        for a in &self.archetypes {
            simplex(&a.name, "location", &a.location)?;
            simplex(&a.name, "activity", &a.activity)?;
            simplex(&a.name, "sms_levels", &a.sms_levels)?;
            simplex(&a.name, "call_levels", &a.call_levels)?;
            check(a.location[3] >= 0.25, || {
                format!(
                    "archetype `{}` must spend at least a quarter of its time at home",
                    a.name
                )
            })?;
            check(a.accel_range.0 >= 0.0 && a.accel_range.1 > a.accel_range.0, || {
                format!("archetype `{}`: empty accel_range", a.name)
            })?;
            check(a.noise_std >= 0.0, || {
                format!("archetype `{}`: negative noise_std", a.name)
            })?;
        }
        Ok(())
    }

    /// Participants per archetype by largest remainder.
    pub fn archetype_counts(&self) -> Vec<usize> {
        let n = self.n_participants;
        let exact: Vec<f64> = self.archetypes.iter().map(|a| a.weight * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&i, &j| {
            (exact[j] - exact[j].floor())
                .total_cmp(&(exact[i] - exact[i].floor()))
                .then(i.cmp(&j))
        });
        let short = n - counts.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            counts[i] += 1;
        }
        counts
    }

    pub fn participant_ids(&self) -> Vec<ParticipantId> {
        let width = self.n_participants.to_string().len().max(2);
        (1..=self.n_participants)
            .map(|i| ParticipantId::from(format!("p{i:0width$}")))
            .collect()
    }
}

/// Per-participant intended profile, after jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntendedProfile {
    pub location: [f64; 5],
    pub activity: [f64; 3],
    pub sms: [f64; 5],
    pub calls: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub archetype_names: Vec<String>,
    pub affect: Vec<AffectModel>,
    pub noise_std: Vec<f64>,
    pub assignment: BTreeMap<ParticipantId, usize>,
    pub intended: BTreeMap<ParticipantId, IntendedProfile>,
}

impl GroundTruth {
    /// The true archetype partition as a grouping.
    pub fn grouping(&self) -> Grouping {
        let ids: Vec<ParticipantId> = self.assignment.keys().cloned().collect();
        let labels: Vec<String> = self
            .assignment
            .values()
            .map(|&a| self.archetype_names[a].clone())
            .collect();
        let order: Vec<&str> = self.archetype_names.iter().map(String::as_str).collect();
        Grouping::from_labels("GroundTruth", ids, &labels, &order)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["participant_id", "archetype"])?;
        for (id, &a) in &self.assignment {
            out.write_record([id.as_str(), &self.archetype_names[a]])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// A generated cohort with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub spec: CohortSpec,
    pub cohort: RawCohort,
    pub truth: GroundTruth,
    pub layout: Layout,
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const SPEC_FILE: &str = "spec.json";

pub fn generate(spec: &CohortSpec) -> Result<Bundle, SynthError> {
    spec.validate()?;
    let ids = spec.participant_ids();
    let mut archetype_of: Vec<usize> = spec
        .archetype_counts()
        .iter()
        .enumerate()
        .flat_map(|(a, &c)| std::iter::repeat_n(a, c))
        .collect();
    archetype_of.shuffle(&mut seed::substream(spec.seed, &["synth", "assign"]));
    let layout = Layout::build(spec, &archetype_of)?;

    let generated: Vec<_> = ids
        .par_iter()
        .enumerate()
        .map(|(i, id)| streams::participant(spec, &layout, i, id, archetype_of[i]))
        .collect();

    let mut participants = BTreeMap::new();
    let mut sias = BTreeMap::new();
    let mut assignment = BTreeMap::new();
    let mut intended = BTreeMap::new();
    for (i, g) in generated.into_iter().enumerate() {
        let id = ids[i].clone();
        participants.insert(id.clone(), g.streams);
        sias.insert(id.clone(), g.sias);
        assignment.insert(id.clone(), archetype_of[i]);
        intended.insert(id, g.intended);
    }
    let truth = GroundTruth {
        archetype_names: spec.archetypes.iter().map(|a| a.name.clone()).collect(),
        affect: spec.archetypes.iter().map(|a| a.affect).collect(),
        noise_std: spec.archetypes.iter().map(|a| a.noise_std).collect(),
        assignment,
        intended,
    };
    let cohort = RawCohort {
        participants,
        sias,
        poi: layout.poi_records(),
        utc_offset_s: spec.utc_offset_s,
    };
    Ok(Bundle {
        spec: spec.clone(),
        cohort,
        truth,
        layout,
    })
}

/// The canonical 30-participant, 14-day, three-archetype benchmark.
pub fn planted_benchmark(seed: u64) -> Bundle {
    generate(&CohortSpec {
        seed,
        ..CohortSpec::default()
    })
    .expect("the planted benchmark is valid")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Files written by [`write_bundle`], in digest order.
pub fn bundle_files() -> Vec<&'static str> {
    let mut names: Vec<&str> = crate::ingest::Channel::ALL.iter().map(|c| c.file_name()).collect();
    names.extend([GROUND_TRUTH_FILE, SPEC_FILE]);
    names.sort_unstable();
    names
}

/// Write the channel files, `ground_truth.csv` and `spec.json`; returns the
/// bundle digest.
pub fn write_bundle(bundle: &Bundle, dir: &Path) -> Result<String, SynthError> {
    write_cohort(&bundle.cohort, dir)?;
    let gt = dir.join(GROUND_TRUTH_FILE);
    let file = File::create(&gt).map_err(io_err(&gt))?;
    bundle
        .truth
        .write_csv(BufWriter::new(file))
        .map_err(|e| SynthError::Io {
            path: gt.clone(),
            source: e.into(),
        })?;
    let sp = dir.join(SPEC_FILE);
    let json = serde_json::to_string_pretty(&bundle.spec).expect("spec serializes");
    std::fs::write(&sp, json + "\n").map_err(io_err(&sp))?;
    bundle_digest(dir)
}

pub fn bundle_digest(dir: &Path) -> Result<String, SynthError> {
    let paths: Vec<PathBuf> = bundle_files().iter().map(|f| dir.join(f)).collect();
    digest::files_sha256(&paths).map_err(|(path, source)| SynthError::Io { path, source })
}

#[allow(clippy::too_many_arguments)]
fn archetype(
    name: &str,
    weight: f64,
    location: [f64; 5],
    activity: [f64; 3],
    sms_levels: [f64; 5],
    call_levels: [f64; 4],
    sias_mean: f64,
    affect: AffectModel,
) -> Archetype {
    Archetype {
        name: name.into(),
        weight,
        location,
        activity,
        sms_levels,
        call_levels,
        accel_range: (0.5, 2.0),
        sias_mean,
        affect,
        noise_std: 5.0,
    }
}

fn affect(intercept: f64, accel: f64, sms: f64, calls: f64, home: f64) -> AffectModel {
    AffectModel {
        intercept,
        accel,
        sms,
        calls,
        home,
    }
}

fn student(weight: f64) -> Archetype {
    archetype(
        "student",
        weight,
        [0.0, 0.35, 0.05, 0.45, 0.15],
        [0.5, 0.3, 0.2],
        [0.1, 0.2, 0.3, 0.25, 0.15],
        [0.6, 0.3, 0.1, 0.0],
        40.0,
        affect(30.0, 5.0, 0.8, 1.5, 8.0),
    )
}

fn homebody(weight: f64) -> Archetype {
    archetype(
        "homebody",
        weight,
        [0.0, 0.0, 0.1, 0.8, 0.1],
        [0.8, 0.15, 0.05],
        [0.5, 0.4, 0.1, 0.0, 0.0],
        [0.8, 0.2, 0.0, 0.0],
        50.0,
        affect(65.0, -5.0, -1.5, -2.0, -8.0),
    )
}

fn social(weight: f64) -> Archetype {
    archetype(
        "social",
        weight,
        [0.1, 0.0, 0.15, 0.5, 0.25],
        [0.3, 0.3, 0.4],
        [0.2, 0.4, 0.3, 0.1, 0.0],
        [0.2, 0.3, 0.3, 0.2],
        25.0,
        affect(45.0, -5.0, -0.8, 2.5, 4.0),
    )
}

/// Student, homebody and social archetypes in equal shares, with opposite
/// affect slopes on messaging.
pub fn planted_archetypes() -> Vec<Archetype> {
    vec![student(1.0 / 3.0), homebody(1.0 / 3.0), social(1.0 / 3.0)]
}

/// One archetype only: no grouping can help.
pub fn homogeneous_spec(seed: u64) -> CohortSpec {
    CohortSpec {
        seed,
        archetypes: vec![student(1.0)],
        ..CohortSpec::default()
    }
}

/// 36 participants in nine archetypes of sizes 10, 8, 6, 4, 2, 2, 2, 1
/// and 1.
pub fn imbalanced_spec(seed: u64) -> CohortSpec {
    let share = |n: f64| n / 36.0;
    let mut archetypes = vec![student(share(10.0)), homebody(share(8.0)), social(share(6.0))];
    let extra = [
        (
            "commuter",
            4.0,
            [0.05, 0.3, 0.0, 0.5, 0.15],
            [0.4, 0.4, 0.2],
            [0.3, 0.4, 0.2, 0.1, 0.0],
            [0.4, 0.4, 0.2, 0.0],
            35.0,
            affect(55.0, 4.0, 1.0, -1.5, -4.0),
        ),
        (
            "night-owl",
            2.0,
            [0.0, 0.1, 0.2, 0.4, 0.3],
            [0.35, 0.35, 0.3],
            [0.05, 0.15, 0.3, 0.3, 0.2],
            [0.3, 0.4, 0.2, 0.1],
            45.0,
            affect(60.0, -3.0, -0.7, 1.0, 6.0),
        ),
        (
            "athlete",
            2.0,
            [0.05, 0.2, 0.05, 0.4, 0.3],
            [0.2, 0.3, 0.5],
            [0.3, 0.5, 0.2, 0.0, 0.0],
            [0.5, 0.4, 0.1, 0.0],
            20.0,
            affect(25.0, 8.0, 1.2, 0.5, -6.0),
        ),
        (
            "caregiver",
            2.0,
            [0.0, 0.05, 0.25, 0.6, 0.1],
            [0.6, 0.3, 0.1],
            [0.2, 0.5, 0.3, 0.0, 0.0],
            [0.3, 0.3, 0.3, 0.1],
            55.0,
            affect(70.0, -2.0, 0.5, -3.0, 5.0),
        ),
        (
            "traveler",
            1.0,
            [0.2, 0.05, 0.05, 0.5, 0.2],
            [0.3, 0.4, 0.3],
            [0.4, 0.4, 0.2, 0.0, 0.0],
            [0.2, 0.5, 0.3, 0.0],
            30.0,
            affect(20.0, 6.0, 1.5, 2.0, -3.0),
        ),
        (
            "recluse",
            1.0,
            [0.0, 0.0, 0.0, 0.9, 0.1],
            [0.85, 0.1, 0.05],
            [0.7, 0.3, 0.0, 0.0, 0.0],
            [0.9, 0.1, 0.0, 0.0],
            65.0,
            affect(80.0, -4.0, -2.0, -2.0, 3.0),
        ),
    ];
    for (name, n, location, activity, sms, calls, sias, f) in extra {
        archetypes.push(archetype(name, share(n), location, activity, sms, calls, sias, f));
    }
    CohortSpec {
        seed,
        n_participants: 36,
        archetypes,
        ..CohortSpec::default()
    }
}

#[cfg(test)]
mod tests;
