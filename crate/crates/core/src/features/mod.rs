// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-EMA predictor vectors and per-participant behavior profiles.

mod accel;
mod comm;
mod design;
mod profile;

pub use accel::{accel_magnitude, epoch_accel_stats, magnitude, AccelStats, WINDOW_S};
pub use comm::comm_counts;
pub use design::{build_design_matrix, BlockSpec, DesignMatrix, Modality};
pub use profile::{
    bin_counts, classify_activity, level, profile_activity, profile_calls, profile_location, profile_sms,
    BehaviorProfile, ProfileFlags, ACTIVITY_CUTOFFS, CALL_BIN_S, CALL_CUTOFFS, LOCATION_CLASSES, SMS_BIN_S,
    SMS_CUTOFFS,
};

use crate::ids::ParticipantId;
use crate::ingest::{ParticipantStreams, RawCohort};
use crate::mobility::{SemanticLabel, SemanticTimeline};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("magnitude range is degenerate (max = min)")]
    DegenerateRange,
    #[error("channel `{0}` has no records")]
    EmptyChannel(&'static str),
    #[error("no profile for participant `{participant}` (modality {modality})")]
    MissingProfile { participant: String, modality: Modality },
    #[error("at least one modality is required")]
    NoModalities,
    #[error("{what} line {line}: {reason}")]
    Csv {
        what: &'static str,
        line: u64,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Length of the pre-prompt accelerometer epoch.
    pub epoch_minutes: i64,
    /// Communication look-back window.
    pub comm_window_s: i64,
    /// Include local hour of day among the predictors.
    pub hour_of_day: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            epoch_minutes: 60,
            comm_window_s: 3600,
            hour_of_day: true,
        }
    }
}

/// Predictors and target of one EMA prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaFeatureVector {
    pub participant_id: ParticipantId,
    pub prompt_time: i64,
    pub accel: AccelStats,
    pub sms_count_1h: usize,
    pub call_count_1h: usize,
    /// `None` when the prompt falls outside the GPS timeline.
    pub location: Option<SemanticLabel>,
    pub hour_of_day: f64,
    pub target: f64,
}

pub const PREDICTOR_NAMES: [&str; 16] = [
    "accel_mean",
    "accel_min",
    "accel_max",
    "accel_std",
    "accel_median",
    "accel_var",
    "accel_missing",
    "sms_1h",
    "calls_1h",
    "loc_home",
    "loc_education",
    "loc_leisure",
    "loc_out_of_town",
    "loc_other_house",
    "loc_in_transition",
    "hour_of_day",
];

impl EmaFeatureVector {
    pub fn location_onehot(&self) -> [f64; 6] {
        let mut v = [0.0; 6];
        if let Some(l) = self.location {
            v[l.index()] = 1.0;
        }
        v
    }

    pub fn n_predictors(hour_of_day: bool) -> usize {
        if hour_of_day {
            16
        } else {
            15
        }
    }

    pub fn predictors(&self, hour_of_day: bool) -> Vec<f64> {
        let mut v = Vec::with_capacity(16);
        v.extend_from_slice(&self.accel.values());
        v.push(if self.accel.missing { 1.0 } else { 0.0 });
        v.push(self.sms_count_1h as f64);
        v.push(self.call_count_1h as f64);
        v.extend_from_slice(&self.location_onehot());
        if hour_of_day {
            v.push(self.hour_of_day);
        }
        v
    }
}

pub fn local_hour(t: i64, utc_offset_s: i64) -> f64 {
    (t + utc_offset_s).rem_euclid(86_400) as f64 / 3600.0
}

pub fn ema_features(
    streams: &ParticipantStreams,
    timeline: Option<&SemanticTimeline>,
    cfg: &FeatureConfig,
    utc_offset_s: i64,
) -> Vec<EmaFeatureVector> {
    streams
        .ema
        .iter()
        .map(|e| {
            let p = e.prompt_time;
            let (sms, calls) = comm_counts(&streams.sms, &streams.calls, p, cfg.comm_window_s);
            EmaFeatureVector {
                participant_id: e.participant_id.clone(),
                prompt_time: p,
                accel: epoch_accel_stats(&streams.accel, p, cfg.epoch_minutes * 60),
                sms_count_1h: sms,
                call_count_1h: calls,
                location: timeline.and_then(|tl| tl.label_at(p).ok()),
                hour_of_day: local_hour(p, utc_offset_s),
                target: e.negative_affect as f64,
            }
        })
        .collect()
}

/// Feature vectors of every EMA, ordered by participant then prompt time.
pub fn cohort_features(
    cohort: &RawCohort,
    timelines: &BTreeMap<ParticipantId, SemanticTimeline>,
    cfg: &FeatureConfig,
) -> Vec<EmaFeatureVector> {
    let ids: Vec<&ParticipantId> = cohort.ids().collect();
    ids.par_iter()
        .map(|&id| ema_features(&cohort.participants[id], timelines.get(id), cfg, cohort.utc_offset_s))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

pub fn cohort_profiles(
    cohort: &RawCohort,
    timelines: &BTreeMap<ParticipantId, SemanticTimeline>,
) -> BTreeMap<ParticipantId, BehaviorProfile> {
    let empty = SemanticTimeline {
        participant_id: ParticipantId::new(""),
        visits: Vec::new(),
    };
    let ids: Vec<&ParticipantId> = cohort.ids().collect();
    ids.par_iter()
        .map(|&id| {
            let s = &cohort.participants[id];
            let tl = timelines.get(id).unwrap_or(&empty);
            (
                id.clone(),
                BehaviorProfile::compute(id.clone(), tl, &s.accel, &s.sms, &s.calls, s.span()),
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn csv_err(what: &'static str, line: u64, reason: impl ToString) -> FeatureError {
    FeatureError::Csv {
        what,
        line,
        reason: reason.to_string(),
    }
}

pub fn write_features<W: Write>(out: W, rows: &[EmaFeatureVector]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["participant_id", "prompt_time"];
    header.extend(PREDICTOR_NAMES);
    header.extend(["location", "negative_affect"]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.participant_id.to_string(), r.prompt_time.to_string()];
        rec.extend(r.predictors(true).iter().map(f64::to_string));
        rec.push(r.location.map(|l| l.to_string()).unwrap_or_default());
        rec.push(r.target.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features<R: Read>(input: R) -> Result<Vec<EmaFeatureVector>, FeatureError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| csv_err("features.csv", line, e))?;
        if rec.len() != 20 {
            return Err(csv_err("features.csv", line, "expected 20 fields"));
        }
        let num = |j: usize| -> Result<f64, FeatureError> {
            rec[j].parse::<f64>().map_err(|e| csv_err("features.csv", line, e))
        };
        let int = |j: usize| -> Result<i64, FeatureError> {
            rec[j].parse::<i64>().map_err(|e| csv_err("features.csv", line, e))
        };
        let location = match &rec[18] {
            "" => None,
            s => Some(
                s.parse::<SemanticLabel>()
                    .map_err(|e| csv_err("features.csv", line, e))?,
            ),
        };
        out.push(EmaFeatureVector {
            participant_id: ParticipantId::new(&rec[0]),
            prompt_time: int(1)?,
            accel: AccelStats {
                mean: num(2)?,
                min: num(3)?,
                max: num(4)?,
                std: num(5)?,
                median: num(6)?,
                variance: num(7)?,
                missing: num(8)? != 0.0,
            },
            sms_count_1h: int(9)? as usize,
            call_count_1h: int(10)? as usize,
            location,
            hour_of_day: num(17)?,
            target: num(19)?,
        });
    }
    Ok(out)
}

pub fn write_profiles<W: Write>(
    out: W,
    profiles: &BTreeMap<ParticipantId, BehaviorProfile>,
    sias: &BTreeMap<ParticipantId, u32>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["participant_id"];
    header.extend(BehaviorProfile::COLUMNS);
    header.push("sias");
    w.write_record(&header)?;
    for (id, p) in profiles {
        let mut rec = vec![id.to_string()];
        rec.extend(p.values().iter().map(f64::to_string));
        rec.push(sias.get(id).map(u32::to_string).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub type ProfileTable = (BTreeMap<ParticipantId, BehaviorProfile>, BTreeMap<ParticipantId, u32>);

/// Inverse of [`write_profiles`]. Flags are not persisted and read back as
/// all-clear.
pub fn read_profiles<R: Read>(input: R) -> Result<ProfileTable, FeatureError> {
    let mut r = csv::Reader::from_reader(input);
    let mut profiles = BTreeMap::new();
    let mut sias = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| csv_err("profiles.csv", line, e))?;
        if rec.len() != 19 {
            return Err(csv_err("profiles.csv", line, "expected 19 fields"));
        }
        let v: Vec<f64> = (1..18)
            .map(|j| rec[j].parse::<f64>().map_err(|e| csv_err("profiles.csv", line, e)))
            .collect::<Result<_, _>>()?;
        let id = ParticipantId::new(&rec[0]);
        if !rec[18].is_empty() {
            let s = rec[18].parse::<u32>().map_err(|e| csv_err("profiles.csv", line, e))?;
            sias.insert(id.clone(), s);
        }
        let arr = |r: std::ops::Range<usize>| v[r].to_vec();
        profiles.insert(
            id.clone(),
            BehaviorProfile {
                participant_id: id,
                location: arr(0..5).try_into().expect("5 values"),
                activity: arr(5..8).try_into().expect("3 values"),
                sms: arr(8..13).try_into().expect("5 values"),
                calls: arr(13..17).try_into().expect("4 values"),
                flags: ProfileFlags::default(),
            },
        );
    }
    Ok((profiles, sias))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(loc: Option<SemanticLabel>) -> EmaFeatureVector {
        EmaFeatureVector {
            participant_id: "p1".into(),
            prompt_time: 1234,
            accel: AccelStats::of(&[0.5, 0.7, 0.9]).unwrap(),
            sms_count_1h: 3,
            call_count_1h: 1,
            location: loc,
            hour_of_day: 13.25,
            target: 42.0,
        }
    }

    #[test]
    fn one_location_flag() {
        let v = vector(Some(SemanticLabel::Leisure));
        assert_eq!(v.location_onehot(), [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(vector(None).location_onehot(), [0.0; 6]);
        assert_eq!(v.predictors(true).len(), 16);
        assert_eq!(v.predictors(false).len(), EmaFeatureVector::n_predictors(false));
    }

    #[test]
    fn local_hour_wraps() {
        assert_eq!(local_hour(0, -5 * 3600), 19.0);
        assert_eq!(local_hour(86_400 + 1800, 0), 0.5);
    }

    #[test]
    fn features_csv_round_trip() {
        let rows = vec![vector(Some(SemanticLabel::Home)), vector(None)];
        let mut buf = Vec::new();
        write_features(&mut buf, &rows).unwrap();
        assert_eq!(read_features(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn profiles_csv_round_trip() {
        let p = BehaviorProfile {
            participant_id: "p1".into(),
            location: [0.1, 0.2, 0.3, 0.3, 0.1],
            activity: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            sms: [0.9, 0.1, 0.0, 0.0, 0.0],
            calls: [1.0, 0.0, 0.0, 0.0],
            flags: ProfileFlags::default(),
        };
        let profiles: BTreeMap<_, _> = [(p.participant_id.clone(), p)].into_iter().collect();
        let sias: BTreeMap<_, _> = [(ParticipantId::new("p1"), 37)].into_iter().collect();
        let mut buf = Vec::new();
        write_profiles(&mut buf, &profiles, &sias).unwrap();
        let (p2, s2) = read_profiles(buf.as_slice()).unwrap();
        assert_eq!(p2, profiles);
        assert_eq!(s2, sias);
    }
}
