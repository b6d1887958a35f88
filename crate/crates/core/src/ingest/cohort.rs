// SPDX-License-Identifier: MIT OR Apache-2.0

use super::records::*;
use super::{load_records, write_records, IngestError, LoadReport};
use crate::ids::ParticipantId;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

/// Flat per-channel record lists, as loaded from disk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Streams {
    pub gps: Vec<GpsFix>,
    pub accel: Vec<AccelSample>,
    pub sms: Vec<MessageEvent>,
    pub calls: Vec<CallEvent>,
    pub ema: Vec<EmaResponse>,
}

/// All time-sorted streams of one participant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticipantStreams {
    pub gps: Vec<GpsFix>,
    pub accel: Vec<AccelSample>,
    pub sms: Vec<MessageEvent>,
    pub calls: Vec<CallEvent>,
    pub ema: Vec<EmaResponse>,
}

impl ParticipantStreams {
    /// First and last timestamp over every channel, if any record exists.
    pub fn span(&self) -> Option<(i64, i64)> {
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        let mut widen = |t: i64| {
            lo = lo.min(t);
            hi = hi.max(t);
        };
        for (first, last) in [
            ends(&self.gps, |r| r.timestamp),
            ends(&self.accel, |r| r.timestamp),
            ends(&self.sms, |r| r.timestamp),
            ends(&self.calls, |r| r.start),
            ends(&self.ema, |r| r.prompt_time),
        ]
        .into_iter()
        .flatten()
        {
            widen(first);
            widen(last);
        }
        (lo <= hi).then_some((lo, hi))
    }
}

fn ends<T>(v: &[T], t: impl Fn(&T) -> i64) -> Option<(i64, i64)> {
    Some((t(v.first()?), t(v.last()?)))
}

/// A validated cohort. Immutable once built; participants are keyed by the
/// SIAS roster.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCohort {
    pub participants: BTreeMap<ParticipantId, ParticipantStreams>,
    pub sias: BTreeMap<ParticipantId, u32>,
    pub poi: Vec<PoiRecord>,
    /// Local time = UTC + offset.
    pub utc_offset_s: i64,
}

impl RawCohort {
    pub fn ids(&self) -> impl Iterator<Item = &ParticipantId> {
        self.participants.keys()
    }

    pub fn len(&self) -> usize {
        self.participants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    pub fn get(&self, id: &ParticipantId) -> Option<&ParticipantStreams> {
        self.participants.get(id)
    }

    pub fn ema_count(&self) -> usize {
        self.participants.values().map(|p| p.ema.len()).sum()
    }
}

fn distribute<T: Record>(
    records: Vec<T>,
    roster: &mut BTreeMap<ParticipantId, ParticipantStreams>,
    slot: impl Fn(&mut ParticipantStreams) -> &mut Vec<T>,
) -> Result<(), IngestError> {
    for r in records {
        let id = r.participant().expect("timed channels carry a participant");
        let Some(p) = roster.get_mut(id) else {
            return Err(match T::CHANNEL {
                Channel::Ema => IngestError::OrphanEma(id.to_string()),
                channel => IngestError::OrphanRecord {
                    channel,
                    participant: id.to_string(),
                },
            });
        };
        slot(p).push(r);
    }
    for p in roster.values_mut() {
        slot(p).sort_by_key(|r| r.time());
    }
    Ok(())
}

/// Assemble a cohort and check cross-channel referential integrity.
pub fn build_cohort(
    streams: Streams,
    sias: Vec<SiasScore>,
    poi: Vec<PoiRecord>,
    utc_offset_s: i64,
) -> Result<RawCohort, IngestError> {
    let mut scores = BTreeMap::new();
    for s in sias {
        if scores.insert(s.participant_id.clone(), s.score).is_some() {
            return Err(IngestError::DuplicateScore(s.participant_id.to_string()));
        }
    }
    let mut roster: BTreeMap<ParticipantId, ParticipantStreams> = scores
        .keys()
        .map(|id| (id.clone(), ParticipantStreams::default()))
        .collect();

    // EMA first so an orphan prompt is reported before other orphans.
    distribute(streams.ema, &mut roster, |p| &mut p.ema)?;
    distribute(streams.gps, &mut roster, |p| &mut p.gps)?;
    distribute(streams.accel, &mut roster, |p| &mut p.accel)?;
    distribute(streams.sms, &mut roster, |p| &mut p.sms)?;
    distribute(streams.calls, &mut roster, |p| &mut p.calls)?;

    if roster.values().all(|p| p.ema.is_empty()) {
        return Err(IngestError::EmptyCohort);
    }
    Ok(RawCohort {
        participants: roster,
        sias: scores,
        poi,
        utc_offset_s,
    })
}

fn load_optional<T: Record>(dir: &Path, reports: &mut Vec<LoadReport>) -> Result<Vec<T>, IngestError> {
    let path = dir.join(T::CHANNEL.file_name());
    if T::CHANNEL.optional() && !path.exists() {
        reports.push(LoadReport {
            channel: T::CHANNEL,
            rows_read: 0,
            duplicates_dropped: 0,
            present: false,
        });
        return Ok(Vec::new());
    }
    let (records, report) = load_records::<T>(&path)?;
    reports.push(report);
    Ok(records)
}

/// Load every channel file in `dir` and build the cohort.
pub fn load_cohort(dir: &Path, utc_offset_s: i64) -> Result<(RawCohort, Vec<LoadReport>), IngestError> {
    let mut reports = Vec::new();
    let streams = Streams {
        gps: load_optional(dir, &mut reports)?,
        accel: load_optional(dir, &mut reports)?,
        sms: load_optional(dir, &mut reports)?,
        calls: load_optional(dir, &mut reports)?,
        ema: load_optional(dir, &mut reports)?,
    };
    let sias = load_optional(dir, &mut reports)?;
    let poi = load_optional(dir, &mut reports)?;
    let cohort = build_cohort(streams, sias, poi, utc_offset_s)?;
    Ok((cohort, reports))
}

fn write_file<T: Record>(dir: &Path, records: &[T]) -> Result<(), IngestError> {
    let path = dir.join(T::CHANNEL.file_name());
    let io = |source| IngestError::Io {
        path: path.clone(),
        source,
    };
    let file = File::create(&path).map_err(io)?;
    write_records(BufWriter::new(file), records).map_err(|e| IngestError::Io {
        path: path.clone(),
        source: e.into(),
    })
}

fn gather<T: Record>(cohort: &RawCohort, slot: impl Fn(&ParticipantStreams) -> &Vec<T>) -> Vec<T> {
    let mut all: Vec<T> = cohort
        .participants
        .values()
        .flat_map(|p| slot(p).iter().cloned())
        .collect();
    all.sort_by_key(|r| r.time());
    all
}

/// Write the cohort back as the seven channel files.
pub fn write_cohort(cohort: &RawCohort, dir: &Path) -> Result<(), IngestError> {
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(dir, &gather(cohort, |p| &p.gps))?;
    write_file(dir, &gather(cohort, |p| &p.accel))?;
    write_file(dir, &gather(cohort, |p| &p.sms))?;
    write_file(dir, &gather(cohort, |p| &p.calls))?;
    write_file(dir, &gather(cohort, |p| &p.ema))?;
    let sias: Vec<SiasScore> = cohort
        .sias
        .iter()
        .map(|(id, &score)| SiasScore {
            participant_id: id.clone(),
            score,
        })
        .collect();
    write_file(dir, &sias)?;
    write_file(dir, &cohort.poi)
}
