// SPDX-License-Identifier: MIT OR Apache-2.0

use super::stay::StayPoint;
use super::{MobilityError, SemanticLabel};
use crate::ids::ParticipantId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub label: SemanticLabel,
    pub start: i64,
    pub end: i64,
}

impl Visit {
    pub fn duration(&self) -> i64 {
        self.end - self.start
    }
}

/// Non-overlapping labeled visits covering `[first fix, last fix]`.
///
/// Visits are half-open except the last one, which also contains the final
/// fix time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticTimeline {
    pub participant_id: ParticipantId,
    pub visits: Vec<Visit>,
}

impl SemanticTimeline {
    pub fn coverage(&self) -> Option<(i64, i64)> {
        Some((self.visits.first()?.start, self.visits.last()?.end))
    }

    pub fn total_duration(&self) -> i64 {
        self.visits.iter().map(Visit::duration).sum()
    }

    /// Label of the visit containing `t`.
    pub fn label_at(&self, t: i64) -> Result<SemanticLabel, MobilityError> {
        let (lo, hi) = self.coverage().ok_or(MobilityError::OutOfCoverage(t))?;
        if t < lo || t > hi {
            return Err(MobilityError::OutOfCoverage(t));
        }
        let idx = self.visits.partition_point(|v| v.start <= t);
        Ok(self.visits[idx - 1].label)
    }
}

/// Interleave labeled stays with `InTransition` spans over the trace span.
pub fn build_timeline(
    participant_id: ParticipantId,
    trace_span: Option<(i64, i64)>,
    stays: &[StayPoint],
    labels: &[SemanticLabel],
) -> SemanticTimeline {
    assert_eq!(stays.len(), labels.len(), "one label per stay");
    let mut visits = Vec::new();
    if let Some((first, last)) = trace_span {
        let mut cursor = first;
        let mut push = |label, start: i64, end: i64| {
            if end > start {
                visits.push(Visit { label, start, end });
            }
        };
        for (s, &label) in stays.iter().zip(labels) {
            push(SemanticLabel::InTransition, cursor, s.start);
            push(label, s.start.max(cursor), s.end);
            cursor = cursor.max(s.end);
        }
        push(SemanticLabel::InTransition, cursor, last);
    }
    SemanticTimeline { participant_id, visits }
}

pub fn write_timelines<'a, W: Write>(
    out: W,
    timelines: impl IntoIterator<Item = &'a SemanticTimeline>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "label", "start", "end"])?;
    for tl in timelines {
        for v in &tl.visits {
            w.write_record([
                tl.participant_id.to_string(),
                v.label.to_string(),
                v.start.to_string(),
                v.end.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_timelines<R: Read>(input: R) -> Result<BTreeMap<ParticipantId, SemanticTimeline>, MobilityError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: BTreeMap<ParticipantId, SemanticTimeline> = BTreeMap::new();
    for (i, row) in r.records().enumerate() {
        let bad = || MobilityError::TimelineRow { line: i as u64 + 2 };
        let row = row.map_err(|_| bad())?;
        if row.len() != 4 {
            return Err(bad());
        }
        let id = ParticipantId::new(&row[0]);
        let visit = Visit {
            label: row[1].parse().map_err(|_| bad())?,
            start: row[2].parse().map_err(|_| bad())?,
            end: row[3].parse().map_err(|_| bad())?,
        };
        out.entry(id.clone())
            .or_insert_with(|| SemanticTimeline {
                participant_id: id,
                visits: Vec::new(),
            })
            .visits
            .push(visit);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stay(start: i64, end: i64) -> StayPoint {
        StayPoint {
            participant_id: "p".into(),
            centroid_lat: 0.0,
            centroid_lon: 0.0,
            start,
            end,
            fix_count: 2,
            first_fix: 0,
        }
    }

    #[test]
    fn gap_becomes_transition() {
        let stays = [stay(0, 3600), stay(4800, 9000)];
        let tl = build_timeline(
            "p".into(),
            Some((0, 9000)),
            &stays,
            &[SemanticLabel::Home, SemanticLabel::Education],
        );
        let labels: Vec<_> = tl.visits.iter().map(|v| v.label).collect();
        assert_eq!(
            labels,
            vec![
                SemanticLabel::Home,
                SemanticLabel::InTransition,
                SemanticLabel::Education
            ]
        );
        assert_eq!(tl.visits[1].duration(), 1200);
    }

    #[test]
    fn no_stays_is_one_transition() {
        let tl = build_timeline("p".into(), Some((100, 5000)), &[], &[]);
        assert_eq!(
            tl.visits,
            vec![Visit {
                label: SemanticLabel::InTransition,
                start: 100,
                end: 5000
            }]
        );
    }

    #[test]
    fn five_stays_cover_span() {
        let stays = [
            stay(600, 3000),
            stay(3600, 7200),
            stay(7300, 8000),
            stay(9000, 20000),
            stay(21000, 30000),
        ];
        let labels = [
            SemanticLabel::Home,
            SemanticLabel::Education,
            SemanticLabel::Leisure,
            SemanticLabel::OtherHouse,
            SemanticLabel::Home,
        ];
        let tl = build_timeline("p".into(), Some((0, 31000)), &stays, &labels);
        // Coverage-sum oracle: stays plus gaps.
        let stay_sum: i64 = stays.iter().map(|s| s.end - s.start).sum();
        let gaps = 600 + 600 + 100 + 1000 + 1000 + 1000;
        assert_eq!(stay_sum + gaps, 31000);
        assert_eq!(tl.total_duration(), 31000);
        for w in tl.visits.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
    }

    #[test]
    fn label_at_is_half_open() {
        let tl = build_timeline(
            "p".into(),
            Some((0, 9000)),
            &[stay(0, 3600), stay(4800, 9000)],
            &[SemanticLabel::Home, SemanticLabel::Education],
        );
        assert_eq!(tl.label_at(1800).unwrap(), SemanticLabel::Home);
        assert_eq!(tl.label_at(3600).unwrap(), SemanticLabel::InTransition);
        assert_eq!(tl.label_at(4800).unwrap(), SemanticLabel::Education);
        assert_eq!(tl.label_at(9000).unwrap(), SemanticLabel::Education);
        assert!(matches!(tl.label_at(-1), Err(MobilityError::OutOfCoverage(-1))));
        assert!(tl.label_at(9001).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let tl = build_timeline(
            "p".into(),
            Some((0, 9000)),
            &[stay(10, 3600)],
            &[SemanticLabel::OutOfTown],
        );
        let mut buf = Vec::new();
        write_timelines(&mut buf, [&tl]).unwrap();
        let back = read_timelines(buf.as_slice()).unwrap();
        assert_eq!(back[&ParticipantId::new("p")], tl);
    }
}
