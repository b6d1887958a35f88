// SPDX-License-Identifier: MIT OR Apache-2.0

use super::accel::accel_magnitude;
use super::FeatureError;
use crate::ids::ParticipantId;
use crate::ingest::{AccelSample, CallEvent, MessageEvent};
use crate::mobility::{SemanticLabel, SemanticTimeline};
use serde::{Deserialize, Serialize};

/// Location classes of the profile, in block order.
pub const LOCATION_CLASSES: [SemanticLabel; 5] = [
    SemanticLabel::OutOfTown,
    SemanticLabel::Education,
    SemanticLabel::OtherHouse,
    SemanticLabel::Home,
    SemanticLabel::Leisure,
];

/// Normalized activity cutoffs: Low < 0.2 <= Medium < 0.3 <= High.
pub const ACTIVITY_CUTOFFS: [f64; 2] = [0.2, 0.3];
/// Messages per hour: VeryLow < 1 <= Low < 10 <= Medium < 20 <= High < 30 <= VeryHigh.
pub const SMS_CUTOFFS: [usize; 4] = [1, 10, 20, 30];
/// Calls per two hours: Low < 1 <= Medium < 3 <= High < 6 <= VeryHigh.
pub const CALL_CUTOFFS: [usize; 3] = [1, 3, 6];
pub const SMS_BIN_S: i64 = 3_600;
pub const CALL_BIN_S: i64 = 7_200;

/// Level index of `value` given ascending left-closed cutoffs.
pub fn level<T: PartialOrd>(value: T, cutoffs: &[T]) -> usize {
    cutoffs.iter().take_while(|c| value >= **c).count()
}

/// Dwell-time proportions over [`LOCATION_CLASSES`], excluding transitions.
/// Returns `None` when no labeled dwell time exists.
pub fn profile_location(timeline: &SemanticTimeline) -> Option<[f64; 5]> {
    let mut dwell = [0i64; 5];
    for v in &timeline.visits {
        if let Some(i) = LOCATION_CLASSES.iter().position(|&c| c == v.label) {
            dwell[i] += v.duration();
        }
    }
    let total: i64 = dwell.iter().sum();
    (total > 0).then(|| dwell.map(|d| d as f64 / total as f64))
}

/// Proportions of normalized magnitudes per activity level.
pub fn classify_activity(normalized: &[f64]) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for &m in normalized {
        counts[level(m, &ACTIVITY_CUTOFFS)] += 1;
    }
    proportions(counts, normalized.len())
}

/// Activity-level proportions after per-participant min/max normalization.
pub fn profile_activity(samples: &[AccelSample]) -> Result<[f64; 3], FeatureError> {
    if samples.is_empty() {
        return Err(FeatureError::EmptyChannel("accel"));
    }
    let mags: Vec<f64> = samples.iter().map(accel_magnitude).collect();
    let (lo, hi) = mags.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &m| {
        (lo.min(m), hi.max(m))
    });
    if hi <= lo {
        return Err(FeatureError::DegenerateRange);
    }
    let normalized: Vec<f64> = mags.iter().map(|m| (m - lo) / (hi - lo)).collect();
    Ok(classify_activity(&normalized))
}

/// Event counts per bin of `bin_s` seconds tiling `[span.0, span.1]` from its
/// start; the trailing partial bin is dropped.
pub fn bin_counts(times: impl IntoIterator<Item = i64>, span: (i64, i64), bin_s: i64) -> Vec<usize> {
    let n_bins = ((span.1 - span.0).max(0) / bin_s) as usize;
    let mut bins = vec![0usize; n_bins];
    for t in times {
        if t < span.0 {
            continue;
        }
        let b = ((t - span.0) / bin_s) as usize;
        if b < n_bins {
            bins[b] += 1;
        }
    }
    bins
}

fn level_proportions<const N: usize>(bins: &[usize], cutoffs: &[usize]) -> Option<[f64; N]> {
    if bins.is_empty() {
        return None;
    }
    let mut counts = [0usize; N];
    for &b in bins {
        counts[level(b, cutoffs)] += 1;
    }
    Some(proportions(counts, bins.len()))
}

fn proportions<const N: usize>(counts: [usize; N], total: usize) -> [f64; N] {
    if total == 0 {
        return [0.0; N];
    }
    counts.map(|c| c as f64 / total as f64)
}

/// Proportion of hourly bins per messaging level; `None` if the span holds
/// no whole hour.
pub fn profile_sms(events: &[MessageEvent], span: (i64, i64)) -> Option<[f64; 5]> {
    let bins = bin_counts(events.iter().map(|e| e.timestamp), span, SMS_BIN_S);
    level_proportions(&bins, &SMS_CUTOFFS)
}

/// Proportion of two-hour bins per call level, calls binned by start time.
pub fn profile_calls(events: &[CallEvent], span: (i64, i64)) -> Option<[f64; 4]> {
    let bins = bin_counts(events.iter().map(|e| e.start), span, CALL_BIN_S);
    level_proportions(&bins, &CALL_CUTOFFS)
}

/// Which profile blocks could not be computed from data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileFlags {
    pub location_empty: bool,
    pub activity_empty: bool,
    /// Constant magnitude stream; all activity mass assigned to Low.
    pub activity_degenerate: bool,
    pub sms_empty: bool,
    pub calls_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub participant_id: ParticipantId,
    pub location: [f64; 5],
    pub activity: [f64; 3],
    pub sms: [f64; 5],
    pub calls: [f64; 4],
    pub flags: ProfileFlags,
}

impl BehaviorProfile {
    pub const COLUMNS: [&'static str; 17] = [
        "loc_out_of_town",
        "loc_education",
        "loc_friends_houses",
        "loc_home",
        "loc_leisure",
        "act_low",
        "act_medium",
        "act_high",
        "sms_very_low",
        "sms_low",
        "sms_medium",
        "sms_high",
        "sms_very_high",
        "call_low",
        "call_medium",
        "call_high",
        "call_very_high",
    ];

    pub fn compute(
        participant_id: ParticipantId,
        timeline: &SemanticTimeline,
        accel: &[AccelSample],
        sms: &[MessageEvent],
        calls: &[CallEvent],
        span: Option<(i64, i64)>,
    ) -> BehaviorProfile {
        let mut flags = ProfileFlags::default();
        let location = profile_location(timeline).unwrap_or_else(|| {
            flags.location_empty = true;
            [0.0; 5]
        });
        let activity = match profile_activity(accel) {
            Ok(a) => a,
            Err(FeatureError::DegenerateRange) => {
                flags.activity_degenerate = true;
                [1.0, 0.0, 0.0]
            }
            Err(_) => {
                flags.activity_empty = true;
                [0.0; 3]
            }
        };
        let span = span.unwrap_or((0, 0));
        let sms = profile_sms(sms, span).unwrap_or_else(|| {
            flags.sms_empty = true;
            [0.0; 5]
        });
        let calls = profile_calls(calls, span).unwrap_or_else(|| {
            flags.calls_empty = true;
            [0.0; 4]
        });
        BehaviorProfile {
            participant_id,
            location,
            activity,
            sms,
            calls,
            flags,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(17);
        v.extend_from_slice(&self.location);
        v.extend_from_slice(&self.activity);
        v.extend_from_slice(&self.sms);
        v.extend_from_slice(&self.calls);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{CallDirection, MessageDirection};
    use crate::mobility::Visit;
    use rand::Rng;

    fn timeline(visits: &[(SemanticLabel, i64)]) -> SemanticTimeline {
        let mut t = 0;
        SemanticTimeline {
            participant_id: "p".into(),
            visits: visits
                .iter()
                .map(|&(label, d)| {
                    let v = Visit {
                        label,
                        start: t,
                        end: t + d,
                    };
                    t += d;
                    v
                })
                .collect(),
        }
    }

    fn sms_at(t: i64) -> MessageEvent {
        MessageEvent {
            participant_id: "p".into(),
            timestamp: t,
            direction: MessageDirection::Received,
        }
    }

    fn call_at(t: i64) -> CallEvent {
        CallEvent {
            participant_id: "p".into(),
            start: t,
            duration: 30,
            direction: CallDirection::Outgoing,
        }
    }

    fn accel(m: f64) -> AccelSample {
        AccelSample {
            participant_id: "p".into(),
            timestamp: 0,
            x: m,
            y: m,
            z: m,
        }
    }

    #[test]
    fn all_home() {
        let tl = timeline(&[
            (SemanticLabel::Home, 5000),
            (SemanticLabel::InTransition, 300),
            (SemanticLabel::Home, 100),
        ]);
        assert_eq!(profile_location(&tl), Some([0.0, 0.0, 0.0, 1.0, 0.0]));
    }

    #[test]
    fn school_home_split_is_dwell_ratio() {
        // 49.2% education, 38.7% home, 4.4% friends, 2.0% out, 5.8% leisure (per-mille seconds)
        let tl = timeline(&[
            (SemanticLabel::Education, 4920),
            (SemanticLabel::InTransition, 777),
            (SemanticLabel::Home, 3870),
            (SemanticLabel::OtherHouse, 440),
            (SemanticLabel::OutOfTown, 200),
            (SemanticLabel::InTransition, 50),
            (SemanticLabel::Leisure, 580),
        ]);
        let p = profile_location(&tl).unwrap();
        let total = 4920.0 + 3870.0 + 440.0 + 200.0 + 580.0;
        let want = [
            200.0 / total,
            4920.0 / total,
            440.0 / total,
            3870.0 / total,
            580.0 / total,
        ];
        for (g, w) in p.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn all_transition_is_empty() {
        let tl = timeline(&[(SemanticLabel::InTransition, 5000)]);
        assert_eq!(profile_location(&tl), None);
    }

    #[test]
    fn activity_endpoints() {
        let p = profile_activity(&[accel(0.0), accel(1.0)]).unwrap();
        assert_eq!(p, [0.5, 0.0, 0.5]);
    }

    #[test]
    fn activity_grid_counts() {
        let grid = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        let p = classify_activity(&grid);
        let want = [0.2, 0.1, 0.7];
        for (g, w) in p.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
        assert_eq!(classify_activity(&[0.2]), [0.0, 1.0, 0.0]);
        assert_eq!(classify_activity(&[0.3]), [0.0, 0.0, 1.0]);
        assert_eq!(classify_activity(&[0.19999999999]), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn activity_constant_stream() {
        assert!(matches!(
            profile_activity(&[accel(0.5), accel(0.5)]),
            Err(FeatureError::DegenerateRange)
        ));
        let p = BehaviorProfile::compute("p".into(), &timeline(&[]), &[accel(0.5)], &[], &[], None);
        assert_eq!(p.activity, [1.0, 0.0, 0.0]);
        assert!(p.flags.activity_degenerate);
    }

    #[test]
    fn sms_levels() {
        assert_eq!(profile_sms(&[], (0, 36_000)), Some([1.0, 0.0, 0.0, 0.0, 0.0]));
        let events: Vec<_> = (0..15).map(|i| sms_at(7200 + i * 10)).collect();
        assert_eq!(profile_sms(&events, (0, 36_000)), Some([0.9, 0.0, 0.1, 0.0, 0.0]));
        for (count, lvl) in [
            (0, 0),
            (1, 1),
            (9, 1),
            (10, 2),
            (19, 2),
            (20, 3),
            (29, 3),
            (30, 4),
            (31, 4),
        ] {
            assert_eq!(level(count, &SMS_CUTOFFS), lvl, "{count} messages");
        }
        assert_eq!(profile_sms(&[], (0, 3599)), None);
    }

    #[test]
    fn call_levels() {
        assert_eq!(profile_calls(&[], (0, 36_000)), Some([1.0, 0.0, 0.0, 0.0]));
        let events = [call_at(100), call_at(200)];
        assert_eq!(profile_calls(&events, (0, 36_000)), Some([0.8, 0.2, 0.0, 0.0]));
        let six: Vec<_> = (0..6).map(|i| call_at(i * 60)).collect();
        assert_eq!(profile_calls(&six, (0, 7200)), Some([0.0, 0.0, 0.0, 1.0]));
        for (count, lvl) in [(0, 0), (1, 1), (2, 1), (3, 2), (5, 2), (6, 3)] {
            assert_eq!(level(count, &CALL_CUTOFFS), lvl);
        }
    }

    #[test]
    fn trailing_partial_bin_dropped() {
        let bins = bin_counts([0, 3599, 3600, 7199, 7201], (0, 7300), 3600);
        assert_eq!(bins, vec![2, 2]);
    }

    #[test]
    fn random_streams_are_probability_vectors() {
        let mut rng = crate::seed::rng(9);
        for _ in 0..30 {
            let span = (rng.random_range(0..1000), rng.random_range(50_000..200_000));
            let mut sms: Vec<_> = (0..rng.random_range(0..800))
                .map(|_| sms_at(rng.random_range(0..200_000)))
                .collect();
            sms.sort_by_key(|e| e.timestamp);
            let p = profile_sms(&sms, span).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            // Counting oracle.
            let n_bins = (span.1 - span.0) / 3600;
            let mut levels = [0usize; 5];
            for b in 0..n_bins {
                let lo = span.0 + b * 3600;
                let c = sms
                    .iter()
                    .filter(|e| e.timestamp >= lo && e.timestamp < lo + 3600)
                    .count();
                let l = if c < 1 {
                    0
                } else if c < 10 {
                    1
                } else if c < 20 {
                    2
                } else if c < 30 {
                    3
                } else {
                    4
                };
                levels[l] += 1;
            }
            for (g, c) in p.iter().zip(levels) {
                assert_eq!(*g, c as f64 / n_bins as f64);
            }
        }
    }
}
