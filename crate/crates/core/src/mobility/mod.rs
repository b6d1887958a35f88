// SPDX-License-Identifier: MIT OR Apache-2.0

//! GPS traces to semantic timelines: stay-point clustering, POI labeling,
//! home detection from night dwell time.

mod labeling;
mod stay;
mod tagmap;
mod timeline;

pub use labeling::{detect_home, label_stay, nearest_containing, night_overlap_s, HomePlace};
pub use stay::{detect_stay_points, haversine_m, StayPoint, EARTH_RADIUS_M};
pub use tagmap::{default_tag_map, PlaceCategory, TagMap};
pub use timeline::{build_timeline, read_timelines, write_timelines, SemanticTimeline, Visit};

use crate::ids::ParticipantId;
use crate::ingest::{GpsFix, PoiRecord, RawCohort};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MobilityError {
    #[error("no house-tagged place with night dwell time")]
    NoHomeFound,
    #[error("time {0} is outside the timeline")]
    OutOfCoverage(i64),
    #[error("tag map has no tag for category `{0}`")]
    TagMapIncomplete(PlaceCategory),
    #[error("tag map line {line}: expected `osm_tag = category`")]
    TagMapSyntax { line: usize },
    #[error("malformed timeline row at line {line}")]
    TimelineRow { line: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SemanticLabel {
    Home,
    Education,
    Leisure,
    OutOfTown,
    OtherHouse,
    InTransition,
}

impl SemanticLabel {
    pub const ALL: [SemanticLabel; 6] = [
        SemanticLabel::Home,
        SemanticLabel::Education,
        SemanticLabel::Leisure,
        SemanticLabel::OutOfTown,
        SemanticLabel::OtherHouse,
        SemanticLabel::InTransition,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticLabel::Home => "Home",
            SemanticLabel::Education => "Education",
            SemanticLabel::Leisure => "Leisure",
            SemanticLabel::OutOfTown => "OutOfTown",
            SemanticLabel::OtherHouse => "OtherHouse",
            SemanticLabel::InTransition => "InTransition",
        }
    }
}

impl fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SemanticLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SemanticLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown semantic label `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilityConfig {
    pub d_max_m: f64,
    pub t_min_s: i64,
    pub out_of_town_km: f64,
    /// Label for stays that no mapped POI contains.
    pub unmatched_label: SemanticLabel,
    pub night_start_hour: i64,
    pub night_end_hour: i64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            d_max_m: 200.0,
            t_min_s: 600,
            out_of_town_km: 25.0,
            unmatched_label: SemanticLabel::Leisure,
            night_start_hour: 22,
            night_end_hour: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantMobility {
    pub stays: Vec<StayPoint>,
    pub labels: Vec<SemanticLabel>,
    /// `None` when no house-tagged night stay exists; Home is then unused.
    pub home: Option<HomePlace>,
    pub timeline: SemanticTimeline,
}

pub fn process_participant(
    id: &ParticipantId,
    fixes: &[GpsFix],
    poi: &[PoiRecord],
    tags: &TagMap,
    cfg: &MobilityConfig,
    utc_offset_s: i64,
) -> ParticipantMobility {
    let stays = detect_stay_points(fixes, cfg.d_max_m, cfg.t_min_s);
    let home = detect_home(&stays, poi, tags, cfg, utc_offset_s).ok();
    let labels: Vec<SemanticLabel> = stays
        .iter()
        .map(|s| label_stay(s, poi, tags, home.as_ref(), cfg))
        .collect();
    let span = fixes.first().zip(fixes.last()).map(|(a, b)| (a.timestamp, b.timestamp));
    let timeline = build_timeline(id.clone(), span, &stays, &labels);
    ParticipantMobility {
        stays,
        labels,
        home,
        timeline,
    }
}

pub fn process_cohort(
    cohort: &RawCohort,
    tags: &TagMap,
    cfg: &MobilityConfig,
) -> BTreeMap<ParticipantId, ParticipantMobility> {
    let ids: Vec<&ParticipantId> = cohort.ids().collect();
    ids.par_iter()
        .map(|&id| {
            let p = &cohort.participants[id];
            (
                id.clone(),
                process_participant(id, &p.gps, &cohort.poi, tags, cfg, cohort.utc_offset_s),
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// `participant_id,start,end,lat,lon,fix_count,label` per stay.
pub fn write_stays<W: std::io::Write>(
    out: W,
    cohort: &BTreeMap<ParticipantId, ParticipantMobility>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "start", "end", "lat", "lon", "fix_count", "label"])?;
    for (id, m) in cohort {
        for (s, l) in m.stays.iter().zip(&m.labels) {
            w.write_record([
                id.as_str(),
                &s.start.to_string(),
                &s.end.to_string(),
                &s.centroid_lat.to_string(),
                &s.centroid_lon.to_string(),
                &s.fix_count.to_string(),
                l.as_str(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::stay::tests::{fix, run_scan_oracle};
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    /// Home 8 h, straight-line 20 min commute of ~5 km, campus 6 h; 150 s fixes.
    pub(crate) fn home_commute_campus() -> (Vec<GpsFix>, [(i64, i64); 2]) {
        let (home, campus) = ((40.4400, -79.9500), (40.4850, -79.9500));
        let mut fixes = Vec::new();
        let mut t = 0;
        while t <= 8 * 3600 {
            fixes.push(fix(t, home.0, home.1));
            t += 150;
        }
        let home_end = t - 150;
        let commute_end = home_end + 1200;
        while t < commute_end {
            let a = (t - home_end) as f64 / 1200.0;
            fixes.push(fix(t, home.0 + a * (campus.0 - home.0), home.1));
            t += 150;
        }
        let campus_start = t;
        while t <= campus_start + 6 * 3600 {
            fixes.push(fix(t, campus.0, campus.1));
            t += 150;
        }
        (fixes, [(0, home_end), (campus_start, t - 150)])
    }

    #[test]
    fn hand_crafted_day_segments_into_two_stays() {
        let (fixes, truth) = home_commute_campus();
        let stays = detect_stay_points(&fixes, 200.0, 600);
        assert_eq!(stays.len(), 2);
        for (s, (t0, t1)) in stays.iter().zip(truth) {
            assert!(
                (s.start - t0).abs() <= 150 && (s.end - t1).abs() <= 150,
                "{s:?} vs {t0}..{t1}"
            );
        }
        let oracle = run_scan_oracle(&fixes, 200.0, 600);
        let got: Vec<(usize, usize)> = stays.iter().map(|s| (s.first_fix, s.first_fix + s.fix_count)).collect();
        assert_eq!(got, oracle);
    }

    fn random_trace(seed: u64, n: usize) -> Vec<GpsFix> {
        let mut rng = crate::seed::rng(seed);
        let (mut lat, mut lon) = (40.44, -79.95);
        let mut t = 0;
        (0..n)
            .map(|_| {
                if rng.random_bool(0.15) {
                    lat += rng.random_range(-0.004..0.004);
                    lon += rng.random_range(-0.004..0.004);
                } else {
                    lat += rng.random_range(-0.0005..0.0005);
                    lon += rng.random_range(-0.0005..0.0005);
                }
                t += rng.random_range(30..300);
                fix(t, lat, lon)
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn segmentation_matches_run_scan(seed in any::<u64>(), n in 0usize..600) {
            let fixes = random_trace(seed, n);
            let stays = detect_stay_points(&fixes, 200.0, 600);
            let got: Vec<(usize, usize)> = stays.iter().map(|s| (s.first_fix, s.first_fix + s.fix_count)).collect();
            prop_assert_eq!(got, run_scan_oracle(&fixes, 200.0, 600));
            for s in &stays {
                prop_assert!(s.end > s.start && s.fix_count >= 2);
                let members = &fixes[s.first_fix..s.first_fix + s.fix_count];
                let clat = members.iter().map(|f| f.lat).sum::<f64>() / members.len() as f64;
                prop_assert!((clat - s.centroid_lat).abs() < 1e-9);
            }
        }

        #[test]
        fn timeline_covers_trace(seed in any::<u64>(), n in 1usize..400) {
            let fixes = random_trace(seed, n);
            let tags = default_tag_map();
            let m = process_participant(&"p".into(), &fixes, &[], &tags, &MobilityConfig::default(), 0);
            let span = fixes.last().unwrap().timestamp - fixes[0].timestamp;
            prop_assert_eq!(m.timeline.total_duration(), span);
            for w in m.timeline.visits.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
        }
    }

    #[test]
    fn labeling_is_a_function_of_inputs() {
        let tags = default_tag_map();
        let cfg = MobilityConfig::default();
        let mut rng = crate::seed::rng(11);
        let mut poi: Vec<PoiRecord> = (0..30)
            .map(|i| PoiRecord {
                place_id: format!("poi{i}"),
                lat: 40.44 + rng.random_range(-0.01..0.01),
                lon: -79.95 + rng.random_range(-0.01..0.01),
                radius_m: rng.random_range(100.0..900.0),
                osm_tag: ["house", "library", "cafe", "stadium"][i % 4].to_string(),
            })
            .collect();
        let stays: Vec<StayPoint> = (0..50)
            .map(|i| StayPoint {
                participant_id: "p".into(),
                centroid_lat: 40.44 + rng.random_range(-0.012..0.012),
                centroid_lon: -79.95 + rng.random_range(-0.012..0.012),
                start: i * 1000,
                end: i * 1000 + 700,
                fix_count: 5,
                first_fix: 0,
            })
            .collect();
        let reference: Vec<SemanticLabel> = stays.iter().map(|s| label_stay(s, &poi, &tags, None, &cfg)).collect();
        for _ in 0..100 {
            poi.shuffle(&mut rng);
            let again: Vec<SemanticLabel> = stays.iter().map(|s| label_stay(s, &poi, &tags, None, &cfg)).collect();
            assert_eq!(again, reference);
        }
    }

    #[test]
    fn label_names_parse() {
        for l in SemanticLabel::ALL {
            assert_eq!(l.as_str().parse::<SemanticLabel>().unwrap(), l);
        }
        assert!("Nowhere".parse::<SemanticLabel>().is_err());
    }
}
