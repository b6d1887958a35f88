// SPDX-License-Identifier: MIT OR Apache-2.0

use super::stay::{haversine_m, StayPoint};
use super::tagmap::{PlaceCategory, TagMap};
use super::{MobilityConfig, MobilityError, SemanticLabel};
use crate::ingest::PoiRecord;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const DAY: i64 = 86_400;
const HOUR: i64 = 3_600;

/// The detected home of a participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomePlace {
    pub place_id: String,
    pub lat: f64,
    pub lon: f64,
    pub radius_m: f64,
}

impl From<&PoiRecord> for HomePlace {
    fn from(p: &PoiRecord) -> Self {
        HomePlace {
            place_id: p.place_id.clone(),
            lat: p.lat,
            lon: p.lon,
            radius_m: p.radius_m,
        }
    }
}

/// Nearest POI whose circle contains the point, restricted to tags the map
/// knows about (and optionally to one category). Equal distances resolve to
/// the smaller `place_id`.
pub fn nearest_containing<'a>(
    lat: f64,
    lon: f64,
    poi: &'a [PoiRecord],
    tags: &TagMap,
    only: Option<PlaceCategory>,
) -> Option<(&'a PoiRecord, PlaceCategory)> {
    poi.iter()
        .filter_map(|p| {
            let cat = tags.category(&p.osm_tag)?;
            if only.is_some_and(|c| c != cat) {
                return None;
            }
            let d = haversine_m(lat, lon, p.lat, p.lon);
            (d <= p.radius_m).then_some((d, p, cat))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.place_id.cmp(&b.1.place_id)))
        .map(|(_, p, c)| (p, c))
}

/// Semantic label of one stay. Rules apply in order: inside the home circle,
/// farther than `out_of_town_km` from home, nearest containing mapped POI,
/// then the configured catch-all.
pub fn label_stay(
    stay: &StayPoint,
    poi: &[PoiRecord],
    tags: &TagMap,
    home: Option<&HomePlace>,
    cfg: &MobilityConfig,
) -> SemanticLabel {
    let (lat, lon) = (stay.centroid_lat, stay.centroid_lon);
    if let Some(h) = home {
        let d = haversine_m(lat, lon, h.lat, h.lon);
        if d <= h.radius_m {
            return SemanticLabel::Home;
        }
        if d > cfg.out_of_town_km * 1000.0 {
            return SemanticLabel::OutOfTown;
        }
    }
    match nearest_containing(lat, lon, poi, tags, None) {
        Some((_, PlaceCategory::House)) => SemanticLabel::OtherHouse,
        Some((_, PlaceCategory::Education)) => SemanticLabel::Education,
        Some((_, PlaceCategory::Leisure)) => SemanticLabel::Leisure,
        None => cfg.unmatched_label,
    }
}

/// Seconds of `[start, end)` (UTC) that fall in the nightly local window
/// `[night_start_hour, night_end_hour)` wrapping midnight.
pub fn night_overlap_s(start: i64, end: i64, utc_offset_s: i64, night_start_hour: i64, night_end_hour: i64) -> i64 {
    if end <= start {
        return 0;
    }
    let (ls, le) = (start + utc_offset_s, end + utc_offset_s);
    let (first_day, last_day) = (ls.div_euclid(DAY), le.div_euclid(DAY));
    let mut total = 0;
    // Window for day d runs from (d-1) at night_start to d at night_end.
    for d in first_day..=last_day + 1 {
        let w0 = (d - 1) * DAY + night_start_hour * HOUR;
        let w1 = d * DAY + night_end_hour * HOUR;
        total += (le.min(w1) - ls.max(w0)).max(0);
    }
    total
}

/// The house-tagged place with the largest accumulated night dwell time.
pub fn detect_home(
    stays: &[StayPoint],
    poi: &[PoiRecord],
    tags: &TagMap,
    cfg: &MobilityConfig,
    utc_offset_s: i64,
) -> Result<HomePlace, MobilityError> {
    let mut dwell: BTreeMap<&str, (i64, &PoiRecord)> = BTreeMap::new();
    for s in stays {
        let Some((place, _)) =
            nearest_containing(s.centroid_lat, s.centroid_lon, poi, tags, Some(PlaceCategory::House))
        else {
            continue;
        };
        let night = night_overlap_s(s.start, s.end, utc_offset_s, cfg.night_start_hour, cfg.night_end_hour);
        if night > 0 {
            dwell.entry(place.place_id.as_str()).or_insert((0, place)).0 += night;
        }
    }
    // BTreeMap order plus strict comparison keeps the smaller id on ties.
    let mut best: Option<(i64, &PoiRecord)> = None;
    for &(secs, place) in dwell.values() {
        if best.is_none_or(|(b, _)| secs > b) {
            best = Some((secs, place));
        }
    }
    best.map(|(_, p)| HomePlace::from(p)).ok_or(MobilityError::NoHomeFound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::tagmap::default_tag_map;

    fn poi(id: &str, lat: f64, lon: f64, r: f64, tag: &str) -> PoiRecord {
        PoiRecord {
            place_id: id.into(),
            lat,
            lon,
            radius_m: r,
            osm_tag: tag.into(),
        }
    }

    fn stay(lat: f64, lon: f64, start: i64, end: i64) -> StayPoint {
        StayPoint {
            participant_id: "p".into(),
            centroid_lat: lat,
            centroid_lon: lon,
            start,
            end,
            fix_count: 10,
            first_fix: 0,
        }
    }

    #[test]
    fn night_overlap_wraps_midnight() {
        // 20:00 to 08:00 next day overlaps 22:00-08:00 = 10 h.
        assert_eq!(night_overlap_s(20 * HOUR, DAY + 8 * HOUR, 0, 22, 9), 10 * HOUR);
        // Daytime only.
        assert_eq!(night_overlap_s(10 * HOUR, 18 * HOUR, 0, 22, 9), 0);
        // Early morning at the very start of the epoch.
        assert_eq!(night_overlap_s(0, 9 * HOUR, 0, 22, 9), 9 * HOUR);
        // Local offset shifts the window: UTC 03:00-05:00 at UTC-5 is 22:00-00:00.
        assert_eq!(
            night_overlap_s(DAY + 3 * HOUR, DAY + 5 * HOUR, -5 * HOUR, 22, 9),
            2 * HOUR
        );
        // Multi-day stay covers every night fully.
        assert_eq!(night_overlap_s(12 * HOUR, 3 * DAY + 12 * HOUR, 0, 22, 9), 3 * 11 * HOUR);
    }

    #[test]
    fn unique_house_candidate() {
        let places = vec![poi("h1", 40.0, -80.0, 50.0, "house")];
        let stays: Vec<StayPoint> = (0..10)
            .map(|d| stay(40.0, -80.0, d * DAY - 2 * HOUR, d * DAY + 7 * HOUR))
            .collect();
        let home = detect_home(&stays, &places, &default_tag_map(), &MobilityConfig::default(), 0).unwrap();
        assert_eq!(home.place_id, "h1");
    }

    #[test]
    fn larger_night_dwell_wins() {
        let places = vec![
            poi("A", 40.0, -80.0, 50.0, "house"),
            poi("B", 40.01, -80.0, 50.0, "dormitory"),
        ];
        let mut stays = Vec::new();
        // A: 5 nights of 8 h = 40 h. B: 2 nights of 6 h = 12 h.
        for d in 1..=5 {
            stays.push(stay(40.0, -80.0, d * DAY - 2 * HOUR, d * DAY + 6 * HOUR));
        }
        for d in 6..=7 {
            stays.push(stay(40.01, -80.0, d * DAY, d * DAY + 6 * HOUR));
        }
        let oracle_a: i64 = stays[..5]
            .iter()
            .map(|s| night_overlap_s(s.start, s.end, 0, 22, 9))
            .sum();
        let oracle_b: i64 = stays[5..]
            .iter()
            .map(|s| night_overlap_s(s.start, s.end, 0, 22, 9))
            .sum();
        assert_eq!((oracle_a, oracle_b), (40 * HOUR, 12 * HOUR));
        let cfg = MobilityConfig::default();
        assert_eq!(
            detect_home(&stays, &places, &default_tag_map(), &cfg, 0)
                .unwrap()
                .place_id,
            "A"
        );
        stays.reverse();
        assert_eq!(
            detect_home(&stays, &places, &default_tag_map(), &cfg, 0)
                .unwrap()
                .place_id,
            "A"
        );
    }

    #[test]
    fn daytime_only_has_no_home() {
        let places = vec![poi("h1", 40.0, -80.0, 50.0, "house")];
        let stays = vec![stay(40.0, -80.0, 10 * HOUR, 17 * HOUR)];
        let err = detect_home(&stays, &places, &default_tag_map(), &MobilityConfig::default(), 0).unwrap_err();
        assert!(matches!(err, MobilityError::NoHomeFound));
    }

    #[test]
    fn precedence_rules() {
        let tags = default_tag_map();
        let cfg = MobilityConfig::default();
        let places = vec![
            poi("home", 40.0, -80.0, 60.0, "house"),
            poi("lib", 40.02, -80.0, 80.0, "library"),
            poi("friend", 40.03, -80.0, 60.0, "apartments"),
            poi("diner", 40.04, -80.0, 60.0, "restaurant"),
        ];
        let home = HomePlace::from(&places[0]);
        let at = |lat, lon| label_stay(&stay(lat, lon, 0, 1000), &places, &tags, Some(&home), &cfg);
        assert_eq!(at(40.0, -80.0), SemanticLabel::Home);
        // ~40 km north.
        assert_eq!(at(40.36, -80.0), SemanticLabel::OutOfTown);
        assert_eq!(at(40.02, -80.0), SemanticLabel::Education);
        assert_eq!(at(40.03, -80.0), SemanticLabel::OtherHouse);
        assert_eq!(at(40.04, -80.0), SemanticLabel::Leisure);
        assert_eq!(at(40.1, -80.0), cfg.unmatched_label);
        // Without a home only POI rules apply.
        let none = label_stay(&stay(40.36, -80.0, 0, 1000), &places, &tags, None, &cfg);
        assert_eq!(none, cfg.unmatched_label);
    }

    #[test]
    fn overlapping_pois_pick_nearest() {
        let tags = default_tag_map();
        let places = vec![
            poi("cafe", 40.0, -80.0, 500.0, "cafe"),
            poi("uni", 40.001, -80.0, 500.0, "university"),
        ];
        let s = stay(40.0009, -80.0, 0, 1000);
        assert_eq!(
            label_stay(&s, &places, &tags, None, &MobilityConfig::default()),
            SemanticLabel::Education
        );
    }

    #[test]
    fn unmapped_tag_is_skipped() {
        let tags = default_tag_map();
        let places = vec![
            poi("x", 40.0, -80.0, 500.0, "stadium"),
            poi("uni", 40.001, -80.0, 500.0, "university"),
        ];
        let s = stay(40.0, -80.0, 0, 1000);
        assert_eq!(
            label_stay(&s, &places, &tags, None, &MobilityConfig::default()),
            SemanticLabel::Education
        );
    }
}
