// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::ids::ParticipantId;
use crate::ingest::GpsFix;
use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Great-circle distance in meters on a spherical Earth.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayPoint {
    pub participant_id: ParticipantId,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
    pub start: i64,
    pub end: i64,
    pub fix_count: usize,
    /// Index of the first member fix in the input trace.
    pub first_fix: usize,
}

impl StayPoint {
    pub fn duration(&self) -> i64 {
        self.end - self.start
    }
}

/// Time-based clustering of a trace into stay points.
///
/// A cluster grows while each next fix lies within `d_max_m` of the running
/// centroid of the cluster. When a fix breaks the cluster, the cluster
/// becomes a stay if it spans at least `t_min_s`, and a new cluster starts
/// at the breaking fix. Fixes outside any stay are transition fixes.
pub fn detect_stay_points(fixes: &[GpsFix], d_max_m: f64, t_min_s: i64) -> Vec<StayPoint> {
    let mut stays = Vec::new();
    let mut i = 0;
    while i < fixes.len() {
        let (mut sum_lat, mut sum_lon) = (fixes[i].lat, fixes[i].lon);
        let mut j = i + 1;
        while j < fixes.len() {
            let n = (j - i) as f64;
            if haversine_m(sum_lat / n, sum_lon / n, fixes[j].lat, fixes[j].lon) > d_max_m {
                break;
            }
            sum_lat += fixes[j].lat;
            sum_lon += fixes[j].lon;
            j += 1;
        }
        let count = j - i;
        let (start, end) = (fixes[i].timestamp, fixes[j - 1].timestamp);
        if count >= 2 && end - start >= t_min_s && end > start {
            stays.push(StayPoint {
                participant_id: fixes[i].participant_id.clone(),
                centroid_lat: sum_lat / count as f64,
                centroid_lon: sum_lon / count as f64,
                start,
                end,
                fix_count: count,
                first_fix: i,
            });
        }
        i = j;
    }
    stays
}
