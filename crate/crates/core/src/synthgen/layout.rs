// SPDX-License-Identifier: MIT OR Apache-2.0

use super::{CohortSpec, SynthError};
use crate::ingest::PoiRecord;
use crate::mobility::EARTH_RADIUS_M;
use crate::seed;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

const CENTER: (f64, f64) = (40.4433, -79.9436);
const CITY_RADIUS_M: f64 = 11_000.0;
const MIN_SEPARATION_M: f64 = 600.0;
const POI_RADIUS_M: f64 = 100.0;
const AWAY_KM: (f64, f64) = (45.0, 70.0);
const DAY: i64 = 86_400;

/// Move `(lat, lon)` by metres east and north on a local tangent plane.
pub fn offset(lat: f64, lon: f64, east_m: f64, north_m: f64) -> (f64, f64) {
    let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
    let dlon = (east_m / (EARTH_RADIUS_M * lat.to_radians().cos())).to_degrees();
    (lat + dlat, lon + dlon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub tag: String,
    /// Out-of-town spots are not in the POI table.
    pub mapped: bool,
}

/// Every place of the cohort and who uses which.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub places: Vec<Place>,
    /// Per archetype: education, friends' houses and leisure places.
    pub education: Vec<Vec<usize>>,
    pub friends: Vec<Vec<usize>>,
    pub leisure: Vec<Vec<usize>>,
    /// Per participant.
    pub home: Vec<usize>,
    pub away: Vec<usize>,
}

impl Layout {
    pub fn build(spec: &CohortSpec, archetype_of: &[usize]) -> Result<Layout, SynthError> {
        let mut rng = seed::substream(spec.seed, &["synth", "places"]);
        let mut places: Vec<Place> = Vec::new();
        let city = |rng: &mut seed::Rng, places: &mut Vec<Place>, id: String, tag: &str| -> Result<usize, SynthError> {
            for _ in 0..10_000 {
                let r = CITY_RADIUS_M * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let (lat, lon) = offset(CENTER.0, CENTER.1, r * a.cos(), r * a.sin());
                let clear = places
                    .iter()
                    .filter(|p| p.mapped)
                    .all(|p| crate::mobility::haversine_m(lat, lon, p.lat, p.lon) >= MIN_SEPARATION_M);
                if clear {
                    places.push(Place {
                        id,
                        lat,
                        lon,
                        tag: tag.into(),
                        mapped: true,
                    });
                    return Ok(places.len() - 1);
                }
            }
            Err(SynthError::InvalidSpec("too many places to lay out in the city".into()))
        };

        let (mut education, mut friends, mut leisure) = (Vec::new(), Vec::new(), Vec::new());
        for a in 0..spec.archetypes.len() {
            let mut pool = |tags: &[&str], kind: &str| -> Result<Vec<usize>, SynthError> {
                tags.iter()
                    .enumerate()
                    .map(|(i, tag)| city(&mut rng, &mut places, format!("a{a}-{kind}{i}"), tag))
                    .collect()
            };
            education.push(pool(&["university", "library"], "edu")?);
            friends.push(pool(&["house", "apartments"], "friend")?);
            leisure.push(pool(&["cafe", "park", "restaurant"], "leisure")?);
        }
        let mut home = Vec::with_capacity(archetype_of.len());
        let mut away = Vec::with_capacity(archetype_of.len());
        for i in 0..archetype_of.len() {
            home.push(city(&mut rng, &mut places, format!("home{i:03}"), "apartments")?);
            let r = rng.random_range(AWAY_KM.0..AWAY_KM.1) * 1000.0;
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let (lat, lon) = offset(CENTER.0, CENTER.1, r * a.cos(), r * a.sin());
            places.push(Place {
                id: format!("away{i:03}"),
                lat,
                lon,
                tag: "town".into(),
                mapped: false,
            });
            away.push(places.len() - 1);
        }
        Ok(Layout {
            places,
            education,
            friends,
            leisure,
            home,
            away,
        })
    }

    pub fn poi_records(&self) -> Vec<PoiRecord> {
        self.places
            .iter()
            .filter(|p| p.mapped)
            .map(|p| PoiRecord {
                place_id: p.id.clone(),
                lat: p.lat,
                lon: p.lon,
                radius_m: POI_RADIUS_M,
                osm_tag: p.tag.clone(),
            })
            .collect()
    }
}

/// A piece of a participant's routine, in seconds since local midnight of
/// day one. Segments tile the study without gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Segment {
    Stay {
        place: usize,
        start: i64,
        end: i64,
    },
    Move {
        from: usize,
        to: usize,
        start: i64,
        end: i64,
    },
}

impl Segment {
    pub fn start(&self) -> i64 {
        match *self {
            Segment::Stay { start, .. } | Segment::Move { start, .. } => start,
        }
    }

    pub fn end(&self) -> i64 {
        match *self {
            Segment::Stay { end, .. } | Segment::Move { end, .. } => end,
        }
    }
}

fn push_stay(segs: &mut Vec<Segment>, place: usize, start: i64, end: i64) {
    if let Some(Segment::Stay { place: p, end: e, .. }) = segs.last_mut() {
        if *p == place && *e == start {
            *e = end;
            return;
        }
    }
    segs.push(Segment::Stay { place, start, end });
}

/// Daily routine: home until morning, one visit per non-home class in random
/// order with mean dwell proportional to `location`, then home.
pub fn routine(
    location: &[f64; 5],
    days: usize,
    transition_s: i64,
    places: [Option<&[usize]>; 5],
    home: usize,
    rng: &mut seed::Rng,
) -> Vec<Segment> {
    let mut segs = Vec::new();
    for d in 0..days as i64 {
        let day0 = d * DAY;
        let mut away: Vec<(usize, usize)> = [0usize, 1, 2, 4]
            .into_iter()
            .filter(|&c| location[c] > 0.0)
            .map(|c| {
                let pool = places[c].expect("pool for every visited class");
                (c, *pool.choose(rng).expect("non-empty pool"))
            })
            .collect();
        if away.is_empty() {
            push_stay(&mut segs, home, day0, day0 + DAY);
            continue;
        }
        rand::seq::SliceRandom::shuffle(away.as_mut_slice(), rng);
        let dwell = (DAY - transition_s * (away.len() as i64 + 1)) as f64;
        let durations: Vec<i64> = away
            .iter()
            .map(|&(c, _)| (location[c] * dwell * rng.random_range(0.85..1.15)).round() as i64)
            .collect();
        let home_total = dwell as i64 - durations.iter().sum::<i64>();
        let mut t = day0 + (home_total as f64 * 0.65).round() as i64;
        push_stay(&mut segs, home, day0, t);
        let mut prev = home;
        for (&(_, place), &dur) in away.iter().zip(&durations) {
            segs.push(Segment::Move {
                from: prev,
                to: place,
                start: t,
                end: t + transition_s,
            });
            t += transition_s;
            push_stay(&mut segs, place, t, t + dur);
            t += dur;
            prev = place;
        }
        segs.push(Segment::Move {
            from: prev,
            to: home,
            start: t,
            end: t + transition_s,
        });
        push_stay(&mut segs, home, t + transition_s, day0 + DAY);
    }
    segs
}
