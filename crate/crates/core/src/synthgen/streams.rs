// SPDX-License-Identifier: MIT OR Apache-2.0

use super::layout::{offset, routine, Layout, Segment};
use super::{CohortSpec, IntendedProfile, EMA_BLOCK_S, EMA_FIRST_HOUR, EMA_PER_DAY};
use crate::features::{comm_counts, epoch_accel_stats, FeatureConfig};
use crate::ids::ParticipantId;
use crate::ingest::{
    AccelSample, CallDirection, CallEvent, EmaResponse, GpsFix, MessageDirection, MessageEvent, ParticipantStreams,
};
use crate::seed;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

const DAY: i64 = 86_400;
const MARGIN: f64 = 0.005;
/// Normalized magnitude ranges of the three activity levels.
const ACTIVITY_RANGES: [(f64, f64); 3] = [(0.0, 0.2 - MARGIN), (0.2 + MARGIN, 0.3 - MARGIN), (0.3 + MARGIN, 1.0)];
/// Inclusive count ranges and Poisson rates of the message levels (per hour).
const SMS_LEVELS: [(usize, usize, f64); 5] = [(0, 0, 0.0), (1, 9, 5.0), (10, 19, 14.5), (20, 29, 24.5), (30, 40, 33.0)];
/// Same for calls per two hours.
const CALL_LEVELS: [(usize, usize, f64); 4] = [(0, 0, 0.0), (1, 2, 1.5), (3, 5, 4.0), (6, 8, 7.0)];

/// The quantities that drive negative affect at one prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueFeatures {
    pub accel_mean: f64,
    pub sms_1h: usize,
    pub calls_1h: usize,
    pub at_home: bool,
}

pub(super) struct Generated {
    pub streams: ParticipantStreams,
    pub sias: u32,
    pub intended: IntendedProfile,
}

fn jitter<const N: usize>(p: &[f64; N], spread: f64, rng: &mut seed::Rng) -> [f64; N] {
    let mut out = p.map(|v| {
        let z: f64 = StandardNormal.sample(rng);
        v * (spread * z).exp()
    });
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

/// Level of each of `n` slots with per-level counts fixed by largest
/// remainder, in random order.
pub(super) fn stratified(p: &[f64], n: usize, rng: &mut seed::Rng) -> Vec<usize> {
    let exact: Vec<f64> = p.iter().map(|v| v * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&i, &j| {
        (exact[j] - exact[j].floor())
            .total_cmp(&(exact[i] - exact[i].floor()))
            .then(i.cmp(&j))
    });
    let short = n.saturating_sub(counts.iter().sum());
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    let mut levels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(l, &c)| std::iter::repeat_n(l, c))
        .collect();
    levels.shuffle(rng);
    levels
}

/// Poisson count conditioned on the level's range.
fn level_count((lo, hi, rate): (usize, usize, f64), rng: &mut seed::Rng) -> usize {
    if hi == 0 {
        return 0;
    }
    let poisson = Poisson::new(rate).expect("positive rate");
    for _ in 0..64 {
        let k = poisson.sample(rng) as usize;
        if (lo..=hi).contains(&k) {
            return k;
        }
    }
    rng.random_range(lo..=hi)
}

fn event_times(bin_start: i64, bin_s: i64, count: usize, rng: &mut seed::Rng) -> Vec<i64> {
    let mut offs: Vec<i64> = rand::seq::index::sample(rng, bin_s as usize, count)
        .into_iter()
        .map(|o| bin_start + o as i64)
        .collect();
    offs.sort_unstable();
    offs
}

fn segment_at(route: &[Segment], t: i64, cursor: &mut usize) -> Segment {
    while *cursor + 1 < route.len() && route[*cursor].end() <= t {
        *cursor += 1;
    }
    route[*cursor]
}

pub(super) fn participant(spec: &CohortSpec, layout: &Layout, i: usize, id: &ParticipantId, a: usize) -> Generated {
    let arch = &spec.archetypes[a];
    let mut rng = seed::substream(spec.seed, &["synth", "participant", id.as_str()]);
    let tau = spec.participant_jitter;
    let intended = IntendedProfile {
        location: jitter(&arch.location, tau, &mut rng),
        activity: jitter(&arch.activity, tau, &mut rng),
        sms: jitter(&arch.sms_levels, tau, &mut rng),
        calls: jitter(&arch.call_levels, tau, &mut rng),
    };
    let home = layout.home[i];
    let away = [layout.away[i]];
    let pools = [
        Some(&away[..]),
        Some(&layout.education[a][..]),
        Some(&layout.friends[a][..]),
        None,
        Some(&layout.leisure[a][..]),
    ];
    let route = routine(&intended.location, spec.days, spec.transition_s, pools, home, &mut rng);
    let span = spec.days as i64 * DAY;
    let t0 = spec.start_utc;
    let dropped = |rng: &mut seed::Rng| spec.drop_rate > 0.0 && rng.random::<f64>() < spec.drop_rate;

    let noise = Normal::new(0.0, spec.gps_noise_m.max(f64::MIN_POSITIVE)).expect("finite noise");
    let mut gps = Vec::new();
    let mut cursor = 0;
    let last = span / spec.gps_period_s;
    for k in 0..=last {
        let t = k * spec.gps_period_s;
        let seg = segment_at(&route, t, &mut cursor);
        let (lat, lon) = match seg {
            Segment::Stay { place, .. } => {
                let p = &layout.places[place];
                let (e, n) = if spec.gps_noise_m > 0.0 {
                    (noise.sample(&mut rng), noise.sample(&mut rng))
                } else {
                    (0.0, 0.0)
                };
                offset(p.lat, p.lon, e, n)
            }
            Segment::Move { from, to, start, end } => {
                let (a, b) = (&layout.places[from], &layout.places[to]);
                let f = (t - start) as f64 / (end - start) as f64;
                (a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon))
            }
        };
        if k != 0 && k != last && dropped(&mut rng) {
            continue;
        }
        gps.push(GpsFix {
            participant_id: id.clone(),
            timestamp: t0 + t,
            lat,
            lon,
        });
    }

    let (lo, hi) = arch.accel_range;
    let n_bursts = (span / spec.accel_period_s) as usize;
    let mut accel = Vec::with_capacity(n_bursts * spec.accel_burst_s as usize);
    for (b, level) in stratified(&intended.activity, n_bursts, &mut rng)
        .into_iter()
        .enumerate()
    {
        let (ulo, uhi) = ACTIVITY_RANGES[level];
        for s in 0..spec.accel_burst_s {
            let forced = b == 0 && s < 2;
            let u = if forced { s as f64 } else { rng.random_range(ulo..=uhi) };
            let dir: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            if !forced && dropped(&mut rng) {
                continue;
            }
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = (lo + u * (hi - lo)) * 3f64.sqrt() / norm;
            accel.push(AccelSample {
                participant_id: id.clone(),
                timestamp: t0 + b as i64 * spec.accel_period_s + s,
                x: dir[0] * scale,
                y: dir[1] * scale,
                z: dir[2] * scale,
            });
        }
    }

    let mut sms = Vec::new();
    for (h, level) in stratified(&intended.sms, (span / 3_600) as usize, &mut rng)
        .into_iter()
        .enumerate()
    {
        let count = level_count(SMS_LEVELS[level], &mut rng);
        for t in event_times(t0 + h as i64 * 3_600, 3_600, count, &mut rng) {
            let direction = if rng.random::<bool>() {
                MessageDirection::Sent
            } else {
                MessageDirection::Received
            };
            sms.push(MessageEvent {
                participant_id: id.clone(),
                timestamp: t,
                direction,
            });
        }
    }

    let mut calls = Vec::new();
    for (h, level) in stratified(&intended.calls, (span / 7_200) as usize, &mut rng)
        .into_iter()
        .enumerate()
    {
        let count = level_count(CALL_LEVELS[level], &mut rng);
        for t in event_times(t0 + h as i64 * 7_200, 7_200, count, &mut rng) {
            let direction = if rng.random::<bool>() {
                CallDirection::Incoming
            } else {
                CallDirection::Outgoing
            };
            calls.push(CallEvent {
                participant_id: id.clone(),
                start: t,
                duration: rng.random_range(30..=900),
                direction,
            });
        }
    }

    let fc = FeatureConfig::default();
    let affect_noise = Normal::new(0.0, arch.noise_std.max(f64::MIN_POSITIVE)).expect("finite noise");
    let mut ema = Vec::with_capacity(spec.days * EMA_PER_DAY);
    let mut cursor = 0;
    for d in 0..spec.days as i64 {
        for b in 0..EMA_PER_DAY as i64 {
            let rel = d * DAY + EMA_FIRST_HOUR * 3_600 + b * EMA_BLOCK_S + rng.random_range(0..EMA_BLOCK_S);
            let p = t0 + rel;
            let (sms_1h, calls_1h) = comm_counts(&sms, &calls, p, fc.comm_window_s);
            let truth = TrueFeatures {
                accel_mean: epoch_accel_stats(&accel, p, fc.epoch_minutes * 60).mean,
                sms_1h,
                calls_1h,
                at_home: matches!(segment_at(&route, rel, &mut cursor), Segment::Stay { place, .. } if place == home),
            };
            let e = if arch.noise_std > 0.0 {
                affect_noise.sample(&mut rng)
            } else {
                0.0
            };
            let negative = (arch.affect.eval(&truth) + e).round().clamp(1.0, 100.0) as u8;
            let z: f64 = StandardNormal.sample(&mut rng);
            let positive = (75.0 - 0.5 * negative as f64 + 8.0 * z).round().clamp(1.0, 100.0) as u8;
            if dropped(&mut rng) {
                continue;
            }
            ema.push(EmaResponse {
                participant_id: id.clone(),
                prompt_time: p,
                negative_affect: negative,
                positive_affect: positive,
            });
        }
    }

    let z: f64 = StandardNormal.sample(&mut rng);
    let sias = (arch.sias_mean + 8.0 * z).round().clamp(0.0, 80.0) as u32;
    Generated {
        streams: ParticipantStreams {
            gps,
            accel,
            sms,
            calls,
            ema,
        },
        sias,
        intended,
    }
}
