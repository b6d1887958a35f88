// SPDX-License-Identifier: MIT OR Apache-2.0

use super::streams::stratified;
use super::*;
use crate::ingest::load_cohort;

fn small(seed: u64) -> CohortSpec {
    CohortSpec {
        seed,
        n_participants: 6,
        days: 3,
        ..CohortSpec::default()
    }
}

#[test]
fn rejects_bad_specs() {
    let mut s = small(1);
    s.days = 0;
    assert!(matches!(s.validate(), Err(SynthError::InvalidSpec(_))));
    let mut s = small(1);
    s.archetypes[0].weight = 0.5;
    assert!(s.validate().is_err());
    let mut s = small(1);
    s.archetypes[1].activity = [0.5, 0.5, 0.5];
    assert!(s.validate().is_err());
    let mut s = small(1);
    s.drop_rate = 1.0;
    assert!(s.validate().is_err());
    assert!(generate(&CohortSpec {
        n_participants: 0,
        ..small(1)
    })
    .is_err());
}

#[test]
fn ema_count_is_schedule_arithmetic() {
    let b = generate(&small(3)).unwrap();
    assert_eq!(b.cohort.ema_count(), 6 * 3 * EMA_PER_DAY);
    for p in b.cohort.participants.values() {
        for (k, e) in p.ema.iter().enumerate() {
            let local = (e.prompt_time - DEFAULT_START) % 86_400;
            let block = (k % EMA_PER_DAY) as i64;
            let lo = EMA_FIRST_HOUR * 3_600 + block * EMA_BLOCK_S;
            assert!((lo..lo + EMA_BLOCK_S).contains(&local));
        }
    }
}

#[test]
fn constant_function_constant_targets() {
    let mut s = small(4);
    s.archetypes = vec![Archetype {
        weight: 1.0,
        noise_std: 0.0,
        affect: AffectModel {
            intercept: 42.0,
            accel: 0.0,
            sms: 0.0,
            calls: 0.0,
            home: 0.0,
        },
        ..planted_archetypes()[0].clone()
    }];
    let b = generate(&s).unwrap();
    assert!(b
        .cohort
        .participants
        .values()
        .flat_map(|p| &p.ema)
        .all(|e| e.negative_affect == 42));
}

#[test]
fn archetype_counts_by_largest_remainder() {
    assert_eq!(imbalanced_spec(0).archetype_counts(), [10, 8, 6, 4, 2, 2, 2, 1, 1]);
    assert_eq!(CohortSpec::default().archetype_counts(), [10, 10, 10]);
    let s = CohortSpec {
        n_participants: 7,
        ..CohortSpec::default()
    };
    assert_eq!(s.archetype_counts().iter().sum::<usize>(), 7);
}

#[test]
fn stratified_hits_quota() {
    let mut rng = crate::seed::rng(1);
    let levels = stratified(&[0.1, 0.2, 0.3, 0.25, 0.15], 336, &mut rng);
    let mut counts = [0usize; 5];
    levels.iter().for_each(|&l| counts[l] += 1);
    assert_eq!(counts.iter().sum::<usize>(), 336);
    for (c, p) in counts.iter().zip([0.1, 0.2, 0.3, 0.25, 0.15]) {
        assert!((*c as f64 / 336.0 - p).abs() <= 1.0 / 336.0);
    }
}

#[test]
fn deterministic_and_round_trips_through_ingest() {
    let a = generate(&small(9)).unwrap();
    assert_eq!(a, generate(&small(9)).unwrap());
    assert_ne!(a.cohort, generate(&small(10)).unwrap().cohort);

    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let h1 = write_bundle(&a, d1.path()).unwrap();
    let h2 = write_bundle(&generate(&small(9)).unwrap(), d2.path()).unwrap();
    assert_eq!(h1, h2);
    for f in bundle_files() {
        assert_eq!(
            std::fs::read(d1.path().join(f)).unwrap(),
            std::fs::read(d2.path().join(f)).unwrap(),
            "{f}"
        );
    }

    let (loaded, reports) = load_cohort(d1.path(), 0).unwrap();
    assert!(reports.iter().all(|r| r.present && r.duplicates_dropped == 0));
    assert_eq!(loaded, a.cohort);

    let gt = std::fs::read_to_string(d1.path().join(GROUND_TRUTH_FILE)).unwrap();
    assert!(gt.starts_with("participant_id,archetype\n"));
    assert_eq!(gt.lines().count(), 7);
    let echoed: CohortSpec =
        serde_json::from_str(&std::fs::read_to_string(d1.path().join(SPEC_FILE)).unwrap()).unwrap();
    assert_eq!(echoed, a.spec);
}

#[test]
fn ground_truth_grouping_matches_counts() {
    let b = generate(&CohortSpec {
        days: 1,
        ..imbalanced_spec(2)
    })
    .unwrap();
    let g = b.truth.grouping();
    let mut sizes = g.sizes();
    sizes.sort_unstable();
    assert_eq!(sizes, [1, 1, 2, 2, 2, 4, 6, 8, 10]);
}

#[test]
fn drop_rate_thins_streams() {
    let full = generate(&small(5)).unwrap();
    let thin = generate(&CohortSpec {
        drop_rate: 0.3,
        ..small(5)
    })
    .unwrap();
    let count = |b: &Bundle| b.cohort.participants.values().map(|p| p.accel.len()).sum::<usize>();
    let ratio = count(&thin) as f64 / count(&full) as f64;
    assert!((ratio - 0.7).abs() < 0.02, "{ratio}");
    assert!(thin.cohort.ema_count() < full.cohort.ema_count());
}
