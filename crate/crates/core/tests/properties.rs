use availcast::bayes::{moderated_probability, sigmoid};
use availcast::features::{feature_value, ObservationCounts, Periodicity};
use availcast::metrics::{auc, gm, roc_points, trapezoid_area, ScoredLabels};
use availcast::prediction::PredictionMatrix;
use availcast::sim_dht::{equivalent_redundancy_increase, predicted_set_availability, redundancy_for_target};
use availcast::trace::{ingest_events, AvailabilityMatrix, SessionEvent, SlotRange};
use proptest::prelude::*;

fn scored() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    (2usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec(any::<bool>(), n),
            // Coarse grid so ties are common.
            prop::collection::vec((0u32..=20).prop_map(|k| k as f64 / 20.0), n),
        )
    })
}

fn pairwise_auc(labels: &[bool], probs: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                den += 1.0;
                num += match probs[i].partial_cmp(&probs[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

proptest! {
    #[test]
    fn feature_value_is_smoothed_and_monotone(on in 0u64..10_000, off in 0u64..10_000) {
        let v = feature_value(on, off);
        prop_assert!(v > 0.0 && v < 1.0);
        prop_assert!(feature_value(on + 1, off) > v);
        prop_assert!(feature_value(on, off + 1) < v);
    }

    #[test]
    fn auc_equals_pairwise_count((labels, probs) in scored()) {
        let s = ScoredLabels::new(labels.clone(), probs.clone()).unwrap();
        match pairwise_auc(&labels, &probs) {
            Some(expected) => {
                let a = auc(&s).unwrap();
                prop_assert_eq!(a, expected);
                prop_assert!((trapezoid_area(&roc_points(&s).unwrap()) - a).abs() < 1e-10);
            }
            None => prop_assert!(auc(&s).is_err()),
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms_and_order((labels, probs) in scored(), shift in 0usize..200) {
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let base = auc(&ScoredLabels::new(labels.clone(), probs.clone()).unwrap()).unwrap();
        let squashed: Vec<f64> = probs.iter().map(|p| p * p * 0.5 + 0.1).collect();
        prop_assert_eq!(auc(&ScoredLabels::new(labels.clone(), squashed).unwrap()).unwrap(), base);
        let k = shift % labels.len();
        let mut l2 = labels.clone();
        let mut p2 = probs.clone();
        l2.rotate_left(k);
        p2.rotate_left(k);
        let s2 = ScoredLabels::new(l2, p2).unwrap();
        prop_assert_eq!(auc(&s2).unwrap(), base);
        let g = gm(&ScoredLabels::new(labels, probs).unwrap()).unwrap();
        prop_assert!((gm(&s2).unwrap() - g).abs() < 1e-12);
    }

    #[test]
    fn moderation_shrinks_toward_half(m in -10.0f64..10.0, s2 in 0.0f64..50.0) {
        let p = moderated_probability(m, s2);
        prop_assert!((p - 0.5).abs() <= (sigmoid(m) - 0.5).abs() + 1e-15);
        prop_assert!((p - 0.5) * m >= 0.0);
    }

    #[test]
    fn ingest_is_independent_of_event_order(
        raw in prop::collection::vec((0usize..4, 0i64..40_000, 1i64..20_000), 1..30),
        rot in 0usize..30,
    ) {
        let events: Vec<SessionEvent> = raw
            .iter()
            .map(|&(u, login, len)| SessionEvent::new(format!("user{u}"), login, login + len))
            .collect();
        let a = ingest_events(&events, 0, 3600, 12).unwrap();
        let mut shuffled = events.clone();
        shuffled.reverse();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let b = ingest_events(&shuffled, 0, 3600, 12).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn set_availability_grows_with_members(
        probs in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 6), 5),
        extra in 0usize..5,
    ) {
        let ids: Vec<String> = (0..5).map(|i| format!("n{i}")).collect();
        let p = PredictionMatrix::from_fn(ids, SlotRange::new(0, 6), |u, t| probs[u][t]).unwrap();
        let r = SlotRange::new(0, 6);
        let base: Vec<usize> = (0..5).filter(|&u| u != extra).take(2).collect();
        let mut more = base.clone();
        more.push(extra);
        let a = predicted_set_availability(&p, &base, r).unwrap();
        let b = predicted_set_availability(&p, &more, r).unwrap();
        prop_assert!(b >= a - 1e-15);
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(predicted_set_availability(&p, &[], r).is_err());
        let raised = PredictionMatrix::from_fn((0..5).map(|i| format!("n{i}")).collect(), r, |u, t| {
            if u == extra { (probs[u][t] + 0.25).min(1.0) } else { probs[u][t] }
        })
        .unwrap();
        prop_assert!(predicted_set_availability(&raised, &more, r).unwrap() >= b - 1e-15);
    }

    #[test]
    fn redundancy_is_smallest_meeting_target(a in 0.01f64..0.99, target in 0.001f64..0.2) {
        let n = redundancy_for_target(a, target).unwrap();
        prop_assert!((1.0 - a).powi(n as i32) <= target * (1.0 + 1e-12));
        if n > 1 {
            prop_assert!((1.0 - a).powi(n as i32 - 1) > target);
        }
    }

    #[test]
    fn redundancy_increase_is_zero_without_gain(a in 0.01f64..0.99) {
        prop_assert!(equivalent_redundancy_increase(a, a).unwrap().abs() < 1e-12);
    }
}

#[test]
fn streaming_counts_equal_recount() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let users: Vec<String> = (0..6).map(|i| format!("u{i}")).collect();
    let mut counts = ObservationCounts::empty(users.clone(), 24);
    let mut log: Vec<(usize, usize, bool)> = Vec::new();
    for step in 0..10_000 {
        let (u, t, on) = (rng.gen_range(0..6), rng.gen_range(0..2000), rng.gen_bool(0.4));
        counts.observe(u, t, on);
        log.push((u, t, on));
        if step % 997 == 0 || step == 9_999 {
            for _ in 0..20 {
                let target = rng.gen_range(0..3000);
                let user = rng.gen_range(0..6);
                let mut fresh = ObservationCounts::empty(users.clone(), 24);
                for &(u, t, on) in &log {
                    fresh.observe(u, t, on);
                }
                assert_eq!(counts.features(user, target), fresh.features(user, target));
                for (who, per) in [Some(user), None]
                    .into_iter()
                    .flat_map(|w| [Periodicity::Flat, Periodicity::Daily, Periodicity::Weekly].map(|p| (w, p)))
                {
                    let brute = log
                        .iter()
                        .filter(|&&(u, t, _)| {
                            who.map_or(true, |w| u == w)
                                && match per {
                                    Periodicity::Flat => true,
                                    Periodicity::Daily => t % 24 == target % 24,
                                    Periodicity::Weekly => t % 168 == target % 168,
                                }
                        })
                        .fold((0, 0), |(a, b), &(_, _, on)| if on { (a + 1, b) } else { (a, b + 1) });
                    assert_eq!(counts.counts(who, per, target), brute);
                }
            }
        }
    }
    assert_eq!(feature_value(0, 0), 0.5);
}

#[test]
fn availability_matrix_round_trips_through_text() {
    let m = AvailabilityMatrix::from_rows(
        7200,
        3600,
        vec!["b".into(), "a".into()],
        vec![vec![1, 0, 1], vec![0, 0, 1]],
    )
    .unwrap();
    let mut buf = Vec::new();
    m.write_to(&mut buf).unwrap();
    let back = AvailabilityMatrix::read_from(&buf[..], "buffer").unwrap();
    assert_eq!(back, m);
}
