use availcast::prediction::PredictionMatrix;
use availcast::sim_dht::{assign_identifiers, assign_identifiers_with, ring_objective, DhtOptions, RingAssignment};
use availcast::sim_f2f::{
    generate_ws_graph, place_predictive_with, place_ra, predicted_placement_availability, PlacementOptions,
};
use availcast::synth::{generate_trace, UserProfile};
use availcast::trace::SlotRange;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i:02}")).collect()
}

/// Nodes alternate between day (high in the first half) and night profiles.
fn day_night(nodes: usize, slots: usize) -> PredictionMatrix {
    PredictionMatrix::from_fn(ids(nodes), SlotRange::new(0, slots), |u, t| {
        let day = t % 24 < 12;
        if (u % 2 == 0) == day {
            0.9
        } else {
            0.1
        }
    })
    .unwrap()
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

#[test]
fn six_node_ring_reaches_brute_force_optimum() {
    let p = day_night(6, 48);
    let r = p.range();
    let mut all = Vec::new();
    permutations(&mut (0..6).collect(), 0, &mut all);
    let best = all
        .into_iter()
        .map(|o| ring_objective(&p, &RingAssignment::new(o).unwrap(), 2, r).unwrap())
        .fold(f64::MIN, f64::max);
    let hits = (0..100)
        .filter(|&seed| {
            let ring = assign_identifiers(&p, 2, 1000, seed).unwrap();
            (ring_objective(&p, &ring, 2, r).unwrap() - best).abs() < 1e-12
        })
        .count();
    assert!(hits >= 95, "{hits}/100 seeds reached the optimum");
}

#[test]
fn every_committed_swap_raises_the_global_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = PredictionMatrix::from_fn(ids(30), SlotRange::new(0, 96), |_, _| rng.gen::<f64>()).unwrap();
    for n in [1, 3, 5] {
        let r = p.range();
        let mut last: Option<f64> = None;
        let mut commits = 0;
        let out = assign_identifiers_with(&p, n, r, 9, &DhtOptions::default(), |ring, _, _| {
            let obj = ring_objective(&p, ring, n, r).unwrap();
            if let Some(prev) = last {
                assert!(obj > prev - 1e-12, "objective fell from {prev} to {obj}");
            }
            last = Some(obj);
            commits += 1;
        })
        .unwrap();
        assert_eq!(commits, out.commits);
        let start = ring_objective(&p, &out.initial, n, r).unwrap();
        assert!(ring_objective(&p, &out.ring, n, r).unwrap() >= start);
    }
}

#[test]
fn f2f_exchanges_keep_capacity_and_raise_prediction() {
    let profiles: Vec<UserProfile> = (0..40)
        .map(|i| UserProfile::hours((i * 5) % 24, (i * 5 + 8) % 24).with_noise(0.05))
        .collect();
    let trace = generate_trace(&profiles, 2, 1).unwrap();
    let users = trace.users().to_vec();
    let p = PredictionMatrix::from_fn(users, SlotRange::new(0, 168), |u, t| {
        profiles[u].online_probability(t) * 0.9 + 0.05
    })
    .unwrap();
    let g = generate_ws_graph(40, 6, 0.3, 4).unwrap();
    for k in [1, 2, 4] {
        let mut last = f64::MIN;
        let out = place_predictive_with(&p, &g, k, p.range(), 3, &PlacementOptions::default(), |m| {
            m.check(&g).unwrap();
            let obj = predicted_placement_availability(&p, m, p.range()).unwrap();
            assert!(
                obj > last,
                "exchange did not raise the objective: {last} -> {obj} (k={k})"
            );
            last = obj;
        })
        .unwrap();
        assert!(out.converged);
        for (n, s) in out.mapping.stored.iter().enumerate() {
            assert_eq!(s.len(), k.min(g.degree(n)));
        }
        let ra = place_ra(&trace, SlotRange::new(0, 168), &g, k, 3).unwrap();
        ra.mapping.check(&g).unwrap();
    }
}
