//! Newsfeed pre-loading: at each slot, push-on-change is enabled for `n`
//! offline users; a hit is a selected user who connects in the next slot.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::prediction::PredictionMatrix;
use crate::seeds::stream_rng;
use crate::trace::AvailabilityMatrix;

/// Offline users ordered by descending score, ties by user index.
fn ranked_offline(scores: impl Fn(usize) -> f64, online_now: &[bool]) -> Vec<usize> {
    let mut offline: Vec<usize> = (0..online_now.len()).filter(|&u| !online_now[u]).collect();
    offline.sort_by(|&a, &b| scores(b).total_cmp(&scores(a)).then(a.cmp(&b)));
    offline
}

/// The `n` offline users most likely to be online at `next_slot`.
pub fn select_push_users(p: &PredictionMatrix, online_now: &[bool], n: usize, next_slot: usize) -> Result<Vec<usize>> {
    if online_now.len() != p.n_users() {
        return Err(Error::DimensionMismatch {
            expected: p.n_users(),
            actual: online_now.len(),
        });
    }
    if !p.range().contains(next_slot) {
        return Err(Error::invalid(format!(
            "slot {next_slot} outside predictions {}",
            p.range()
        )));
    }
    let mut r = ranked_offline(|u| p.get(u, next_slot), online_now);
    r.truncate(n);
    Ok(r)
}

/// The `n` offline users with the highest training-period availability.
pub fn select_baseline_users(train_avail: &[f64], online_now: &[bool], n: usize) -> Result<Vec<usize>> {
    if online_now.len() != train_avail.len() {
        return Err(Error::DimensionMismatch {
            expected: train_avail.len(),
            actual: online_now.len(),
        });
    }
    let mut r = ranked_offline(|u| train_avail[u], online_now);
    r.truncate(n);
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyCurve {
    pub name: &'static str,
    /// Per `n`: total hits and selections over all slots.
    pub hits: Vec<u64>,
    pub selections: Vec<u64>,
    /// Per slot, per `n`: `(hits, selections)`.
    pub per_slot: Vec<Vec<(u32, u32)>>,
}

impl StrategyCurve {
    pub fn hit_ratio(&self, i: usize) -> f64 {
        if self.selections[i] == 0 {
            0.0
        } else {
            self.hits[i] as f64 / self.selections[i] as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreloadRun {
    pub n_values: Vec<usize>,
    /// Slots `t` evaluated; the hit is read at `t + 1`.
    pub slots: Vec<usize>,
    pub predictive: StrategyCurve,
    pub baseline: StrategyCurve,
    /// `n` values above the population size, which select everyone offline.
    pub capped: Vec<usize>,
}

/// Runs both strategies over every slot `t` with `t + 1` in the prediction
/// range. `a_test` and `p` must list the same users in the same order.
pub fn simulate_preload(
    a_test: &AvailabilityMatrix,
    p: &PredictionMatrix,
    train_avail: &[f64],
    n_values: &[usize],
) -> Result<PreloadRun> {
    if a_test.users() != p.users() {
        return Err(Error::invalid("test matrix and predictions must list the same users"));
    }
    if train_avail.len() != p.n_users() {
        return Err(Error::DimensionMismatch {
            expected: p.n_users(),
            actual: train_avail.len(),
        });
    }
    let range = p.range();
    if range.len() < 2 || range.end > a_test.n_slots() {
        return Err(Error::invalid(format!(
            "prediction range {range} needs two slots inside the test matrix"
        )));
    }
    let users = p.n_users();
    let slots: Vec<usize> = (range.start..range.end - 1).collect();
    let per_slot: Vec<[Vec<(u32, u32)>; 2]> = slots
        .par_iter()
        .map(|&t| {
            let online: Vec<bool> = (0..users).map(|u| a_test.get(u, t)).collect();
            let rank_p = ranked_offline(|u| p.get(u, t + 1), &online);
            let rank_b = ranked_offline(|u| train_avail[u], &online);
            let count = |rank: &[usize]| -> Vec<(u32, u32)> {
                let mut prefix = Vec::with_capacity(rank.len() + 1);
                prefix.push(0u32);
                for &u in rank {
                    prefix.push(prefix.last().unwrap() + a_test.get(u, t + 1) as u32);
                }
                n_values
                    .iter()
                    .map(|&n| {
                        let k = n.min(rank.len());
                        (prefix[k], k as u32)
                    })
                    .collect()
            };
            [count(&rank_p), count(&rank_b)]
        })
        .collect();
    let curve = |name: &'static str, s: usize| {
        let rows: Vec<Vec<(u32, u32)>> = per_slot.iter().map(|r| r[s].clone()).collect();
        let mut hits = vec![0u64; n_values.len()];
        let mut selections = vec![0u64; n_values.len()];
        for r in &rows {
            for (i, &(h, k)) in r.iter().enumerate() {
                hits[i] += h as u64;
                selections[i] += k as u64;
            }
        }
        StrategyCurve {
            name,
            hits,
            selections,
            per_slot: rows,
        }
    };
    Ok(PreloadRun {
        n_values: n_values.to_vec(),
        slots,
        predictive: curve("predictive", 0),
        baseline: curve("baseline", 1),
        capped: n_values.iter().copied().filter(|&n| n > users).collect(),
    })
}

/// Three standard deviations of the hit-ratio difference under random
/// exchange of the two strategies' outcomes, for each `n`. Outcomes are
/// exchanged per block of `block` consecutive slots, since neighbouring slots
/// share selections and are not independent.
pub fn permutation_band(run: &PreloadRun, permutations: usize, block: usize, seed: u64) -> Vec<f64> {
    let block = block.max(1);
    (0..run.n_values.len())
        .map(|i| {
            let total: u64 = run.predictive.selections[i];
            if total == 0 || permutations < 2 {
                return 0.0;
            }
            let diffs: Vec<f64> = run
                .predictive
                .per_slot
                .chunks(block)
                .zip(run.baseline.per_slot.chunks(block))
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x[i].0 as f64 - y[i].0 as f64).sum())
                .collect();
            let mut rng = stream_rng(seed, i as u64);
            let stats: Vec<f64> = (0..permutations)
                .map(|_| {
                    let s: f64 = diffs.iter().map(|d| if rng.gen::<bool>() { *d } else { -*d }).sum();
                    s / total as f64
                })
                .collect();
            let mean = stats.iter().sum::<f64>() / stats.len() as f64;
            let var = stats.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (stats.len() - 1) as f64;
            3.0 * var.sqrt()
        })
        .collect()
}

/// `strategy,n,hit_ratio`.
pub fn write_curve<W: Write>(mut w: W, run: &PreloadRun) -> std::io::Result<()> {
    writeln!(w, "strategy,n,hit_ratio")?;
    for c in [&run.predictive, &run.baseline] {
        for (i, n) in run.n_values.iter().enumerate() {
            writeln!(w, "{},{n},{:.6}", c.name, c.hit_ratio(i))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::SlotRange;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    #[test]
    fn selections_skip_online_users_and_follow_scores() {
        let p = PredictionMatrix::from_fn(ids(5), SlotRange::new(0, 2), |u, _| [0.3, 0.9, 0.5, 0.7, 0.1][u]).unwrap();
        let online = [false, true, false, false, false];
        assert!(select_push_users(&p, &online, 0, 1).unwrap().is_empty());
        assert_eq!(select_push_users(&p, &online, 2, 1).unwrap(), vec![3, 2]);
        assert_eq!(select_push_users(&p, &online, 10, 1).unwrap(), vec![3, 2, 0, 4]);
        assert_eq!(select_push_users(&p, &[false; 5], 5, 1).unwrap().len(), 5);
        assert_eq!(select_baseline_users(&[0.9, 0.1], &[false, false], 1).unwrap(), vec![0]);
        assert_eq!(select_baseline_users(&[0.5, 0.5], &[false, false], 1).unwrap(), vec![0]);
    }

    #[test]
    fn single_always_off_user_never_hits() {
        let a = AvailabilityMatrix::from_rows(0, 3600, ids(1), vec![vec![0; 6]]).unwrap();
        let p = PredictionMatrix::constant(ids(1), SlotRange::new(0, 6), 0.9).unwrap();
        let run = simulate_preload(&a, &p, &[0.0], &[1, 3]).unwrap();
        assert_eq!(run.predictive.hit_ratio(0), 0.0);
        assert_eq!(run.predictive.selections[0], 5);
        assert_eq!(run.capped, vec![3]);
    }

    #[test]
    fn aggregate_is_selection_weighted_mean_of_slot_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<u8>> = (0..15)
            .map(|_| (0..40).map(|_| rng.gen_bool(0.4) as u8).collect())
            .collect();
        let a = AvailabilityMatrix::from_rows(0, 3600, ids(15), rows).unwrap();
        let p = PredictionMatrix::from_fn(ids(15), SlotRange::new(0, 40), |_, _| rng.gen::<f64>()).unwrap();
        let train: Vec<f64> = (0..15).map(|_| rng.gen()).collect();
        let run = simulate_preload(&a, &p, &train, &[1, 2, 5, 20]).unwrap();
        for c in [&run.predictive, &run.baseline] {
            for i in 0..4 {
                let (mut num, mut den) = (0.0, 0.0);
                for r in &c.per_slot {
                    let (h, k) = r[i];
                    if k > 0 {
                        num += k as f64 * (h as f64 / k as f64);
                        den += k as f64;
                    }
                }
                assert!((num / den - c.hit_ratio(i)).abs() < 1e-12);
            }
        }
        for (k, &t) in run.slots.iter().enumerate() {
            let online: Vec<bool> = (0..15).map(|u| a.get(u, t)).collect();
            let sel = select_push_users(&p, &online, 5, t + 1).unwrap();
            assert!(sel.iter().all(|&u| !online[u]));
            let hits = sel.iter().filter(|&&u| a.get(u, t + 1)).count() as u32;
            assert_eq!(run.predictive.per_slot[k][2], (hits, sel.len() as u32));
        }
    }

    #[test]
    fn curve_csv_layout() {
        let a = AvailabilityMatrix::from_rows(0, 3600, ids(2), vec![vec![0, 1, 0], vec![0, 0, 1]]).unwrap();
        let p = PredictionMatrix::constant(ids(2), SlotRange::new(0, 3), 0.5).unwrap();
        let run = simulate_preload(&a, &p, &[0.5, 0.2], &[1]).unwrap();
        let mut buf = Vec::new();
        write_curve(&mut buf, &run).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "strategy,n,hit_ratio\npredictive,1,1.000000\nbaseline,1,1.000000\n"
        );
    }
}
