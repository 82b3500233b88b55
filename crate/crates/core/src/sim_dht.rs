//! Ring placement of DHT node identifiers driven by predicted availability.
//!
//! Node `i` is row `i` of both the prediction matrix and the test matrix; the
//! experiment driver aligns the two by selecting the same users.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::prediction::PredictionMatrix;
use crate::seeds::{derive_indexed, stream_rng};
use crate::trace::{AvailabilityMatrix, SlotRange};

pub const DEFAULT_ITERATIONS: usize = 1000;
pub const DEFAULT_TARGET_UNAVAILABILITY: f64 = 0.01;
pub const DEFAULT_SAMPLE_SIZE: usize = 408;

/// Smallest objective gain treated as an improvement. Reordered products can
/// differ by a few ulps when the true gain is zero.
pub(crate) const MIN_GAIN: f64 = 1e-12;

/// Mean over `slots` of `1 - prod(1 - P[n, t])`: the chance that some member
/// is online, assuming independent nodes.
pub fn predicted_set_availability(p: &PredictionMatrix, members: &[usize], slots: SlotRange) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::EmptyUserSet("neighbor set"));
    }
    if slots.is_empty() {
        return Err(Error::EmptyRange("availability slots"));
    }
    if !p.range().contains_range(&slots) {
        return Err(Error::invalid(format!(
            "slots {slots} outside predictions {}",
            p.range()
        )));
    }
    let mut total = 0.0;
    for t in slots.iter() {
        let all_off: f64 = members.iter().map(|&n| 1.0 - p.get(n, t)).product();
        total += 1.0 - all_off;
    }
    Ok(total / slots.len() as f64)
}

/// Node indices in ring order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingAssignment {
    pub order: Vec<usize>,
}

impl RingAssignment {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &v in &order {
            if v >= order.len() || std::mem::replace(&mut seen[v], true) {
                return Err(Error::invalid("ring order is not a permutation"));
            }
        }
        Ok(RingAssignment { order })
    }

    pub fn identity(nodes: usize) -> Self {
        RingAssignment {
            order: (0..nodes).collect(),
        }
    }

    pub fn random<R: Rng>(nodes: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..nodes).collect();
        order.shuffle(rng);
        RingAssignment { order }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Ring position of each node.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (i, &v) in self.order.iter().enumerate() {
            pos[v] = i;
        }
        pos
    }
}

/// Set `i` holds the node at ring position `i` and its `n - 1` successors.
pub fn neighbor_sets(ring: &RingAssignment, n: usize) -> Result<Vec<Vec<usize>>> {
    let len = ring.len();
    if n == 0 || n > len {
        return Err(Error::invalid(format!("replica count {n} must be in 1..={len}")));
    }
    Ok((0..len)
        .map(|i| (0..n).map(|j| ring.order[(i + j) % len]).collect())
        .collect())
}

/// Mean predicted availability over all neighbor sets.
pub fn ring_objective(p: &PredictionMatrix, ring: &RingAssignment, n: usize, slots: SlotRange) -> Result<f64> {
    let sets = neighbor_sets(ring, n)?;
    let mut total = 0.0;
    for s in &sets {
        total += predicted_set_availability(p, s, slots)?;
    }
    Ok(total / sets.len() as f64)
}

/// Fraction of `slots` in which at least one member is online in `a`,
/// averaged over the neighbor sets.
pub fn measure_availability(a: &AvailabilityMatrix, ring: &RingAssignment, n: usize, slots: SlotRange) -> Result<f64> {
    if ring.len() != a.n_users() {
        return Err(Error::DimensionMismatch {
            expected: ring.len(),
            actual: a.n_users(),
        });
    }
    if slots.is_empty() || slots.end > a.n_slots() {
        return Err(Error::invalid(format!("slots {slots} empty or outside the matrix")));
    }
    let sets = neighbor_sets(ring, n)?;
    let total: f64 = sets
        .iter()
        .map(|s| {
            let up = slots.iter().filter(|&t| s.iter().any(|&v| a.get(v, t))).count();
            up as f64 / slots.len() as f64
        })
        .sum();
    Ok(total / sets.len() as f64)
}

/// Smallest `n` with `(1 - avg_avail)^n < target_unavail`.
pub fn redundancy_for_target(avg_avail: f64, target_unavail: f64) -> Result<usize> {
    if !(avg_avail > 0.0 && avg_avail < 1.0) {
        return Err(Error::invalid(format!(
            "average availability {avg_avail} must be in (0,1)"
        )));
    }
    if !(target_unavail > 0.0 && target_unavail < 1.0) {
        return Err(Error::invalid(format!("target {target_unavail} must be in (0,1)")));
    }
    let q = 1.0 - avg_avail;
    let mut n = 1;
    let mut qn = q;
    while qn >= target_unavail {
        n += 1;
        qn *= q;
    }
    Ok(n)
}

/// Growth of the replication factor that would give the same gain from `a0`
/// to `a1` for homogeneous independent nodes.
pub fn equivalent_redundancy_increase(a0: f64, a1: f64) -> Result<f64> {
    for a in [a0, a1] {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::invalid(format!("availability {a} must be in (0,1)")));
        }
    }
    Ok((1.0 - a1).ln() / (1.0 - a0).ln() - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhtOptions {
    /// Sweeps over all nodes.
    pub iterations: usize,
    /// Stop once no pair of nodes has an improving swap. Later sweeps could
    /// only draw non-improving partners, so the result is unchanged.
    pub early_exit: bool,
}

impl Default for DhtOptions {
    fn default() -> Self {
        DhtOptions {
            iterations: DEFAULT_ITERATIONS,
            early_exit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DhtOutcome {
    pub ring: RingAssignment,
    pub initial: RingAssignment,
    pub commits: usize,
    pub sweeps: usize,
}

/// Distinct prediction columns with multiplicities; `q` holds `1 - P`
/// node-major.
pub(crate) struct Columns {
    q: Vec<f64>,
    weights: Vec<f64>,
    total_weight: f64,
}

impl Columns {
    pub(crate) fn new(p: &PredictionMatrix, slots: SlotRange) -> Self {
        let nodes = p.n_users();
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for t in slots.iter() {
            let col: Vec<f64> = (0..nodes).map(|v| 1.0 - p.get(v, t)).collect();
            let key: Vec<u64> = col.iter().map(|x| x.to_bits()).collect();
            match seen.get(&key) {
                Some(&c) => weights[c] += 1.0,
                None => {
                    seen.insert(key, cols.len());
                    cols.push(col);
                    weights.push(1.0);
                }
            }
        }
        let c = cols.len();
        let mut q = vec![0.0; nodes * c];
        for (j, col) in cols.iter().enumerate() {
            for (v, &x) in col.iter().enumerate() {
                q[v * c + j] = x;
            }
        }
        Columns {
            q,
            total_weight: weights.iter().sum(),
            weights,
        }
    }

    pub(crate) fn width(&self) -> usize {
        self.weights.len()
    }

    /// `1 - P` of node `v` over the distinct columns.
    pub(crate) fn off(&self, v: usize) -> &[f64] {
        let c = self.weights.len();
        &self.q[v * c..(v + 1) * c]
    }

    /// Weighted mean of `1 - all_off` over columns.
    pub(crate) fn coverage(&self, all_off: &[f64]) -> f64 {
        let covered: f64 = all_off.iter().zip(&self.weights).map(|(s, w)| w * (1.0 - s)).sum();
        covered / self.total_weight
    }

    /// Weighted mean of `all_off * (1 - q_v)`: the availability node `v` adds
    /// to a set whose joint offline profile is `all_off`.
    pub(crate) fn gain(&self, all_off: &[f64], v: usize) -> f64 {
        let g: f64 = all_off
            .iter()
            .zip(self.off(v))
            .zip(&self.weights)
            .map(|((s, q), w)| w * s * (1.0 - q))
            .sum();
        g / self.total_weight
    }

    fn set_value(&self, order: &[usize], start: usize, n: usize, scratch: &mut [f64]) -> f64 {
        let c = self.weights.len();
        let len = order.len();
        scratch.fill(1.0);
        for j in 0..n {
            let v = order[(start + j) % len];
            for (s, x) in scratch.iter_mut().zip(&self.q[v * c..(v + 1) * c]) {
                *s *= x;
            }
        }
        self.coverage(scratch)
    }
}

/// Incremental evaluator: cached value of the set starting at each ring position.
struct RingState<'a> {
    cols: &'a Columns,
    n: usize,
    order: Vec<usize>,
    pos: Vec<usize>,
    values: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> RingState<'a> {
    fn new(cols: &'a Columns, ring: &RingAssignment, n: usize) -> Self {
        let mut scratch = vec![0.0; cols.weights.len()];
        let values = (0..ring.len())
            .map(|s| cols.set_value(&ring.order, s, n, &mut scratch))
            .collect();
        RingState {
            cols,
            n,
            order: ring.order.clone(),
            pos: ring.positions(),
            values,
            scratch,
        }
    }

    /// Start positions of the `n` sets containing node `v`.
    fn starts(&self, v: usize) -> impl Iterator<Item = usize> {
        let len = self.order.len();
        let p = self.pos[v];
        (0..self.n).map(move |j| (p + len - j) % len)
    }

    /// `PA(v) + PA(w)` under the current ring.
    fn pair_score(&self, v: usize, w: usize) -> f64 {
        let sum = |x: usize| self.starts(x).map(|s| self.values[s]).sum::<f64>();
        (sum(v) + sum(w)) / self.n as f64
    }

    /// Evaluates swapping `v` and `w`; keeps the swap iff it raises the pair score.
    fn try_swap(&mut self, v: usize, w: usize, commit_if_better: bool) -> bool {
        let a0 = self.pair_score(v, w);
        self.swap(v, w);
        let affected: Vec<usize> = {
            let mut s: Vec<usize> = self.starts(v).chain(self.starts(w)).collect();
            s.sort_unstable();
            s.dedup();
            s
        };
        let old: Vec<f64> = affected.iter().map(|&s| self.values[s]).collect();
        for &s in &affected {
            self.values[s] = self.cols.set_value(&self.order, s, self.n, &mut self.scratch);
        }
        let a1 = self.pair_score(v, w);
        let better = a1 - a0 > MIN_GAIN;
        if !(better && commit_if_better) {
            self.swap(v, w);
            for (&s, &x) in affected.iter().zip(&old) {
                self.values[s] = x;
            }
        }
        better
    }

    fn swap(&mut self, v: usize, w: usize) {
        let (pv, pw) = (self.pos[v], self.pos[w]);
        self.order.swap(pv, pw);
        self.pos[v] = pw;
        self.pos[w] = pv;
    }

    fn any_improving_pair(&mut self) -> bool {
        let len = self.order.len();
        for v in 0..len {
            for w in v + 1..len {
                if self.try_swap(v, w, false) {
                    return true;
                }
            }
        }
        false
    }

    fn ring(&self) -> RingAssignment {
        RingAssignment {
            order: self.order.clone(),
        }
    }
}

/// Swap local search over ring positions. Starts from a random ring drawn
/// from `seed`; each sweep visits nodes in index order and tries one uniform
/// random partner, committing when the summed mean availability of the sets
/// containing either node increases. `on_commit` sees the ring after every
/// committed swap.
pub fn assign_identifiers_with(
    p: &PredictionMatrix,
    n: usize,
    slots: SlotRange,
    seed: u64,
    opts: &DhtOptions,
    mut on_commit: impl FnMut(&RingAssignment, usize, usize),
) -> Result<DhtOutcome> {
    let nodes = p.n_users();
    if n == 0 || n > nodes {
        return Err(Error::invalid(format!("replica count {n} must be in 1..={nodes}")));
    }
    if slots.is_empty() || !p.range().contains_range(&slots) {
        return Err(Error::invalid(format!("slots {slots} empty or outside predictions")));
    }
    let mut rng = stream_rng(seed, 0);
    let initial = RingAssignment::random(nodes, &mut rng);
    let cols = Columns::new(p, slots);
    let mut state = RingState::new(&cols, &initial, n);
    let mut commits = 0;
    let mut sweeps = 0;
    let mut checked_since_commit = false;
    if nodes > 1 {
        for _ in 0..opts.iterations {
            sweeps += 1;
            let mut sweep_commits = 0;
            for v in 0..nodes {
                let mut w = rng.gen_range(0..nodes - 1);
                if w >= v {
                    w += 1;
                }
                if state.try_swap(v, w, true) {
                    commits += 1;
                    sweep_commits += 1;
                    checked_since_commit = false;
                    on_commit(&state.ring(), v, w);
                }
            }
            if opts.early_exit && sweep_commits == 0 && !checked_since_commit {
                if !state.any_improving_pair() {
                    break;
                }
                checked_since_commit = true;
            }
        }
    }
    Ok(DhtOutcome {
        ring: state.ring(),
        initial,
        commits,
        sweeps,
    })
}

/// Ring over all rows of `p` optimized over its full slot range.
pub fn assign_identifiers(p: &PredictionMatrix, n: usize, iterations: usize, seed: u64) -> Result<RingAssignment> {
    let opts = DhtOptions {
        iterations,
        ..DhtOptions::default()
    };
    Ok(assign_identifiers_with(p, n, p.range(), seed, &opts, |_, _, _| {})?.ring)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DhtConfig {
    pub replicas: usize,
    pub sample_size: usize,
    pub repetitions: usize,
    pub iterations: usize,
    pub seed: u64,
}

/// One line of the simulation report.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub rep: usize,
    pub strategy: &'static str,
    pub predicted_avail: f64,
    pub real_avail: f64,
}

/// Per repetition: sample nodes, then compare the random starting ring with
/// the optimized ring. `pred` and `actual` must list the same users in the
/// same order; availability is measured over `pred`'s range.
pub fn run_dht_experiment(
    pred: &PredictionMatrix,
    actual: &AvailabilityMatrix,
    cfg: &DhtConfig,
) -> Result<Vec<SimRow>> {
    if pred.users() != actual.users() {
        return Err(Error::invalid("prediction and test matrices must list the same users"));
    }
    let total = pred.n_users();
    let sample = cfg.sample_size.min(total);
    if sample < cfg.replicas || cfg.replicas == 0 {
        return Err(Error::invalid(format!(
            "sample of {sample} nodes cannot hold {} replicas",
            cfg.replicas
        )));
    }
    let slots = pred.range();
    let reps: Vec<Vec<SimRow>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<Vec<SimRow>> {
            let mut rng = stream_rng(derive_indexed(cfg.seed, "dht-sample", rep as u64), 0);
            let mut chosen = rand::seq::index::sample(&mut rng, total, sample).into_vec();
            chosen.sort_unstable();
            let ids: Vec<&str> = chosen.iter().map(|&i| pred.users()[i].as_str()).collect();
            let p = pred.select_users(&ids)?;
            let a = actual.select_users(&ids)?;
            let opts = DhtOptions {
                iterations: cfg.iterations,
                early_exit: true,
            };
            let out = assign_identifiers_with(
                &p,
                cfg.replicas,
                slots,
                derive_indexed(cfg.seed, "dht-ring", rep as u64),
                &opts,
                |_, _, _| {},
            )?;
            let mut rows = Vec::with_capacity(2);
            for (strategy, ring) in [("random", &out.initial), ("predictive", &out.ring)] {
                rows.push(SimRow {
                    rep,
                    strategy,
                    predicted_avail: ring_objective(&p, ring, cfg.replicas, slots)?,
                    real_avail: measure_availability(&a, ring, cfg.replicas, slots)?,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(reps.concat())
}

pub fn write_sim_report<W: Write>(mut w: W, rows: &[SimRow]) -> std::io::Result<()> {
    writeln!(w, "rep,strategy,predicted_avail,real_avail")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.6},{:.6}",
            r.rep, r.strategy, r.predicted_avail, r.real_avail
        )?;
    }
    Ok(())
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `strategy,predicted_mean,predicted_sd,real_mean,real_sd`, strategies in
/// first-seen order.
pub fn write_sim_summary<W: Write>(mut w: W, rows: &[SimRow]) -> std::io::Result<()> {
    let mut strategies: Vec<&str> = Vec::new();
    for r in rows {
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
    }
    writeln!(w, "strategy,predicted_mean,predicted_sd,real_mean,real_sd")?;
    for s in strategies {
        let pick = |f: fn(&SimRow) -> f64| rows.iter().filter(|r| r.strategy == s).map(f).collect::<Vec<_>>();
        let (pm, ps) = mean_sd(&pick(|r| r.predicted_avail));
        let (rm, rs) = mean_sd(&pick(|r| r.real_avail));
        writeln!(w, "{s},{pm:.6},{ps:.6},{rm:.6},{rs:.6}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    fn day_night(day: usize, night: usize, slots: usize) -> PredictionMatrix {
        PredictionMatrix::from_fn(ids(day + night), SlotRange::new(0, slots), |u, t| {
            let is_day = (t % 24) < 12;
            ((u < day) == is_day) as u8 as f64
        })
        .unwrap()
    }

    #[test]
    fn set_availability_small_cases() {
        let p = PredictionMatrix::from_fn(ids(3), SlotRange::new(0, 1), |u, _| [1.0, 0.5, 0.5][u]).unwrap();
        assert_eq!(predicted_set_availability(&p, &[0], SlotRange::new(0, 1)).unwrap(), 1.0);
        assert_eq!(
            predicted_set_availability(&p, &[1, 2], SlotRange::new(0, 1)).unwrap(),
            0.75
        );
        assert!(predicted_set_availability(&p, &[], SlotRange::new(0, 1)).is_err());
    }

    #[test]
    fn neighbor_sets_wrap_and_double_count() {
        let ring = RingAssignment::identity(4);
        assert_eq!(
            neighbor_sets(&ring, 2).unwrap(),
            vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 0]]
        );
        assert!(neighbor_sets(&ring, 4).unwrap().iter().all(|s| s.len() == 4));
        assert!(neighbor_sets(&ring, 5).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ring = RingAssignment::random(11, &mut rng);
        let mut count = [0; 11];
        for s in neighbor_sets(&ring, 3).unwrap() {
            s.iter().for_each(|&v| count[v] += 1);
        }
        assert!(count.iter().all(|&c| c == 3));
        assert!(RingAssignment::new(vec![0, 0, 1]).is_err());
    }

    #[test]
    fn redundancy_and_equivalent_increase() {
        assert_eq!(redundancy_for_target(0.939, 0.01).unwrap(), 2);
        assert_eq!(redundancy_for_target(0.488, 0.01).unwrap(), 7);
        assert_eq!(redundancy_for_target(0.377, 0.01).unwrap(), 10);
        assert!(redundancy_for_target(1.0, 0.01).is_err());
        assert!(redundancy_for_target(0.0, 0.01).is_err());
        assert_eq!(equivalent_redundancy_increase(0.7, 0.7).unwrap(), 0.0);
        let rho = equivalent_redundancy_increase(0.9918, 0.9954).unwrap();
        assert!((rho - 0.120).abs() < 0.005, "{rho}");
        let rho = equivalent_redundancy_increase(0.95, 0.99).unwrap();
        assert!((rho - 0.5372).abs() < 1e-4, "{rho}");
    }

    #[test]
    fn identical_rows_never_change_the_objective() {
        let p = PredictionMatrix::from_fn(ids(8), SlotRange::new(0, 48), |_, t| (t % 5) as f64 / 5.0).unwrap();
        let opts = DhtOptions {
            iterations: 50,
            early_exit: false,
        };
        let out = assign_identifiers_with(&p, 3, p.range(), 4, &opts, |_, _, _| {}).unwrap();
        assert_eq!(out.commits, 0);
        assert_eq!(
            ring_objective(&p, &out.ring, 3, p.range()).unwrap(),
            ring_objective(&p, &out.initial, 3, p.range()).unwrap()
        );
    }

    #[test]
    fn six_node_instance_alternates() {
        let p = day_night(3, 3, 24);
        for seed in 0..20 {
            let ring = assign_identifiers(&p, 2, 1000, seed).unwrap();
            for s in neighbor_sets(&ring, 2).unwrap() {
                assert_eq!(predicted_set_availability(&p, &s, p.range()).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn committed_swaps_raise_the_global_objective_and_cache_stays_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let p = PredictionMatrix::from_fn(ids(14), SlotRange::new(0, 30), |_, _| rng.gen::<f64>()).unwrap();
        let slots = p.range();
        let mut last = None;
        let opts = DhtOptions {
            iterations: 30,
            early_exit: false,
        };
        let out = assign_identifiers_with(&p, 3, slots, 8, &opts, |ring, _, _| {
            let now = ring_objective(&p, ring, 3, slots).unwrap();
            if let Some(prev) = last {
                assert!(now > prev - 1e-12, "{now} < {prev}");
            }
            last = Some(now);
        })
        .unwrap();
        assert!(out.commits > 0);
        let cols = Columns::new(&p, slots);
        let fresh = RingState::new(&cols, &out.ring, 3);
        let mut scratch = vec![0.0; cols.weights.len()];
        for s in 0..14 {
            let direct = predicted_set_availability(&p, &neighbor_sets(&out.ring, 3).unwrap()[s], slots).unwrap();
            assert!((fresh.values[s] - direct).abs() < 1e-12);
            assert_eq!(fresh.values[s], cols.set_value(&out.ring.order, s, 3, &mut scratch));
        }
    }

    #[test]
    fn early_exit_gives_the_same_ring() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = PredictionMatrix::from_fn(ids(12), SlotRange::new(0, 48), |u, t| {
                if (u % 3 == 0) == ((t % 24) < 12) {
                    0.9
                } else {
                    rng.gen::<f64>() * 0.2
                }
            })
            .unwrap();
            let run = |early_exit| {
                let opts = DhtOptions {
                    iterations: 300,
                    early_exit,
                };
                assign_identifiers_with(&p, 3, p.range(), seed, &opts, |_, _, _| {}).unwrap()
            };
            let (fast, slow) = (run(true), run(false));
            assert_eq!(fast.ring, slow.ring);
            assert_eq!(fast.commits, slow.commits);
            assert!(fast.sweeps <= slow.sweeps);
        }
    }

    #[test]
    fn measured_availability_cases() {
        let a = AvailabilityMatrix::from_rows(0, 3600, ids(3), vec![vec![1; 4], vec![1; 4], vec![1; 4]]).unwrap();
        let ring = RingAssignment::identity(3);
        assert_eq!(measure_availability(&a, &ring, 2, SlotRange::new(0, 4)).unwrap(), 1.0);
        let a = AvailabilityMatrix::from_rows(0, 3600, ids(2), vec![vec![1, 0, 0, 0], vec![1, 1, 1, 0]]).unwrap();
        let ring = RingAssignment::identity(2);
        assert_eq!(
            measure_availability(&a, &ring, 1, SlotRange::new(0, 4)).unwrap(),
            (0.25 + 0.75) / 2.0
        );
    }

    #[test]
    fn summary_uses_sample_sd() {
        assert_eq!(mean_sd(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        let rows = vec![
            SimRow {
                rep: 0,
                strategy: "random",
                predicted_avail: 0.5,
                real_avail: 0.4,
            },
            SimRow {
                rep: 1,
                strategy: "random",
                predicted_avail: 0.7,
                real_avail: 0.6,
            },
        ];
        let mut buf = Vec::new();
        write_sim_summary(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("random,0.600000,0.141421,0.500000,0.141421"), "{text}");
    }
}
