//! Friend-to-friend storage: each node stores unit data objects for up to `k`
//! friends. Compares prediction-driven exchanges with random and
//! anti-correlated placement on a small-world social graph.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::prediction::PredictionMatrix;
use crate::seeds::{derive_indexed, stream_rng};
use crate::sim_dht::{predicted_set_availability, Columns, SimRow, MIN_GAIN};
use crate::trace::{AvailabilityMatrix, SlotRange};

pub const DEFAULT_DEGREE: usize = 20;
pub const DEFAULT_REWIRE_P: f64 = 0.5;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

/// Undirected simple graph; neighbor lists sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    adj: Vec<Vec<usize>>,
}

impl SocialGraph {
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); nodes];
        for &(a, b) in edges {
            if a >= nodes || b >= nodes || a == b {
                return Err(Error::invalid(format!("bad edge ({a},{b})")));
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        Ok(Self::from_sets(sets))
    }

    fn from_sets(sets: Vec<BTreeSet<usize>>) -> Self {
        SocialGraph {
            adj: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Mean over nodes of the local clustering coefficient; nodes of degree
    /// below 2 count as 0.
    pub fn mean_clustering(&self) -> f64 {
        let total: f64 = (0..self.n_nodes())
            .map(|v| {
                let nb = &self.adj[v];
                let d = nb.len();
                if d < 2 {
                    return 0.0;
                }
                let mut links = 0usize;
                for (i, &a) in nb.iter().enumerate() {
                    links += nb[i + 1..].iter().filter(|&&b| self.has_edge(a, b)).count();
                }
                2.0 * links as f64 / (d * (d - 1)) as f64
            })
            .sum();
        total / self.n_nodes() as f64
    }

    pub fn is_connected(&self) -> bool {
        if self.adj.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.n_nodes()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.adj[v] {
                if !std::mem::replace(&mut seen[w], true) {
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Watts-Strogatz graph: a ring lattice with `degree / 2` neighbors per side,
/// each lattice edge `(u, u + j)` rewired with probability `rewire_p` to a
/// uniform target that is neither `u` nor already adjacent to it.
pub fn generate_ws_graph(nodes: usize, degree: usize, rewire_p: f64, seed: u64) -> Result<SocialGraph> {
    if degree == 0 || degree % 2 != 0 || degree >= nodes {
        return Err(Error::invalid(format!(
            "degree {degree} must be even, positive and below the node count {nodes}"
        )));
    }
    if !(0.0..=1.0).contains(&rewire_p) {
        return Err(Error::invalid(format!("rewire probability {rewire_p} not in [0,1]")));
    }
    let mut adj = vec![BTreeSet::new(); nodes];
    for u in 0..nodes {
        for j in 1..=degree / 2 {
            let v = (u + j) % nodes;
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    let mut rng = stream_rng(seed, 0);
    for j in 1..=degree / 2 {
        for u in 0..nodes {
            let v = (u + j) % nodes;
            if !(rng.gen::<f64>() < rewire_p) || adj[u].len() >= nodes - 1 || !adj[u].contains(&v) {
                continue;
            }
            let w = loop {
                let w = rng.gen_range(0..nodes);
                if w != u && !adj[u].contains(&w) {
                    break w;
                }
            };
            adj[u].remove(&v);
            adj[v].remove(&u);
            adj[u].insert(w);
            adj[w].insert(u);
        }
    }
    Ok(SocialGraph::from_sets(adj))
}

/// `holders[o]` store the data of owner `o`; `stored[h]` lists the owners whose
/// data `h` keeps. Both sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementMapping {
    pub holders: Vec<Vec<usize>>,
    pub stored: Vec<Vec<usize>>,
    pub capacity: usize,
}

impl PlacementMapping {
    pub fn empty(nodes: usize, capacity: usize) -> Self {
        PlacementMapping {
            holders: vec![Vec::new(); nodes],
            stored: vec![Vec::new(); nodes],
            capacity,
        }
    }

    fn add(&mut self, owner: usize, holder: usize) {
        if let Err(i) = self.holders[owner].binary_search(&holder) {
            self.holders[owner].insert(i, holder);
            let j = self.stored[holder].binary_search(&owner).unwrap_err();
            self.stored[holder].insert(j, owner);
        }
    }

    fn remove(&mut self, owner: usize, holder: usize) {
        if let Ok(i) = self.holders[owner].binary_search(&holder) {
            self.holders[owner].remove(i);
            let j = self.stored[holder].binary_search(&owner).expect("mirrored entry");
            self.stored[holder].remove(j);
        }
    }

    /// Capacity and friendship constraints.
    pub fn check(&self, g: &SocialGraph) -> Result<()> {
        for (h, owners) in self.stored.iter().enumerate() {
            if owners.len() > self.capacity {
                return Err(Error::invalid(format!(
                    "node {h} holds {} objects, capacity {}",
                    owners.len(),
                    self.capacity
                )));
            }
        }
        for (o, hs) in self.holders.iter().enumerate() {
            if let Some(h) = hs.iter().find(|&&h| !g.has_edge(o, h)) {
                return Err(Error::invalid(format!("node {h} holds data of non-friend {o}")));
            }
        }
        Ok(())
    }

    /// Owners with fewer than `replicas` holders.
    pub fn under_replicated(&self, replicas: usize) -> usize {
        self.holders.iter().filter(|h| h.len() < replicas).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementOptions {
    /// Run the exchange phase; without it the random initialization is returned.
    pub optimize: bool,
    pub max_sweeps: usize,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        PlacementOptions {
            optimize: true,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementOutcome {
    pub mapping: PlacementMapping,
    pub exchanges: usize,
    pub sweeps: usize,
    /// False if `max_sweeps` ran out before a sweep without exchanges.
    pub converged: bool,
}

fn check_graph(g: &SocialGraph, nodes: usize, k: usize) -> Result<()> {
    if g.n_nodes() != nodes {
        return Err(Error::DimensionMismatch {
            expected: nodes,
            actual: g.n_nodes(),
        });
    }
    if k == 0 {
        return Err(Error::invalid("capacity must be at least 1"));
    }
    if let Some(v) = (0..nodes).find(|&v| g.degree(v) == 0) {
        return Err(Error::invalid(format!("node {v} has no friends")));
    }
    Ok(())
}

/// Predicted availability gained by adding `n` to `holders` (with `n` itself
/// excluded from the base set).
fn delta(cols: &Columns, holders: &[usize], n: usize, scratch: &mut [f64]) -> f64 {
    scratch.fill(1.0);
    for &h in holders.iter().filter(|&&h| h != n) {
        for (s, q) in scratch.iter_mut().zip(cols.off(h)) {
            *s *= q;
        }
    }
    cols.gain(scratch, n)
}

/// Random initialization followed by one-for-one exchanges. Each node, in index
/// order, swaps the stored object contributing least to its owner's predicted
/// availability for the unstored friend's object that would gain most, when
/// that raises the total. `observe` sees the mapping after initialization and
/// after every exchange.
pub fn place_predictive_with(
    p: &PredictionMatrix,
    g: &SocialGraph,
    k: usize,
    slots: SlotRange,
    seed: u64,
    opts: &PlacementOptions,
    mut observe: impl FnMut(&PlacementMapping),
) -> Result<PlacementOutcome> {
    let nodes = p.n_users();
    check_graph(g, nodes, k)?;
    if slots.is_empty() || !p.range().contains_range(&slots) {
        return Err(Error::invalid(format!("slots {slots} empty or outside predictions")));
    }
    let mut rng = stream_rng(seed, 0);
    let mut m = PlacementMapping::empty(nodes, k);
    for n in 0..nodes {
        let chosen: Vec<usize> = g
            .neighbors(n)
            .choose_multiple(&mut rng, k.min(g.degree(n)))
            .copied()
            .collect();
        for f in chosen {
            m.add(f, n);
        }
    }
    observe(&m);
    let mut out = PlacementOutcome {
        mapping: m,
        exchanges: 0,
        sweeps: 0,
        converged: !opts.optimize,
    };
    if !opts.optimize {
        return Ok(out);
    }
    let cols = Columns::new(p, slots);
    let mut scratch = vec![0.0; cols.width()];
    let m = &mut out.mapping;
    while out.sweeps < opts.max_sweeps {
        out.sweeps += 1;
        let mut changed = false;
        for n in 0..nodes {
            // Strict comparisons keep the lowest friend index on ties.
            let mut worst: Option<(usize, f64)> = None;
            let mut best: Option<(usize, f64)> = None;
            for &f in g.neighbors(n) {
                let d = delta(&cols, &m.holders[f], n, &mut scratch);
                if m.stored[n].binary_search(&f).is_ok() {
                    if worst.map_or(true, |(_, w)| d < w) {
                        worst = Some((f, d));
                    }
                } else if best.map_or(true, |(_, b)| d > b) {
                    best = Some((f, d));
                }
            }
            if let (Some((f0, d0)), Some((f1, d1))) = (worst, best) {
                if d1 - d0 > MIN_GAIN {
                    m.remove(f0, n);
                    m.add(f1, n);
                    out.exchanges += 1;
                    changed = true;
                    observe(m);
                }
            }
        }
        if !changed {
            out.converged = true;
            break;
        }
    }
    Ok(out)
}

pub fn place_predictive(
    p: &PredictionMatrix,
    g: &SocialGraph,
    k: usize,
    slots: SlotRange,
    seed: u64,
) -> Result<PlacementMapping> {
    Ok(place_predictive_with(p, g, k, slots, seed, &PlacementOptions::default(), |_| {})?.mapping)
}

/// Number of slots in `range` where the two rows agree.
pub fn agreement(a: &AvailabilityMatrix, n1: usize, n2: usize, range: SlotRange) -> usize {
    let (r1, r2) = (&a.row(n1)[range.start..range.end], &a.row(n2)[range.start..range.end]);
    r1.iter().zip(r2).filter(|(x, y)| x == y).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaOutcome {
    pub mapping: PlacementMapping,
    pub rounds: usize,
}

/// Random & anti-correlated placement. Every node has `k` free units. In each
/// round every owner with eligible friends (free space, not yet holding its
/// data) takes one random holder `r`, then the eligible friend agreeing least
/// with `r` over `ref_range`. Stops when no space is left or a round places
/// nothing.
pub fn place_ra(
    a_ref: &AvailabilityMatrix,
    ref_range: SlotRange,
    g: &SocialGraph,
    k: usize,
    seed: u64,
) -> Result<RaOutcome> {
    let nodes = a_ref.n_users();
    check_graph(g, nodes, k)?;
    if ref_range.is_empty() || ref_range.end > a_ref.n_slots() {
        return Err(Error::invalid(format!(
            "reference range {ref_range} empty or outside the matrix"
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let mut m = PlacementMapping::empty(nodes, k);
    let mut free = vec![k; nodes];
    let mut rounds = 0;
    while free.iter().any(|&s| s > 0) {
        rounds += 1;
        let mut placed = false;
        for n in 0..nodes {
            let eligible = |m: &PlacementMapping, free: &[usize]| -> Vec<usize> {
                g.neighbors(n)
                    .iter()
                    .copied()
                    .filter(|&f| free[f] > 0 && m.holders[n].binary_search(&f).is_err())
                    .collect()
            };
            let f = eligible(&m, &free);
            if f.is_empty() {
                continue;
            }
            let r = f[rng.gen_range(0..f.len())];
            m.add(n, r);
            free[r] -= 1;
            placed = true;
            let rest = eligible(&m, &free);
            if rest.is_empty() {
                continue;
            }
            let mut best = rest[0];
            let mut best_c = agreement(a_ref, r, best, ref_range);
            for &c in &rest[1..] {
                let v = agreement(a_ref, r, c, ref_range);
                if v < best_c {
                    best = c;
                    best_c = v;
                }
            }
            m.add(n, best);
            free[best] -= 1;
        }
        if !placed {
            break;
        }
    }
    Ok(RaOutcome { mapping: m, rounds })
}

/// Mean over owners of the fraction of `slots` with at least one holder online
/// in `a`; owners without holders count as 0.
pub fn measure_placement_availability(a: &AvailabilityMatrix, m: &PlacementMapping, slots: SlotRange) -> Result<f64> {
    if m.holders.len() != a.n_users() {
        return Err(Error::DimensionMismatch {
            expected: m.holders.len(),
            actual: a.n_users(),
        });
    }
    if slots.is_empty() || slots.end > a.n_slots() {
        return Err(Error::invalid(format!("slots {slots} empty or outside the matrix")));
    }
    let total: f64 = m
        .holders
        .iter()
        .map(|hs| {
            let up = slots.iter().filter(|&t| hs.iter().any(|&h| a.get(h, t))).count();
            up as f64 / slots.len() as f64
        })
        .sum();
    Ok(total / m.holders.len() as f64)
}

/// Mean over owners of the predicted availability of their holder sets.
pub fn predicted_placement_availability(p: &PredictionMatrix, m: &PlacementMapping, slots: SlotRange) -> Result<f64> {
    let mut total = 0.0;
    for hs in &m.holders {
        if !hs.is_empty() {
            total += predicted_set_availability(p, hs, slots)?;
        }
    }
    Ok(total / m.holders.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct F2fConfig {
    pub capacity: usize,
    pub sample_size: usize,
    pub degree: usize,
    pub rewire_p: f64,
    pub repetitions: usize,
    pub max_sweeps: usize,
    pub seed: u64,
}

/// Per repetition: sample nodes, draw a graph, then place with the random
/// initialization, R&A on `reference` over `ref_range`, and the predictive
/// exchanges. All three matrices must list the same users in the same order.
pub fn run_f2f_experiment(
    pred: &PredictionMatrix,
    actual: &AvailabilityMatrix,
    reference: &AvailabilityMatrix,
    ref_range: SlotRange,
    cfg: &F2fConfig,
) -> Result<Vec<SimRow>> {
    if pred.users() != actual.users() || pred.users() != reference.users() {
        return Err(Error::invalid(
            "prediction, test and reference matrices must list the same users",
        ));
    }
    let total = pred.n_users();
    let sample = cfg.sample_size.min(total);
    let slots = pred.range();
    let reps: Vec<Vec<SimRow>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<Vec<SimRow>> {
            let r = rep as u64;
            let mut rng = stream_rng(derive_indexed(cfg.seed, "f2f-sample", r), 0);
            let mut chosen = rand::seq::index::sample(&mut rng, total, sample).into_vec();
            chosen.sort_unstable();
            let ids: Vec<&str> = chosen.iter().map(|&i| pred.users()[i].as_str()).collect();
            let (p, a, c) = (
                pred.select_users(&ids)?,
                actual.select_users(&ids)?,
                reference.select_users(&ids)?,
            );
            let g = generate_ws_graph(
                sample,
                cfg.degree,
                cfg.rewire_p,
                derive_indexed(cfg.seed, "f2f-graph", r),
            )?;
            let place_seed = derive_indexed(cfg.seed, "f2f-place", r);
            let random = place_predictive_with(
                &p,
                &g,
                cfg.capacity,
                slots,
                place_seed,
                &PlacementOptions {
                    optimize: false,
                    max_sweeps: 0,
                },
                |_| {},
            )?;
            let opts = PlacementOptions {
                optimize: true,
                max_sweeps: cfg.max_sweeps,
            };
            let predictive = place_predictive_with(&p, &g, cfg.capacity, slots, place_seed, &opts, |_| {})?;
            let ra = place_ra(&c, ref_range, &g, cfg.capacity, derive_indexed(cfg.seed, "f2f-ra", r))?;
            let mut rows = Vec::with_capacity(3);
            for (strategy, m) in [
                ("random", &random.mapping),
                ("ra", &ra.mapping),
                ("predictive", &predictive.mapping),
            ] {
                rows.push(SimRow {
                    rep,
                    strategy,
                    predicted_avail: predicted_placement_availability(&p, m, slots)?,
                    real_avail: measure_placement_availability(&a, m, slots)?,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(reps.concat())
}
