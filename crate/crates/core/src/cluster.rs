//! k-means over weekly availability rows.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeds::stream_rng;
use crate::trace::{AvailabilityMatrix, SlotRange};

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_RESTARTS: usize = 10;
const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Cluster of each input row.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<f64>,
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid and its squared distance; ties go to the lower index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, z) in centroids.iter().enumerate() {
        let d = sq_dist(p, z);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, restart: usize) -> ClusterResult {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        let mut dists = vec![0.0; points.len()];
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            changed |= assignments[i] != c;
            assignments[i] = c;
            dists[i] = d;
        }
        // An empty cluster takes over the point farthest from its centroid.
        let mut sizes = vec![0usize; k];
        assignments.iter().for_each(|&c| sizes[c] += 1);
        for c in 0..k {
            if sizes[c] == 0 {
                let far = (0..points.len())
                    .filter(|&i| sizes[assignments[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    sizes[assignments[i]] -= 1;
                    sizes[c] = 1;
                    assignments[i] = c;
                    dists[i] = 0.0;
                    centroids[c] = points[i].clone();
                    changed = true;
                }
            }
        }
        history.push(dists.iter().sum());
        if !changed && history.len() > 1 {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &c) in points.iter().zip(&assignments) {
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, s) in sums.into_iter().enumerate() {
            if sizes[c] > 0 {
                centroids[c] = s.into_iter().map(|v| v / sizes[c] as f64).collect();
            }
        }
    }
    let mut sizes = vec![0usize; k];
    assignments.iter().for_each(|&c| sizes[c] += 1);
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    ClusterResult {
        assignments,
        centroids,
        sizes,
        inertia,
        history,
        restart,
    }
}

/// Best of `restarts` k-means++ seeded Lloyd runs. Restart `r` draws from
/// stream `r` of `seed`; ties in inertia go to the lower restart.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<ClusterResult> {
    if points.is_empty() {
        return Err(Error::EmptyUserSet("k-means"));
    }
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!("k={k} must be in 1..={}", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("rows of unequal length"));
    }
    let runs: Vec<ClusterResult> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            lloyd(points, seed_plus_plus(points, k, &mut rng), r)
        })
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.inertia < best.inertia { r } else { best })
        .expect("at least one restart"))
}

/// Clusters the users' rows over `range`, which must span one week.
pub fn kmeans_availability(
    m: &AvailabilityMatrix,
    range: SlotRange,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterResult> {
    let week = m.slots_per_week()?;
    if range.len() != week || range.end > m.n_slots() {
        return Err(Error::invalid(format!(
            "cluster range {range} must be one week ({week} slots) inside the matrix"
        )));
    }
    let points: Vec<Vec<f64>> = (0..m.n_users())
        .map(|u| m.row(u)[range.start..range.end].iter().map(|&c| c as f64).collect())
        .collect();
    kmeans(&points, k, seed, restarts)
}

/// `cluster_id,size,c0,...` with one centroid curve per line.
pub fn write_clusters<W: Write>(mut w: W, r: &ClusterResult) -> std::io::Result<()> {
    let dim = r.centroids.first().map_or(0, Vec::len);
    let cols: Vec<String> = (0..dim).map(|i| format!("c{i}")).collect();
    writeln!(w, "cluster_id,size,{}", cols.join(","))?;
    for (c, z) in r.centroids.iter().enumerate() {
        let vals: Vec<String> = z.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(w, "{c},{},{}", r.sizes[c], vals.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_trace, UserProfile};

    #[test]
    fn two_identical_groups_separate_with_zero_inertia() {
        let a = vec![1.0, 1.0, 0.0, 0.0];
        let b = vec![0.0, 0.0, 1.0, 1.0];
        let points: Vec<Vec<f64>> = (0..10)
            .map(|i| if i % 2 == 0 { a.clone() } else { b.clone() })
            .collect();
        let r = kmeans(&points, 2, 3, 10).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.sizes.iter().sum::<usize>(), 10);
        for i in 0..10 {
            assert_eq!(r.assignments[i], r.assignments[i % 2]);
        }
        assert_ne!(r.assignments[0], r.assignments[1]);
    }

    #[test]
    fn single_cluster_is_column_means() {
        let m = generate_trace(&vec![UserProfile::flat(0.4); 12], 1, 8).unwrap();
        let r = kmeans_availability(&m, SlotRange::new(0, 168), 1, 0, 3).unwrap();
        for t in 0..168 {
            let mean = (0..12).filter(|&u| m.get(u, t)).count() as f64 / 12.0;
            assert!((r.centroids[0][t] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_history_is_non_increasing_and_centroids_are_member_means() {
        let profiles: Vec<UserProfile> = (0..40)
            .map(|i| UserProfile::flat(0.1 + 0.02 * i as f64).with_noise(0.1))
            .collect();
        let m = generate_trace(&profiles, 1, 4).unwrap();
        let r = kmeans_availability(&m, SlotRange::new(0, 168), 5, 21, 4).unwrap();
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", r.history);
        }
        for c in 0..5 {
            let members: Vec<usize> = (0..40).filter(|&u| r.assignments[u] == c).collect();
            for t in 0..168 {
                let mean = members.iter().filter(|&&u| m.get(u, t)).count() as f64 / members.len() as f64;
                assert!((r.centroids[c][t] - mean).abs() < 1e-12);
            }
        }
        assert_eq!(r, kmeans_availability(&m, SlotRange::new(0, 168), 5, 21, 4).unwrap());
    }

    #[test]
    fn four_archetypes_are_recovered() {
        let archetypes = [
            UserProfile::office_worker(),
            UserProfile::night_owl(),
            UserProfile::always_on().with_base_rate(0.97),
            UserProfile::always_off().with_noise(0.03),
        ];
        let profiles: Vec<UserProfile> = (0..80).map(|i| archetypes[i % 4].clone()).collect();
        let m = generate_trace(&profiles, 2, 5).unwrap();
        let r = kmeans_availability(&m, SlotRange::new(168, 336), 4, 9, 10).unwrap();
        let mut agree = 0;
        for c in 0..4 {
            let mut counts = [0usize; 4];
            for u in (0..80).filter(|&u| r.assignments[u] == c) {
                counts[u % 4] += 1;
            }
            agree += counts.iter().max().unwrap();
        }
        assert!(agree as f64 / 80.0 >= 0.95);
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = generate_trace(&[UserProfile::flat(0.5)], 1, 1).unwrap();
        assert!(kmeans_availability(&m, SlotRange::new(0, 168), 2, 0, 1).is_err());
        assert!(kmeans_availability(&m, SlotRange::new(0, 100), 1, 0, 1).is_err());
    }
}
