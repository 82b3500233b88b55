//! AUC, geometric-mean likelihood (GM), ROC curves and windowed metric series.

use std::io::Write;

use crate::error::{Error, Result};

/// Probabilities are clamped to `[GM_EPS, 1 - GM_EPS]` before taking logs in
/// [`gm`], so a saturated wrong prediction costs a large but finite penalty.
pub const GM_EPS: f64 = 1e-12;

/// Binary labels paired with predicted probabilities, optionally tagged with slots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredLabels {
    pub labels: Vec<bool>,
    pub probs: Vec<f64>,
    pub slots: Option<Vec<usize>>,
}

impl ScoredLabels {
    pub fn new(labels: Vec<bool>, probs: Vec<f64>) -> Result<Self> {
        Self::build(labels, probs, None)
    }

    pub fn with_slots(labels: Vec<bool>, probs: Vec<f64>, slots: Vec<usize>) -> Result<Self> {
        Self::build(labels, probs, Some(slots))
    }

    fn build(labels: Vec<bool>, probs: Vec<f64>, slots: Option<Vec<usize>>) -> Result<Self> {
        if labels.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                actual: probs.len(),
            });
        }
        if let Some(s) = &slots {
            if s.len() != labels.len() {
                return Err(Error::DimensionMismatch {
                    expected: labels.len(),
                    actual: s.len(),
                });
            }
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("probability {p} outside [0,1]")));
        }
        Ok(ScoredLabels { labels, probs, slots })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn class_counts(&self) -> (u64, u64) {
        let pos = self.labels.iter().filter(|&&l| l).count() as u64;
        (pos, self.labels.len() as u64 - pos)
    }

    /// Fraction of positives predicted online (p > 0.5) and of negatives
    /// predicted offline (p <= 0.5). `None` for an absent class.
    pub fn class_accuracy(&self) -> (Option<f64>, Option<f64>) {
        let (mut tp, mut tn) = (0usize, 0usize);
        for (&l, &p) in self.labels.iter().zip(&self.probs) {
            match (l, p > 0.5) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                _ => {}
            }
        }
        let (pos, neg) = self.class_counts();
        let frac = |k: usize, n: u64| (n > 0).then(|| k as f64 / n as f64);
        (frac(tp, pos), frac(tn, neg))
    }
}

/// Indices sorted by descending score; ties keep index order.
fn descending_order(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx
}

/// Groups of tied scores in descending order, as `(positives, negatives)`.
fn tie_groups(s: &ScoredLabels) -> Vec<(u64, u64)> {
    let order = descending_order(&s.probs);
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut last: Option<f64> = None;
    for i in order {
        let p = s.probs[i];
        if last != Some(p) {
            groups.push((0, 0));
            last = Some(p);
        }
        let g = groups.last_mut().expect("pushed above");
        if s.labels[i] {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Probability that a random positive outranks a random negative, ties
/// counted one half (Mann-Whitney U / (n_pos n_neg)).
pub fn auc(s: &ScoredLabels) -> Result<f64> {
    let (pos, neg) = s.class_counts();
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("AUC needs both positive and negative labels"));
    }
    // Doubled U keeps the tie contribution integral.
    let mut u2: u128 = 0;
    let mut neg_below = neg as u128;
    for (gp, gn) in tie_groups(s) {
        let (gp, gn) = (gp as u128, gn as u128);
        neg_below -= gn;
        u2 += 2 * gp * neg_below + gp * gn;
    }
    Ok(u2 as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// Geometric mean of the per-observation likelihood `p` (label 1) or `1 - p`
/// (label 0), with probabilities clamped to `[GM_EPS, 1 - GM_EPS]`.
pub fn gm(s: &ScoredLabels) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Undefined("GM of an empty set"));
    }
    let total: f64 = s.labels.iter().zip(&s.probs).map(|(&l, &p)| log_likelihood(l, p)).sum();
    Ok((total / s.len() as f64).exp())
}

#[inline]
fn log_likelihood(label: bool, p: f64) -> f64 {
    let p = p.clamp(GM_EPS, 1.0 - GM_EPS);
    if label {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

/// ROC points `(fpr, tpr)` from a threshold sweep over distinct scores,
/// starting at `(0,0)` and ending at `(1,1)`.
pub fn roc_points(s: &ScoredLabels) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = s.class_counts();
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("ROC needs both positive and negative labels"));
    }
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    for (gp, gn) in tie_groups(s) {
        tp += gp;
        fp += gn;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Auc,
    Gm,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::Gm => "gm",
        }
    }
}

/// Metric over trailing windows of `window_slots` slots, stride one slot.
///
/// The point at slot `e` covers slots `(e - window_slots, e]`. Windows run
/// from the first full window up to the last slot present. AUC points are
/// omitted where a window holds a single class.
pub fn metric_over_time(s: &ScoredLabels, window_slots: usize, metric: Metric) -> Result<Vec<(usize, f64)>> {
    let slots = s
        .slots
        .as_ref()
        .ok_or_else(|| Error::invalid("metric_over_time needs slot indices"))?;
    if window_slots == 0 {
        return Err(Error::invalid("window must be at least one slot"));
    }
    let (Some(&lo), Some(&hi)) = (slots.iter().min(), slots.iter().max()) else {
        return Ok(Vec::new());
    };
    // Bucket pair indices by slot.
    let span = hi - lo + 1;
    let mut by_slot: Vec<Vec<usize>> = vec![Vec::new(); span];
    for (i, &t) in slots.iter().enumerate() {
        by_slot[t - lo].push(i);
    }
    let first_end = lo + window_slots - 1;
    if first_end > hi {
        return Ok(Vec::new());
    }
    match metric {
        Metric::Gm => {
            let per_slot: Vec<(f64, usize)> = by_slot
                .iter()
                .map(|ix| {
                    let sum = ix.iter().map(|&i| log_likelihood(s.labels[i], s.probs[i])).sum();
                    (sum, ix.len())
                })
                .collect();
            Ok((first_end..=hi)
                .filter_map(|e| {
                    let w = &per_slot[e + 1 - window_slots - lo..=e - lo];
                    let (sum, n) = w.iter().fold((0.0, 0), |(a, k), (s, m)| (a + s, k + m));
                    (n > 0).then(|| (e, (sum / n as f64).exp()))
                })
                .collect())
        }
        Metric::Auc => {
            let mut sweep = RankSweep::new(&s.probs);
            let mut out = Vec::new();
            for e in lo..=hi {
                for &i in &by_slot[e - lo] {
                    sweep.insert(s.labels[i], i);
                }
                if e >= lo + window_slots {
                    for &i in &by_slot[e - window_slots - lo] {
                        sweep.remove(s.labels[i], i);
                    }
                }
                if e >= first_end {
                    if let Some(v) = sweep.auc() {
                        out.push((e, v));
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Fenwick tree over counts indexed by dense score rank.
struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, rank: usize, delta: i64) {
        let mut i = rank + 1;
        while i < self.0.len() {
            self.0[i] = (self.0[i] as i64 + delta) as u64;
            i += i & i.wrapping_neg();
        }
    }

    /// Count with rank < `rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Incrementally maintained Mann-Whitney statistic for a sliding window.
struct RankSweep {
    rank: Vec<usize>,
    pos: Fenwick,
    neg: Fenwick,
    n_pos: u64,
    n_neg: u64,
    u2: u128,
}

impl RankSweep {
    fn new(probs: &[f64]) -> Self {
        let mut distinct: Vec<f64> = probs.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let rank = probs
            .iter()
            .map(|p| distinct.partition_point(|d| d.total_cmp(p).is_lt()))
            .collect();
        let n = distinct.len() + 1;
        RankSweep {
            rank,
            pos: Fenwick(vec![0; n]),
            neg: Fenwick(vec![0; n]),
            n_pos: 0,
            n_neg: 0,
            u2: 0,
        }
    }

    // Doubled U contribution of element `i` against the other class.
    fn contribution(&self, label: bool, i: usize) -> u128 {
        let r = self.rank[i];
        if label {
            let below = self.neg.below(r);
            let tied = self.neg.below(r + 1) - below;
            2 * below as u128 + tied as u128
        } else {
            let upto = self.pos.below(r + 1);
            let tied = upto - self.pos.below(r);
            2 * (self.n_pos - upto) as u128 + tied as u128
        }
    }

    fn insert(&mut self, label: bool, i: usize) {
        self.u2 += self.contribution(label, i);
        if label {
            self.pos.add(self.rank[i], 1);
            self.n_pos += 1;
        } else {
            self.neg.add(self.rank[i], 1);
            self.n_neg += 1;
        }
    }

    fn remove(&mut self, label: bool, i: usize) {
        if label {
            self.pos.add(self.rank[i], -1);
            self.n_pos -= 1;
        } else {
            self.neg.add(self.rank[i], -1);
            self.n_neg -= 1;
        }
        self.u2 -= self.contribution(label, i);
    }

    fn auc(&self) -> Option<f64> {
        (self.n_pos > 0 && self.n_neg > 0)
            .then(|| self.u2 as f64 / (2 * self.n_pos as u128 * self.n_neg as u128) as f64)
    }
}

/// `metric,scope,value` rows.
pub fn write_metric_report<W: Write>(mut w: W, rows: &[(String, String, f64)]) -> std::io::Result<()> {
    writeln!(w, "metric,scope,value")?;
    for (m, scope, v) in rows {
        writeln!(w, "{m},{scope},{v}")?;
    }
    Ok(())
}

pub fn write_two_columns<W: Write, A: std::fmt::Display, B: std::fmt::Display>(
    mut w: W,
    header: (&str, &str),
    rows: impl IntoIterator<Item = (A, B)>,
) -> std::io::Result<()> {
    writeln!(w, "{},{}", header.0, header.1)?;
    for (a, b) in rows {
        writeln!(w, "{a},{b}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sl(labels: &[u8], probs: &[f64]) -> ScoredLabels {
        ScoredLabels::new(labels.iter().map(|&l| l == 1).collect(), probs.to_vec()).unwrap()
    }

    #[test]
    fn auc_small_cases() {
        let s = sl(&[1, 0, 1, 0], &[0.9, 0.8, 0.7, 0.1]);
        assert_eq!(auc(&s).unwrap(), 0.75);
        assert_eq!(auc(&sl(&[1, 1, 0], &[0.9, 0.8, 0.2])).unwrap(), 1.0);
        assert_eq!(auc(&sl(&[1, 0, 1, 0], &[0.4; 4])).unwrap(), 0.5);
        assert!(auc(&sl(&[1, 1], &[0.3, 0.4])).is_err());
    }

    #[test]
    fn gm_small_cases() {
        assert_eq!(gm(&sl(&[1, 1], &[1.0, 1.0])).unwrap(), 1.0 - GM_EPS);
        assert!((gm(&sl(&[1, 0], &[0.8, 0.4])).unwrap() - 0.48f64.sqrt()).abs() < 1e-15);
        assert!(gm(&sl(&[0], &[1.0])).unwrap() > 0.0);
    }

    #[test]
    fn roc_small_cases() {
        let s = sl(&[1, 0, 1, 0], &[0.9, 0.8, 0.7, 0.1]);
        let pts = roc_points(&s).unwrap();
        assert_eq!(pts.first(), Some(&(0.0, 0.0)));
        assert_eq!(pts.last(), Some(&(1.0, 1.0)));
        assert_eq!(trapezoid_area(&pts), 0.75);

        let sep = roc_points(&sl(&[1, 1, 0, 0], &[0.9, 0.8, 0.3, 0.1])).unwrap();
        assert!(sep.contains(&(0.0, 1.0)));

        let flat = roc_points(&sl(&[1, 0, 0], &[0.5; 3])).unwrap();
        assert_eq!(flat, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(trapezoid_area(&flat), 0.5);
    }

    #[test]
    fn auc_invariant_under_monotone_transform_and_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels: Vec<bool> = (0..300).map(|_| rng.gen_bool(0.4)).collect();
        let probs: Vec<f64> = (0..300).map(|_| (rng.gen_range(0..20) as f64) / 20.0).collect();
        let s = ScoredLabels::new(labels.clone(), probs.clone()).unwrap();
        let t = ScoredLabels::new(labels.clone(), probs.iter().map(|p| p * p * 0.5).collect()).unwrap();
        assert_eq!(auc(&s).unwrap(), auc(&t).unwrap());
        let mut idx: Vec<usize> = (0..300).collect();
        idx.reverse();
        let r = ScoredLabels::new(
            idx.iter().map(|&i| labels[i]).collect(),
            idx.iter().map(|&i| probs[i]).collect(),
        )
        .unwrap();
        assert_eq!(auc(&s).unwrap(), auc(&r).unwrap());
        assert!((gm(&s).unwrap() - gm(&r).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn gm_increases_when_a_prediction_moves_toward_its_label() {
        let s = sl(&[1, 0, 1], &[0.6, 0.3, 0.2]);
        let better = sl(&[1, 0, 1], &[0.6, 0.25, 0.2]);
        assert!(gm(&better).unwrap() > gm(&s).unwrap());
    }

    #[test]
    fn class_accuracy_at_half() {
        let s = sl(&[1, 1, 0, 0], &[0.9, 0.5, 0.2, 0.7]);
        assert_eq!(s.class_accuracy(), (Some(0.5), Some(0.5)));
    }

    #[test]
    fn windowed_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 2000;
        let slots: Vec<usize> = (0..n).map(|i| 100 + i % 50).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let probs: Vec<f64> = labels
            .iter()
            .map(|&l| {
                if l {
                    rng.gen_range(0.3..1.0)
                } else {
                    rng.gen_range(0.0..0.7)
                }
            })
            .collect();
        let s = ScoredLabels::with_slots(labels.clone(), probs.clone(), slots).unwrap();

        let full = metric_over_time(&s, 50, Metric::Auc).unwrap();
        assert_eq!(full, vec![(149, auc(&s).unwrap())]);
        let full_gm = metric_over_time(&s, 50, Metric::Gm).unwrap();
        assert_eq!(full_gm.len(), 1);
        assert!((full_gm[0].1 - gm(&s).unwrap()).abs() < 1e-12);

        let series = metric_over_time(&s, 10, Metric::Auc).unwrap();
        assert_eq!(series.len(), 41);
        assert_eq!(series[0].0, 109);

        let perfect = ScoredLabels::with_slots(
            labels.clone(),
            labels.iter().map(|&l| l as u8 as f64).collect(),
            (0..n).map(|i| i % 50).collect(),
        )
        .unwrap();
        for (_, v) in metric_over_time(&perfect, 5, Metric::Gm).unwrap() {
            assert!((v - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn sliding_auc_equals_per_window_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 1500;
        let slots: Vec<usize> = (0..n).map(|_| rng.gen_range(0..60)).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0..25) as f64 / 25.0).collect();
        let s = ScoredLabels::with_slots(labels.clone(), probs.clone(), slots.clone()).unwrap();
        let lo = *slots.iter().min().unwrap();
        for (e, v) in metric_over_time(&s, 7, Metric::Auc).unwrap() {
            let ix: Vec<usize> = (0..n).filter(|&i| slots[i] + 7 > e && slots[i] <= e).collect();
            assert!(e + 1 >= lo + 7);
            let w = ScoredLabels::new(
                ix.iter().map(|&i| labels[i]).collect(),
                ix.iter().map(|&i| probs[i]).collect(),
            )
            .unwrap();
            assert_eq!(v, auc(&w).unwrap(), "window ending {e}");
        }
    }

    #[test]
    fn auc_windows_with_one_class_are_skipped() {
        let s = ScoredLabels::with_slots(
            vec![true, true, false, true],
            vec![0.9, 0.8, 0.1, 0.7],
            vec![0, 1, 2, 3],
        )
        .unwrap();
        let pts = metric_over_time(&s, 1, Metric::Auc).unwrap();
        assert!(pts.is_empty());
        assert_eq!(metric_over_time(&s, 1, Metric::Gm).unwrap().len(), 4);
        assert_eq!(metric_over_time(&s, 2, Metric::Auc).unwrap().len(), 2);
    }

    #[test]
    fn rejects_out_of_range_probabilities() {
        assert!(ScoredLabels::new(vec![true], vec![1.5]).is_err());
        assert!(ScoredLabels::new(vec![true], vec![]).is_err());
    }
}
