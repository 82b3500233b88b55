//! The five periodic availability features and design-matrix assembly.
//!
//! Every feature is a smoothed online fraction `(n_on + 1) / (n_on + n_off + 2)`
//! over a set of past observations chosen by scope (one user or all users)
//! and periodicity (any slot, same slot-of-day, same slot-of-week).

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::trace::{AvailabilityMatrix, SlotRange};

pub const N_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    GlobalDaily,
    GlobalWeekly,
    IndividualFlat,
    IndividualDaily,
    IndividualWeekly,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::GlobalDaily,
        Feature::GlobalWeekly,
        Feature::IndividualFlat,
        Feature::IndividualDaily,
        Feature::IndividualWeekly,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Feature::GlobalDaily => "Global daily",
            Feature::GlobalWeekly => "Global weekly",
            Feature::IndividualFlat => "Individual flat",
            Feature::IndividualDaily => "Individual daily",
            Feature::IndividualWeekly => "Individual weekly",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Feature::GlobalDaily => "global_daily",
            Feature::GlobalWeekly => "global_weekly",
            Feature::IndividualFlat => "individual_flat",
            Feature::IndividualDaily => "individual_daily",
            Feature::IndividualWeekly => "individual_weekly",
        }
    }

    pub fn column_name(self) -> String {
        format!("f{}", self.index() + 1)
    }

    pub fn periodicity(self) -> Periodicity {
        match self {
            Feature::IndividualFlat => Periodicity::Flat,
            Feature::GlobalDaily | Feature::IndividualDaily => Periodicity::Daily,
            Feature::GlobalWeekly | Feature::IndividualWeekly => Periodicity::Weekly,
        }
    }

    pub fn is_global(self) -> bool {
        matches!(self, Feature::GlobalDaily | Feature::GlobalWeekly)
    }

    pub fn parse(s: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.key() == s || f.column_name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Periodicity {
    Flat,
    Daily,
    Weekly,
}

/// Which observations a count is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope<'a> {
    All,
    User(&'a str),
}

/// Feature values in [`Feature::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        self.0[f.index()]
    }
}

/// Posterior mean of a Bernoulli rate under a flat Beta(1,1) prior.
pub fn feature_value(n_on: u64, n_off: u64) -> f64 {
    (n_on as f64 + 1.0) / ((n_on + n_off) as f64 + 2.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    on: u32,
    total: u32,
}

impl Tally {
    #[inline]
    fn add(&mut self, online: bool) {
        self.on += online as u32;
        self.total += 1;
    }

    fn split(self) -> (u64, u64) {
        (self.on as u64, (self.total - self.on) as u64)
    }
}

/// Per-user and global observation counters indexed by slot-of-day and
/// slot-of-week, built in one pass. Feature lookups are O(1) afterwards, and
/// new observations can be streamed in with [`ObservationCounts::observe`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationCounts {
    slots_per_day: usize,
    slots_per_week: usize,
    users: Vec<String>,
    user_flat: Vec<Tally>,
    user_daily: Vec<Tally>,
    user_weekly: Vec<Tally>,
    global_daily: Vec<Tally>,
    global_weekly: Vec<Tally>,
}

impl ObservationCounts {
    pub fn empty(users: Vec<String>, slots_per_day: usize) -> Self {
        let spw = slots_per_day * 7;
        let n = users.len();
        ObservationCounts {
            slots_per_day,
            slots_per_week: spw,
            users,
            user_flat: vec![Tally::default(); n],
            user_daily: vec![Tally::default(); n * slots_per_day],
            user_weekly: vec![Tally::default(); n * spw],
            global_daily: vec![Tally::default(); slots_per_day],
            global_weekly: vec![Tally::default(); spw],
        }
    }

    pub fn from_matrix(obs: &AvailabilityMatrix, obs_range: SlotRange) -> Result<Self> {
        if obs_range.is_empty() {
            return Err(Error::EmptyRange("observation range"));
        }
        if obs_range.end > obs.n_slots() {
            return Err(Error::invalid(format!(
                "observation range {obs_range} exceeds matrix of {} slots",
                obs.n_slots()
            )));
        }
        let mut counts = Self::empty(obs.users().to_vec(), obs.slots_per_day()?);
        let (spd, spw) = (counts.slots_per_day, counts.slots_per_week);
        for u in 0..obs.n_users() {
            let row = obs.row(u);
            let daily = &mut counts.user_daily[u * spd..(u + 1) * spd];
            let weekly = &mut counts.user_weekly[u * spw..(u + 1) * spw];
            let flat = &mut counts.user_flat[u];
            for t in obs_range.iter() {
                let on = row[t] == 1;
                flat.add(on);
                daily[t % spd].add(on);
                weekly[t % spw].add(on);
            }
        }
        for u in 0..obs.n_users() {
            for (g, x) in counts
                .global_daily
                .iter_mut()
                .zip(&counts.user_daily[u * spd..(u + 1) * spd])
            {
                g.on += x.on;
                g.total += x.total;
            }
            for (g, x) in counts
                .global_weekly
                .iter_mut()
                .zip(&counts.user_weekly[u * spw..(u + 1) * spw])
            {
                g.on += x.on;
                g.total += x.total;
            }
        }
        Ok(counts)
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn slots_per_day(&self) -> usize {
        self.slots_per_day
    }

    /// Registers a user with no observations yet; returns its index.
    pub fn add_user(&mut self, id: impl Into<String>) -> usize {
        self.users.push(id.into());
        self.user_flat.push(Tally::default());
        self.user_daily
            .extend(std::iter::repeat(Tally::default()).take(self.slots_per_day));
        self.user_weekly
            .extend(std::iter::repeat(Tally::default()).take(self.slots_per_week));
        self.users.len() - 1
    }

    /// Records one new observation of `user` at absolute `slot`.
    pub fn observe(&mut self, user: usize, slot: usize, online: bool) {
        let (spd, spw) = (self.slots_per_day, self.slots_per_week);
        self.user_flat[user].add(online);
        self.user_daily[user * spd + slot % spd].add(online);
        self.user_weekly[user * spw + slot % spw].add(online);
        self.global_daily[slot % spd].add(online);
        self.global_weekly[slot % spw].add(online);
    }

    fn user_position(&self, id: &str) -> Result<usize> {
        self.users
            .iter()
            .position(|u| u == id)
            .ok_or_else(|| Error::UnknownUser(id.to_string()))
    }

    /// `(n_on, n_off)` for `user` (or all users when `None`).
    pub fn counts(&self, user: Option<usize>, periodicity: Periodicity, target_slot: usize) -> (u64, u64) {
        let (spd, spw) = (self.slots_per_day, self.slots_per_week);
        let tally = match (user, periodicity) {
            (Some(u), Periodicity::Flat) => self.user_flat[u],
            (Some(u), Periodicity::Daily) => self.user_daily[u * spd + target_slot % spd],
            (Some(u), Periodicity::Weekly) => self.user_weekly[u * spw + target_slot % spw],
            (None, Periodicity::Flat) => {
                let mut t = Tally::default();
                for g in &self.global_daily {
                    t.on += g.on;
                    t.total += g.total;
                }
                t
            }
            (None, Periodicity::Daily) => self.global_daily[target_slot % spd],
            (None, Periodicity::Weekly) => self.global_weekly[target_slot % spw],
        };
        tally.split()
    }

    pub fn features(&self, user: usize, target_slot: usize) -> FeatureVector {
        let mut out = [0.0; N_FEATURES];
        for f in Feature::ALL {
            let scope = if f.is_global() { None } else { Some(user) };
            let (on, off) = self.counts(scope, f.periodicity(), target_slot);
            out[f.index()] = feature_value(on, off);
        }
        FeatureVector(out)
    }

    pub fn features_for(&self, user_id: &str, target_slot: usize) -> Result<FeatureVector> {
        Ok(self.features(self.user_position(user_id)?, target_slot))
    }
}

/// Counts observations in `obs_range` relevant to `target_slot`.
pub fn count_observations(
    obs: &AvailabilityMatrix,
    obs_range: SlotRange,
    scope: Scope<'_>,
    periodicity: Periodicity,
    target_slot: usize,
) -> Result<(u64, u64)> {
    let user = match scope {
        Scope::All => None,
        Scope::User(id) => Some(obs.require_user(id)?),
    };
    let counts = ObservationCounts::from_matrix(obs, obs_range)?;
    Ok(counts.counts(user, periodicity, target_slot))
}

pub fn extract_features(
    obs: &AvailabilityMatrix,
    obs_range: SlotRange,
    user: &str,
    target_slot: usize,
) -> Result<FeatureVector> {
    let u = obs.require_user(user)?;
    Ok(ObservationCounts::from_matrix(obs, obs_range)?.features(u, target_slot))
}

/// Per-column shift and scale learned on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    /// A column is constant when its spread is negligible relative to its level;
    /// such columns are left unscaled.
    pub fn is_constant(&self, col: usize) -> bool {
        let (m, s) = (self.means[col], self.sds[col]);
        !(s > 1e-12 * m.abs().max(1.0))
    }

    pub fn apply(&self, col: usize, x: f64) -> f64 {
        if self.is_constant(col) {
            x
        } else {
            (x - self.means[col]) / self.sds[col]
        }
    }

    pub fn select(&self, cols: &[usize]) -> Standardization {
        Standardization {
            means: cols.iter().map(|&c| self.means[c]).collect(),
            sds: cols.iter().map(|&c| self.sds[c]).collect(),
        }
    }

    fn fit(x: &[f64], dim: usize) -> Standardization {
        let n = (x.len() / dim) as f64;
        let mut means = vec![0.0; dim];
        for row in x.chunks_exact(dim) {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; dim];
        for row in x.chunks_exact(dim) {
            for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let sds = vars.into_iter().map(|v| (v / n).sqrt()).collect();
        Standardization { means, sds }
    }
}

/// How covariates are transformed while building a design matrix.
#[derive(Debug, Clone, Copy)]
pub enum Scaling<'a> {
    Raw,
    /// Learn standardization from the rows being built.
    Fit,
    /// Reuse training statistics (test time).
    Apply(&'a Standardization),
}

/// Covariates (without intercept), labels and row keys.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    features: Vec<Feature>,
    users: Vec<String>,
    x: Vec<f64>,
    labels: Vec<u8>,
    keys: Vec<(u32, u32)>,
    standardization: Option<Standardization>,
}

impl DesignMatrix {
    /// Builds a design matrix directly from covariate rows. Used for synthetic
    /// problems and tests; `users` and keys are left empty.
    pub fn from_rows(features: Vec<Feature>, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        let dim = features.len();
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                actual: labels.len(),
            });
        }
        let mut x = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            x.extend_from_slice(r);
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        Ok(DesignMatrix {
            features,
            users: Vec::new(),
            keys: vec![(0, 0); labels.len()],
            x,
            labels,
            standardization: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of covariates, excluding the intercept.
    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.x[i * d..(i + 1) * d]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    /// `(user index into users(), absolute slot)` of row `i`.
    pub fn key(&self, i: usize) -> (usize, usize) {
        let (u, t) = self.keys[i];
        (u as usize, t as usize)
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Keeps only the given features (in the given order).
    pub fn select(&self, features: &[Feature]) -> Result<DesignMatrix> {
        let cols: Vec<usize> = features
            .iter()
            .map(|f| {
                self.features
                    .iter()
                    .position(|g| g == f)
                    .ok_or_else(|| Error::invalid(format!("feature {} not in design", f.key())))
            })
            .collect::<Result<_>>()?;
        let d = self.dim();
        let mut x = Vec::with_capacity(self.n_rows() * cols.len());
        for row in self.x.chunks_exact(d) {
            x.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(DesignMatrix {
            features: features.to_vec(),
            users: self.users.clone(),
            x,
            labels: self.labels.clone(),
            keys: self.keys.clone(),
            standardization: self.standardization.as_ref().map(|s| s.select(&cols)),
        })
    }

    /// Rows `[start, end)` as a new matrix sharing users and statistics.
    pub fn slice_rows(&self, start: usize, end: usize) -> DesignMatrix {
        let d = self.dim();
        DesignMatrix {
            features: self.features.clone(),
            users: self.users.clone(),
            x: self.x[start * d..end * d].to_vec(),
            labels: self.labels[start..end].to_vec(),
            keys: self.keys[start..end].to_vec(),
            standardization: self.standardization.clone(),
        }
    }

    /// Reorders rows by `perm` (`new[i] = old[perm[i]]`).
    pub fn permute_rows(&self, perm: &[usize]) -> DesignMatrix {
        let d = self.dim();
        let mut out = self.clone();
        for (i, &p) in perm.iter().enumerate() {
            out.x[i * d..(i + 1) * d].copy_from_slice(self.row(p));
            out.labels[i] = self.labels[p];
            out.keys[i] = self.keys[p];
        }
        out
    }

    /// Writes `user_id,slot,f1..f5,label` with 6-decimal covariates.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let cols: Vec<String> = self.features.iter().map(|f| f.column_name()).collect();
        writeln!(w, "user_id,slot,{},label", cols.join(","))?;
        for i in 0..self.n_rows() {
            let (u, t) = self.key(i);
            let user = self.users.get(u).map_or("", String::as_str);
            write!(w, "{user},{t}")?;
            for v in self.row(i) {
                write!(w, ",{v:.6}")?;
            }
            writeln!(w, ",{}", self.labels[i])?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn build_design_matrix<S: AsRef<str> + Sync>(
    obs: &AvailabilityMatrix,
    obs_range: SlotRange,
    label_range: SlotRange,
    users: &[S],
    standardize: bool,
) -> Result<DesignMatrix> {
    let scaling = if standardize { Scaling::Fit } else { Scaling::Raw };
    build_design_matrix_scaled(obs, obs_range, label_range, users, scaling)
}

/// One row per `(user, slot in label_range)`, user-major. Features come from
/// `obs_range` only; labels from `label_range`.
pub fn build_design_matrix_scaled<S: AsRef<str> + Sync>(
    obs: &AvailabilityMatrix,
    obs_range: SlotRange,
    label_range: SlotRange,
    users: &[S],
    scaling: Scaling<'_>,
) -> Result<DesignMatrix> {
    if users.is_empty() {
        return Err(Error::EmptyUserSet("design matrix"));
    }
    if label_range.is_empty() {
        return Err(Error::EmptyRange("label range"));
    }
    if obs_range.overlaps(&label_range) || obs_range.start > label_range.start {
        return Err(Error::invalid(format!(
            "observation range {obs_range} must precede label range {label_range}"
        )));
    }
    if label_range.end > obs.n_slots() {
        return Err(Error::invalid(format!("label range {label_range} exceeds matrix")));
    }
    if let Scaling::Apply(s) = scaling {
        if s.means.len() != N_FEATURES {
            return Err(Error::DimensionMismatch {
                expected: N_FEATURES,
                actual: s.means.len(),
            });
        }
    }
    let counts = ObservationCounts::from_matrix(obs, obs_range)?;
    let idx: Vec<usize> = users
        .iter()
        .map(|u| obs.require_user(u.as_ref()))
        .collect::<Result<_>>()?;

    let per_user: Vec<(Vec<f64>, Vec<u8>)> = idx
        .par_iter()
        .map(|&u| {
            let mut x = Vec::with_capacity(label_range.len() * N_FEATURES);
            let mut y = Vec::with_capacity(label_range.len());
            for t in label_range.iter() {
                x.extend_from_slice(&counts.features(u, t).0);
                y.push(obs.get(u, t) as u8);
            }
            (x, y)
        })
        .collect();

    let n = idx.len() * label_range.len();
    let mut x = Vec::with_capacity(n * N_FEATURES);
    let mut labels = Vec::with_capacity(n);
    let mut keys = Vec::with_capacity(n);
    for (k, (xu, yu)) in per_user.into_iter().enumerate() {
        x.extend(xu);
        labels.extend(yu);
        keys.extend(label_range.iter().map(|t| (k as u32, t as u32)));
    }

    let standardization = match scaling {
        Scaling::Raw => None,
        Scaling::Fit => Some(Standardization::fit(&x, N_FEATURES)),
        Scaling::Apply(s) => Some(s.clone()),
    };
    if let Some(s) = &standardization {
        for row in x.chunks_exact_mut(N_FEATURES) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = s.apply(c, *v);
            }
        }
    }

    Ok(DesignMatrix {
        features: Feature::ALL.to_vec(),
        users: users.iter().map(|u| u.as_ref().to_string()).collect(),
        x,
        labels,
        keys,
        standardization,
    })
}
