//! Per-user, per-slot online probabilities for a future period.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::ScoredLabels;
use crate::trace::{AvailabilityMatrix, SlotRange};

/// Probabilities `P[u, t]` for users × `range`, indexed by absolute slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    users: Vec<String>,
    range: SlotRange,
    probs: Vec<f64>,
    index: HashMap<String, usize>,
}

impl PredictionMatrix {
    pub fn new(users: Vec<String>, range: SlotRange, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != users.len() * range.len() {
            return Err(Error::DimensionMismatch {
                expected: users.len() * range.len(),
                actual: probs.len(),
            });
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("probability {p} not in [0,1]")));
        }
        let mut index = HashMap::with_capacity(users.len());
        for (i, u) in users.iter().enumerate() {
            if index.insert(u.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate user `{u}`")));
            }
        }
        Ok(PredictionMatrix {
            users,
            range,
            probs,
            index,
        })
    }

    pub fn from_fn(users: Vec<String>, range: SlotRange, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut probs = Vec::with_capacity(users.len() * range.len());
        for u in 0..users.len() {
            probs.extend(range.iter().map(|t| f(u, t)));
        }
        Self::new(users, range, probs)
    }

    pub fn constant(users: Vec<String>, range: SlotRange, p: f64) -> Result<Self> {
        Self::from_fn(users, range, |_, _| p)
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn range(&self) -> SlotRange {
        self.range
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// `P[u, t]` for absolute slot `t`; panics outside the range.
    pub fn get(&self, user: usize, slot: usize) -> f64 {
        assert!(self.range.contains(slot), "slot {slot} outside {}", self.range);
        self.probs[user * self.range.len() + slot - self.range.start]
    }

    pub fn row(&self, user: usize) -> &[f64] {
        let w = self.range.len();
        &self.probs[user * w..(user + 1) * w]
    }

    pub fn select_users<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let mut probs = Vec::with_capacity(ids.len() * self.range.len());
        for id in ids {
            let u = self
                .user_index(id.as_ref())
                .ok_or_else(|| Error::UnknownUser(id.as_ref().to_string()))?;
            probs.extend_from_slice(self.row(u));
        }
        Self::new(ids.iter().map(|s| s.as_ref().to_string()).collect(), self.range, probs)
    }

    /// Restricts to a sub-range of slots.
    pub fn slice(&self, range: SlotRange) -> Result<Self> {
        if !self.range.contains_range(&range) {
            return Err(Error::invalid(format!("range {range} not within {}", self.range)));
        }
        Self::from_fn(self.users.clone(), range, |u, t| self.get(u, t))
    }

    /// Pairs every prediction in `range` with the observed cell of `actual`,
    /// user-major. Every predicted user must exist in `actual`.
    pub fn score_against(&self, actual: &AvailabilityMatrix, range: SlotRange) -> Result<ScoredLabels> {
        if !self.range.contains_range(&range) || range.end > actual.n_slots() {
            return Err(Error::invalid(format!(
                "range {range} not covered by predictions {} and labels",
                self.range
            )));
        }
        let n = self.users.len() * range.len();
        let (mut labels, mut probs, mut slots) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for (u, id) in self.users.iter().enumerate() {
            let a = actual.require_user(id)?;
            for t in range.iter() {
                labels.push(actual.get(a, t));
                probs.push(self.get(u, t));
                slots.push(t);
            }
        }
        ScoredLabels::with_slots(labels, probs, slots)
    }

    /// Format: `#start_slot=<int> slots=<int>`, then `user_id,p_0,...,p_{slots-1}`.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#start_slot={} slots={}", self.range.start, self.range.len())?;
        for (u, id) in self.users.iter().enumerate() {
            write!(w, "{id}")?;
            for p in self.row(u) {
                write!(w, ",{p}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(source_name, 1, "missing header"))?
            .map_err(|e| Error::io(source_name, e))?;
        let mut start = None;
        let mut len = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            let bad = || Error::parse(source_name, 1, format!("bad header field `{field}`"));
            match field.split_once('=').ok_or_else(bad)? {
                ("start_slot", v) => start = Some(v.parse::<usize>().map_err(|_| bad())?),
                ("slots", v) => len = Some(v.parse::<usize>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let (Some(start), Some(len)) = (start, len) else {
            return Err(Error::parse(source_name, 1, "header needs start_slot and slots"));
        };
        let range = SlotRange::new(start, start + len);
        let mut users = Vec::new();
        let mut probs = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| Error::io(source_name, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let id = fields.next().unwrap_or_default();
            if id.is_empty() {
                return Err(Error::parse(source_name, lineno, "empty user id"));
            }
            let before = probs.len();
            for f in fields {
                let p: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(source_name, lineno, format!("bad probability `{f}`")))?;
                probs.push(p);
            }
            if probs.len() - before != len {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("expected {len} probabilities, got {}", probs.len() - before),
                ));
            }
            users.push(id.to_string());
        }
        Self::new(users, range, probs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file), &path.display().to_string())
    }
}
