//! Connectivity traces and the hourly availability matrix built from them.
//!
//! A user is online in slot `t` when any of its sessions overlaps the
//! half-open interval `[origin + t*slot, origin + (t+1)*slot)`. This
//! any-overlap rule is deterministic and does not depend on a sampling
//! phase; every downstream number (features, labels, simulated
//! availability) inherits it.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: u64 = 86_400;
pub const DAYS_PER_WEEK: usize = 7;
/// Length of one of the four consecutive evaluation periods, in weeks.
pub const PERIOD_WEEKS: usize = 6;

/// Half-open range of slot indices `[start, end)`, absolute from the matrix origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotRange {
    pub start: usize,
    pub end: usize,
}

impl SlotRange {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "slot range start {start} > end {end}");
        SlotRange { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, slot: usize) -> bool {
        slot >= self.start && slot < self.end
    }

    pub fn contains_range(&self, other: &SlotRange) -> bool {
        other.start >= self.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &SlotRange) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn iter(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl fmt::Display for SlotRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// One connection session of a user, in unix seconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionEvent {
    pub user_id: String,
    pub login_ts: i64,
    pub logout_ts: i64,
}

impl SessionEvent {
    pub fn new(user_id: impl Into<String>, login_ts: i64, logout_ts: i64) -> Self {
        SessionEvent {
            user_id: user_id.into(),
            login_ts,
            logout_ts,
        }
    }

    fn validate(&self, row: usize) -> Result<()> {
        if self.user_id.is_empty() {
            return Err(Error::InvalidEvent {
                row,
                reason: "empty user_id".into(),
            });
        }
        if self.logout_ts <= self.login_ts {
            return Err(Error::InvalidEvent {
                row,
                reason: format!("logout_ts {} is not after login_ts {}", self.logout_ts, self.login_ts),
            });
        }
        Ok(())
    }
}

/// Boolean user x slot occupancy grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvailabilityMatrix {
    origin_ts: i64,
    slot_seconds: u64,
    users: Vec<String>,
    slots: usize,
    cells: Vec<u8>,
    index: HashMap<String, usize>,
}

impl AvailabilityMatrix {
    /// Builds a matrix from row-major 0/1 cells.
    pub fn new(origin_ts: i64, slot_seconds: u64, users: Vec<String>, slots: usize, cells: Vec<u8>) -> Result<Self> {
        if slot_seconds == 0 {
            return Err(Error::invalid("slot_seconds must be positive"));
        }
        if slots == 0 {
            return Err(Error::invalid("matrix needs at least one slot"));
        }
        if cells.len() != users.len() * slots {
            return Err(Error::DimensionMismatch {
                expected: users.len() * slots,
                actual: cells.len(),
            });
        }
        if let Some(c) = cells.iter().find(|&&c| c > 1) {
            return Err(Error::invalid(format!("cell value {c} is not 0 or 1")));
        }
        let mut index = HashMap::with_capacity(users.len());
        for (i, u) in users.iter().enumerate() {
            if u.is_empty() {
                return Err(Error::invalid("empty user id"));
            }
            if index.insert(u.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate user id `{u}`")));
            }
        }
        Ok(AvailabilityMatrix {
            origin_ts,
            slot_seconds,
            users,
            slots,
            cells,
            index,
        })
    }

    pub fn from_rows(origin_ts: i64, slot_seconds: u64, users: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        let slots = rows.first().map_or(0, Vec::len);
        if rows.len() != users.len() {
            return Err(Error::DimensionMismatch {
                expected: users.len(),
                actual: rows.len(),
            });
        }
        let mut cells = Vec::with_capacity(slots * rows.len());
        for row in &rows {
            if row.len() != slots {
                return Err(Error::invalid("grid is not rectangular"));
            }
            cells.extend_from_slice(row);
        }
        if users.is_empty() {
            return Err(Error::invalid("from_rows needs at least one row; use new() for empty"));
        }
        Self::new(origin_ts, slot_seconds, users, slots, cells)
    }

    pub fn origin_ts(&self) -> i64 {
        self.origin_ts
    }

    pub fn slot_seconds(&self) -> u64 {
        self.slot_seconds
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_slots(&self) -> usize {
        self.slots
    }

    pub fn full_range(&self) -> SlotRange {
        SlotRange::new(0, self.slots)
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.index.get(user_id).copied()
    }

    pub fn require_user(&self, user_id: &str) -> Result<usize> {
        self.user_index(user_id)
            .ok_or_else(|| Error::UnknownUser(user_id.to_string()))
    }

    #[inline]
    pub fn get(&self, user: usize, slot: usize) -> bool {
        self.cells[user * self.slots + slot] == 1
    }

    pub fn row(&self, user: usize) -> &[u8] {
        &self.cells[user * self.slots..(user + 1) * self.slots]
    }

    /// Slots per day; errors when the slot length does not divide a day.
    pub fn slots_per_day(&self) -> Result<usize> {
        slots_per_day(self.slot_seconds)
    }

    pub fn slots_per_week(&self) -> Result<usize> {
        Ok(self.slots_per_day()? * DAYS_PER_WEEK)
    }

    pub fn online_count(&self, user: usize, range: SlotRange) -> usize {
        self.row(user)[range.start..range.end].iter().map(|&c| c as usize).sum()
    }

    /// Restricts the matrix to `ids`, keeping their order as given.
    pub fn select_users<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let mut users = Vec::with_capacity(ids.len());
        let mut cells = Vec::with_capacity(ids.len() * self.slots);
        for id in ids {
            let u = self.require_user(id.as_ref())?;
            users.push(self.users[u].clone());
            cells.extend_from_slice(self.row(u));
        }
        Self::new(self.origin_ts, self.slot_seconds, users, self.slots, cells)
    }

    /// Removes users whose row is entirely zero.
    pub fn drop_inactive_users(&self) -> Self {
        let keep: Vec<&str> = (0..self.n_users())
            .filter(|&u| self.row(u).iter().any(|&c| c == 1))
            .map(|u| self.users[u].as_str())
            .collect();
        self.select_users(&keep).expect("subset of existing users")
    }

    /// Returns a copy with every cell in `range` cleared.
    pub fn with_range_cleared(&self, range: SlotRange) -> Self {
        let mut out = self.clone();
        for u in 0..out.n_users() {
            let base = u * out.slots;
            out.cells[base + range.start..base + range.end.min(out.slots)].fill(0);
        }
        out
    }

    /// Writes the text matrix format: a `#origin_ts=.. slot_seconds=.. slots=..`
    /// header line followed by `<user_id>,<0/1 string>` per user.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "#origin_ts={} slot_seconds={} slots={}",
            self.origin_ts, self.slot_seconds, self.slots
        )?;
        let mut line = Vec::with_capacity(self.slots + 64);
        for (u, id) in self.users.iter().enumerate() {
            line.clear();
            line.extend_from_slice(id.as_bytes());
            line.push(b',');
            line.extend(self.row(u).iter().map(|&c| b'0' + c));
            line.push(b'\n');
            w.write_all(&line)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line.map_err(|e| Error::io(source_name, e))?,
            None => return Err(Error::parse(source_name, 1, "missing header line")),
        };
        let (origin_ts, slot_seconds, slots) = parse_matrix_header(&header)
            .ok_or_else(|| Error::parse(source_name, 1, format!("bad header `{header}`")))?;
        let mut users = Vec::new();
        let mut cells = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(source_name, e))?;
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            let (id, bits) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::parse(source_name, lineno, "expected `<user_id>,<bits>`"))?;
            if bits.len() != slots {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("expected {slots} cells, found {}", bits.len()),
                ));
            }
            for b in bits.bytes() {
                match b {
                    b'0' | b'1' => cells.push(b - b'0'),
                    _ => return Err(Error::parse(source_name, lineno, "cells must be 0 or 1")),
                }
            }
            users.push(id.to_string());
        }
        Self::new(origin_ts, slot_seconds, users, slots, cells)
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

fn parse_matrix_header(line: &str) -> Option<(i64, u64, usize)> {
    let body = line.strip_prefix('#')?;
    let mut origin = None;
    let mut slot_seconds = None;
    let mut slots = None;
    for kv in body.split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "origin_ts" => origin = v.parse().ok(),
            "slot_seconds" => slot_seconds = v.parse().ok(),
            "slots" => slots = v.parse().ok(),
            _ => return None,
        }
    }
    Some((origin?, slot_seconds?, slots?))
}

pub fn slots_per_day(slot_seconds: u64) -> Result<usize> {
    if slot_seconds == 0 || SECONDS_PER_DAY % slot_seconds != 0 {
        return Err(Error::invalid(format!(
            "slot length {slot_seconds}s does not divide a day"
        )));
    }
    Ok((SECONDS_PER_DAY / slot_seconds) as usize)
}

/// Builds the availability matrix for `horizon_slots` slots starting at
/// `origin_ts`. Users are sorted lexicographically; a user whose sessions
/// all fall outside the horizon keeps an all-zero row.
pub fn ingest_events(
    events: &[SessionEvent],
    origin_ts: i64,
    slot_seconds: u64,
    horizon_slots: usize,
) -> Result<AvailabilityMatrix> {
    if slot_seconds == 0 {
        return Err(Error::invalid("slot_seconds must be positive"));
    }
    if horizon_slots == 0 {
        return Err(Error::invalid("horizon_slots must be at least 1"));
    }
    for (i, ev) in events.iter().enumerate() {
        ev.validate(i + 1)?;
    }

    let mut users: Vec<String> = events.iter().map(|e| e.user_id.clone()).collect();
    users.sort_unstable();
    users.dedup();
    let index: HashMap<&str, usize> = users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();

    let step = slot_seconds as i64;
    let horizon = horizon_slots as i64;
    let mut cells = vec![0u8; users.len() * horizon_slots];
    for ev in events {
        let u = index[ev.user_id.as_str()];
        // Slot t overlaps [login, logout) iff login < end(t) and logout > start(t).
        let first = (ev.login_ts - origin_ts).div_euclid(step).max(0);
        let last = (ev.logout_ts - origin_ts - 1).div_euclid(step).min(horizon - 1);
        if first > last {
            continue;
        }
        let row = &mut cells[u * horizon_slots..(u + 1) * horizon_slots];
        row[first as usize..=last as usize].fill(1);
    }
    AvailabilityMatrix::new(origin_ts, slot_seconds, users, horizon_slots, cells)
}

/// Parses the event CSV (`user_id,login_ts,logout_ts` header, unix seconds).
/// Row numbers in errors are file line numbers.
pub fn read_events_csv<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<SessionEvent>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let lineno = i + 1;
        if i == 0 {
            if line.trim() != "user_id,login_ts,logout_ts" {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    "expected header `user_id,login_ts,logout_ts`",
                ));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(id), Some(login), Some(logout), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::parse(source_name, lineno, "expected 3 fields"));
        };
        let login_ts = login
            .trim()
            .parse()
            .map_err(|_| Error::parse(source_name, lineno, format!("bad login_ts `{login}`")))?;
        let logout_ts = logout
            .trim()
            .parse()
            .map_err(|_| Error::parse(source_name, lineno, format!("bad logout_ts `{logout}`")))?;
        let ev = SessionEvent::new(id, login_ts, logout_ts);
        ev.validate(lineno)?;
        events.push(ev);
    }
    Ok(events)
}

/// The four consecutive six-week periods used for training (A features,
/// B labels) and testing (C features, D labels).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodSplit {
    pub a: SlotRange,
    pub b: SlotRange,
    pub c: SlotRange,
    pub d: SlotRange,
}

impl PeriodSplit {
    pub fn by_name(&self, name: &str) -> Option<SlotRange> {
        match name {
            "A" | "a" => Some(self.a),
            "B" | "b" => Some(self.b),
            "C" | "c" => Some(self.c),
            "D" | "d" => Some(self.d),
            _ => None,
        }
    }

    pub fn periods(&self) -> [(&'static str, SlotRange); 4] {
        [("A", self.a), ("B", self.b), ("C", self.c), ("D", self.d)]
    }
}

pub fn split_periods(m: &AvailabilityMatrix) -> Result<PeriodSplit> {
    let period = PERIOD_WEEKS * m.slots_per_week()?;
    let required = 4 * period;
    if m.n_slots() < required {
        return Err(Error::TooShort {
            required,
            actual: m.n_slots(),
        });
    }
    let r = |i: usize| SlotRange::new(i * period, (i + 1) * period);
    Ok(PeriodSplit {
        a: r(0),
        b: r(1),
        c: r(2),
        d: r(3),
    })
}

/// Users whose mean online time over `reference` is at least
/// `threshold_hours_per_day` (boundary included).
pub fn filter_superpeers(
    m: &AvailabilityMatrix,
    reference: SlotRange,
    threshold_hours_per_day: f64,
) -> Result<Vec<String>> {
    if reference.is_empty() {
        return Err(Error::EmptyRange("superpeer reference period"));
    }
    if reference.end > m.n_slots() {
        return Err(Error::invalid(format!(
            "reference {reference} exceeds matrix of {} slots",
            m.n_slots()
        )));
    }
    // count/len >= h/24  <=>  24*count >= h*len, exact for integral h.
    let len = reference.len() as f64;
    Ok((0..m.n_users())
        .filter(|&u| 24.0 * m.online_count(u, reference) as f64 >= threshold_hours_per_day * len)
        .map(|u| m.users()[u].clone())
        .collect())
}

/// Mean of the cells over `users` x `range`.
pub fn average_availability<S: AsRef<str>>(m: &AvailabilityMatrix, users: &[S], range: SlotRange) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::EmptyUserSet("average_availability"));
    }
    if range.is_empty() {
        return Err(Error::EmptyRange("average_availability"));
    }
    if range.end > m.n_slots() {
        return Err(Error::invalid(format!("range {range} exceeds matrix")));
    }
    let mut online = 0usize;
    for id in users {
        let u = m.require_user(id.as_ref())?;
        online += m.online_count(u, range);
    }
    Ok(online as f64 / (users.len() * range.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: i64 = 3600;

    #[test]
    fn partial_overlap_marks_every_touched_slot() {
        let origin = 10 * H;
        let ev = SessionEvent::new("a", origin + H / 2, origin + 2 * H + 600);
        let m = ingest_events(&[ev], origin, 3600, 5).unwrap();
        assert_eq!(m.row(0), &[1, 1, 1, 0, 0]);
    }

    #[test]
    fn session_ending_on_boundary_does_not_touch_next_slot() {
        let m = ingest_events(&[SessionEvent::new("a", 0, H)], 0, 3600, 3).unwrap();
        assert_eq!(m.row(0), &[1, 0, 0]);
    }

    #[test]
    fn users_outside_horizon_keep_zero_rows() {
        let events = vec![
            SessionEvent::new("b", 0, 100),
            SessionEvent::new("a", 100 * H, 101 * H),
            SessionEvent::new("c", -5 * H, -H),
        ];
        let m = ingest_events(&events, 0, 3600, 4).unwrap();
        assert_eq!(m.users(), &["a", "b", "c"]);
        assert_eq!(m.row(0), &[0, 0, 0, 0]);
        assert_eq!(m.row(1), &[1, 0, 0, 0]);
        assert_eq!(m.row(2), &[0, 0, 0, 0]);
        assert_eq!(m.drop_inactive_users().users(), &["b"]);
    }

    #[test]
    fn empty_event_list_gives_zero_users() {
        let m = ingest_events(&[], 0, 3600, 10).unwrap();
        assert_eq!(m.n_users(), 0);
        assert_eq!(m.n_slots(), 10);
    }

    #[test]
    fn malformed_event_reports_row() {
        let events = vec![SessionEvent::new("a", 0, 10), SessionEvent::new("a", 10, 10)];
        match ingest_events(&events, 0, 3600, 10) {
            Err(Error::InvalidEvent { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn brute_force(events: &[SessionEvent], origin: i64, step: i64, horizon: usize) -> Vec<Vec<u8>> {
        let mut users: Vec<&str> = events.iter().map(|e| e.user_id.as_str()).collect();
        users.sort();
        users.dedup();
        users
            .iter()
            .map(|u| {
                (0..horizon)
                    .map(|t| {
                        let s = origin + t as i64 * step;
                        let e = s + step;
                        events
                            .iter()
                            .any(|ev| ev.user_id == *u && ev.login_ts < e && ev.logout_ts > s)
                            as u8
                    })
                    .collect()
            })
            .collect()
    }

    fn random_events(rng: &mut ChaCha8Rng, n: usize, users: usize) -> Vec<SessionEvent> {
        (0..n)
            .map(|_| {
                let u = rng.gen_range(0..users);
                let login = rng.gen_range(-20 * H..220 * H);
                let dur = rng.gen_range(1..10 * H);
                SessionEvent::new(format!("user{u:02}"), login, login + dur)
            })
            .collect()
    }

    #[test]
    fn ingest_matches_brute_force_overlap_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let events = random_events(&mut rng, 500, 20);
        let m = ingest_events(&events, 0, 3600, 200).unwrap();
        let expected = brute_force(&events, 0, H, 200);
        for (u, row) in expected.iter().enumerate() {
            assert_eq!(m.row(u), row.as_slice(), "user {}", m.users()[u]);
        }
    }

    #[test]
    fn ingest_is_order_insensitive_and_merge_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut events = random_events(&mut rng, 200, 8);
        let m1 = ingest_events(&events, 0, 3600, 240).unwrap();
        events.reverse();
        let m2 = ingest_events(&events, 0, 3600, 240).unwrap();
        assert_eq!(m1, m2);

        let split = vec![SessionEvent::new("x", 0, 5 * H), SessionEvent::new("x", 3 * H, 9 * H)];
        let merged = vec![SessionEvent::new("x", 0, 9 * H)];
        assert_eq!(
            ingest_events(&split, 0, 3600, 12).unwrap(),
            ingest_events(&merged, 0, 3600, 12).unwrap()
        );
    }

    #[test]
    fn csv_parse_reports_line_numbers() {
        let text = "user_id,login_ts,logout_ts\na,0,10\nb,20,5\n";
        match read_events_csv(text.as_bytes(), "ev.csv") {
            Err(Error::InvalidEvent { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        let ok = read_events_csv("user_id,login_ts,logout_ts\na,0,10\n".as_bytes(), "ev").unwrap();
        assert_eq!(ok, vec![SessionEvent::new("a", 0, 10)]);
        assert!(read_events_csv("id,a,b\n".as_bytes(), "ev").is_err());
    }

    fn hourly(weeks: usize) -> AvailabilityMatrix {
        let slots = weeks * 168;
        AvailabilityMatrix::new(0, 3600, vec!["u".into()], slots, vec![0; slots]).unwrap()
    }

    #[test]
    fn split_periods_ranges() {
        let s = split_periods(&hourly(24)).unwrap();
        assert_eq!(s.a, SlotRange::new(0, 1008));
        assert_eq!(s.b, SlotRange::new(1008, 2016));
        assert_eq!(s.c, SlotRange::new(2016, 3024));
        assert_eq!(s.d, SlotRange::new(3024, 4032));
        assert_eq!(split_periods(&hourly(25)).unwrap(), s);
        match split_periods(&hourly(23)) {
            Err(Error::TooShort { required, actual }) => {
                assert_eq!((required, actual), (4032, 23 * 168))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn superpeer_threshold_boundary_is_inclusive() {
        let mut full = vec![1u8; 1008];
        let mut exact = vec![0u8; 1008];
        exact[..168].fill(1);
        let mut below = vec![0u8; 1008];
        below[..167].fill(1);
        let m = AvailabilityMatrix::from_rows(
            0,
            3600,
            vec!["full".into(), "exact".into(), "below".into()],
            vec![std::mem::take(&mut full), exact, below],
        )
        .unwrap();
        let r = m.full_range();
        assert_eq!(filter_superpeers(&m, r, 4.0).unwrap(), vec!["full", "exact"]);
        assert_eq!(filter_superpeers(&m, r, 0.0).unwrap().len(), 3);
        assert!(filter_superpeers(&m, r, 24.5).unwrap().is_empty());
        assert!(filter_superpeers(&m, SlotRange::new(5, 5), 4.0).is_err());
    }

    #[test]
    fn superpeer_selection_matches_recomputed_fractions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let users: Vec<String> = (0..60).map(|i| format!("u{i:02}")).collect();
        let rows: Vec<Vec<u8>> = (0..60)
            .map(|_| {
                let p: f64 = rng.gen();
                (0..1008).map(|_| rng.gen_bool(p) as u8).collect()
            })
            .collect();
        let m = AvailabilityMatrix::from_rows(0, 3600, users.clone(), rows.clone()).unwrap();
        let got = filter_superpeers(&m, m.full_range(), 4.0).unwrap();
        let want: Vec<String> = rows
            .iter()
            .zip(&users)
            .filter(|(r, _)| {
                let frac = r.iter().filter(|&&c| c == 1).count() as f64 / 1008.0;
                frac * 24.0 >= 4.0 - 1e-12
            })
            .map(|(_, u)| u.clone())
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn average_availability_cases() {
        let m = AvailabilityMatrix::from_rows(
            0,
            3600,
            vec!["a".into(), "b".into()],
            vec![vec![1, 1, 1, 1], vec![0, 1, 0, 1]],
        )
        .unwrap();
        assert_eq!(average_availability(&m, &["a"], m.full_range()).unwrap(), 1.0);
        assert_eq!(average_availability(&m, &["b"], m.full_range()).unwrap(), 0.5);
        assert!(average_availability::<&str>(&m, &[], m.full_range()).is_err());
        assert!(average_availability(&m, &["zz"], m.full_range()).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let users: Vec<String> = (0..50).map(|i| format!("u{i}")).collect();
        let rows: Vec<Vec<u8>> = (0..50)
            .map(|_| (0..200).map(|_| rng.gen_bool(0.3) as u8).collect())
            .collect();
        let m = AvailabilityMatrix::from_rows(0, 3600, users.clone(), rows.clone()).unwrap();
        let r = SlotRange::new(20, 180);
        let mut total = 0.0;
        for row in &rows {
            for t in r.iter() {
                total += row[t] as f64;
            }
        }
        let naive = total / (50.0 * 160.0);
        let got = average_availability(&m, &users, r).unwrap();
        assert!((got - naive).abs() < 1e-12);
    }

    #[test]
    fn matrix_file_roundtrip() {
        let m = AvailabilityMatrix::from_rows(
            1_600_000_000,
            3600,
            vec!["a".into(), "b,c".into()],
            vec![vec![1, 0, 1], vec![0, 0, 1]],
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "#origin_ts=1600000000 slot_seconds=3600 slots=3\na,101\nb,c,001\n"
        );
        let back = AvailabilityMatrix::read_from(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, m);
        assert!(AvailabilityMatrix::read_from("#slots=3\n".as_bytes(), "x").is_err());
        assert!(
            AvailabilityMatrix::read_from("#origin_ts=0 slot_seconds=3600 slots=3\na,10\n".as_bytes(), "x").is_err()
        );
    }
}
