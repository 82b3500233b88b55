//! Synthetic availability traces with per-user daily and weekly structure.
//!
//! Slot `t` is hour `t % 24` of day-of-week `(t / 24) % 7`, counted from the
//! trace origin with no calendar alignment.

use std::io::BufRead;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeds::stream_rng;
use crate::trace::AvailabilityMatrix;

pub const HOURS_PER_DAY: usize = 24;
pub const HOURS_PER_WEEK: usize = 168;

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub base_rate: f64,
    pub daily_profile: [f64; 24],
    pub weekday_profile: [f64; 7],
    /// Probability of flipping each generated cell.
    pub noise: f64,
}

impl UserProfile {
    pub fn flat(rate: f64) -> Self {
        UserProfile {
            base_rate: rate,
            daily_profile: [1.0; 24],
            weekday_profile: [1.0; 7],
            noise: 0.0,
        }
    }

    /// Online during `[start, end)` hours of every day; wraps past midnight when `start > end`.
    pub fn hours(start: usize, end: usize) -> Self {
        UserProfile {
            daily_profile: hour_window(start, end),
            ..UserProfile::flat(1.0)
        }
    }

    /// Weekday daytime presence, absent on weekends.
    pub fn office_worker() -> Self {
        UserProfile {
            base_rate: 0.95,
            daily_profile: hour_window(8, 18),
            weekday_profile: [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
            noise: 0.0,
        }
    }

    /// Evenings and nights, every day.
    pub fn night_owl() -> Self {
        UserProfile {
            base_rate: 0.95,
            daily_profile: hour_window(20, 4),
            weekday_profile: [1.0; 7],
            noise: 0.0,
        }
    }

    pub fn always_on() -> Self {
        UserProfile::flat(1.0)
    }

    pub fn always_off() -> Self {
        UserProfile::flat(0.0)
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_base_rate(mut self, rate: f64) -> Self {
        self.base_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        if !prob(self.base_rate) {
            return Err(Error::invalid(format!("base_rate {} not in [0,1]", self.base_rate)));
        }
        if !prob(self.noise) {
            return Err(Error::invalid(format!("noise {} not in [0,1]", self.noise)));
        }
        let bad = |v: &[f64]| v.iter().any(|&x| !(x >= 0.0 && x.is_finite()));
        if bad(&self.daily_profile) || bad(&self.weekday_profile) {
            return Err(Error::invalid("profile multipliers must be finite and >= 0"));
        }
        Ok(())
    }

    /// Online probability at hour-of-week `how` before noise, clamped to [0,1].
    pub fn online_probability(&self, how: usize) -> f64 {
        let hour = how % HOURS_PER_DAY;
        let dow = (how / HOURS_PER_DAY) % 7;
        (self.base_rate * self.daily_profile[hour] * self.weekday_profile[dow]).clamp(0.0, 1.0)
    }
}

fn hour_window(start: usize, end: usize) -> [f64; 24] {
    let mut d = [0.0; 24];
    for (h, v) in d.iter_mut().enumerate() {
        let inside = if start <= end {
            h >= start && h < end
        } else {
            h >= start || h < end
        };
        if inside {
            *v = 1.0;
        }
    }
    d
}

/// A named profile replicated `count` times.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileGroup {
    pub name: String,
    pub count: usize,
    pub profile: UserProfile,
}

pub fn expand_groups(groups: &[ProfileGroup]) -> Vec<UserProfile> {
    groups
        .iter()
        .flat_map(|g| std::iter::repeat(g.profile.clone()).take(g.count))
        .collect()
}

/// Id of the `index`-th generated user; zero padding keeps ids in generation order
/// under lexicographic sorting.
pub fn user_id(index: usize) -> String {
    format!("u{index:06}")
}

/// Hourly trace starting at origin 0. Row `u` draws from its own RNG stream,
/// so appending profiles never changes earlier rows.
pub fn generate_trace(profiles: &[UserProfile], weeks: usize, seed: u64) -> Result<AvailabilityMatrix> {
    if weeks == 0 {
        return Err(Error::invalid("weeks must be at least 1"));
    }
    for p in profiles {
        p.validate()?;
    }
    let slots = weeks * HOURS_PER_WEEK;
    let rows: Vec<Vec<u8>> = profiles
        .par_iter()
        .enumerate()
        .map(|(u, p)| {
            let mut rng = stream_rng(seed, u as u64);
            let probs: Vec<f64> = (0..HOURS_PER_WEEK).map(|h| p.online_probability(h)).collect();
            (0..slots)
                .map(|t| {
                    let mut on = draw(&mut rng, probs[t % HOURS_PER_WEEK]);
                    if draw(&mut rng, p.noise) {
                        on = !on;
                    }
                    on as u8
                })
                .collect()
        })
        .collect();
    let users = (0..profiles.len()).map(user_id).collect();
    let cells = rows.concat();
    AvailabilityMatrix::new(0, 3600, users, slots, cells)
}

// Always consumes one draw so the stream position does not depend on p.
fn draw<R: Rng>(rng: &mut R, p: f64) -> bool {
    rng.gen::<f64>() < p
}

/// Parses a profile file:
///
/// ```text
/// [office]
/// count=20
/// base_rate=0.95
/// hours=8-18            # or daily=<24 comma-separated multipliers>
/// weekday=1,1,1,1,1,0,0
/// noise=0.05
/// ```
pub fn parse_profiles<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<ProfileGroup>> {
    let mut groups: Vec<ProfileGroup> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            groups.push(ProfileGroup {
                name: name.trim().to_string(),
                count: 1,
                profile: UserProfile::flat(1.0),
            });
            continue;
        }
        let err = |msg: String| Error::parse(source_name, lineno, msg);
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
        let group = groups
            .last_mut()
            .ok_or_else(|| err("key before any [group] header".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| -> Result<f64> { v.trim().parse::<f64>().map_err(|_| err(format!("bad number `{v}`"))) };
        let list = |v: &str, n: usize| -> Result<Vec<f64>> {
            let xs = v.split(',').map(num).collect::<Result<Vec<_>>>()?;
            if xs.len() != n {
                return Err(err(format!("`{key}` needs {n} values, got {}", xs.len())));
            }
            Ok(xs)
        };
        match key {
            "count" => group.count = value.parse().map_err(|_| err(format!("bad count `{value}`")))?,
            "base_rate" => group.profile.base_rate = num(value)?,
            "noise" => group.profile.noise = num(value)?,
            "daily" => group.profile.daily_profile.copy_from_slice(&list(value, 24)?),
            "weekday" => group.profile.weekday_profile.copy_from_slice(&list(value, 7)?),
            "hours" => {
                let (a, b) = value
                    .split_once('-')
                    .ok_or_else(|| err(format!("hours must be `start-end`, got `{value}`")))?;
                let parse_h = |s: &str| -> Result<usize> {
                    match s.trim().parse::<usize>() {
                        Ok(h) if h <= 24 => Ok(h % 24),
                        _ => Err(err(format!("bad hour `{s}`"))),
                    }
                };
                group.profile.daily_profile = hour_window(parse_h(a)?, parse_h(b)?);
            }
            _ => return Err(err(format!("unknown key `{key}`"))),
        }
    }
    for g in &groups {
        g.profile
            .validate()
            .map_err(|e| Error::invalid(format!("group [{}]: {e}", g.name)))?;
    }
    if groups.is_empty() {
        return Err(Error::parse(source_name, 0, "no profile groups"));
    }
    Ok(groups)
}

pub fn load_profiles(path: &Path) -> Result<Vec<ProfileGroup>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_profiles(std::io::BufReader::new(file), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_always_on_row() {
        let m = generate_trace(&[UserProfile::always_on()], 2, 1).unwrap();
        assert!(m.row(0).iter().all(|&c| c == 1));
        assert_eq!(m.n_slots(), 336);
    }

    #[test]
    fn flat_half_rate_mean_within_three_sigma() {
        let profiles = vec![UserProfile::flat(0.5); 1000];
        let m = generate_trace(&profiles, 24, 42).unwrap();
        let n = (m.n_users() * m.n_slots()) as f64;
        let mean = (0..m.n_users())
            .map(|u| m.online_count(u, m.full_range()))
            .sum::<usize>() as f64
            / n;
        let sigma = (0.25 / n).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sigma, "mean {mean}");
        assert!((0.49..=0.51).contains(&mean));
    }

    #[test]
    fn office_worker_daily_feature_by_direct_count() {
        let m = generate_trace(&vec![UserProfile::office_worker(); 5], 6, 3).unwrap();
        for u in 0..5 {
            let frac_at = |hour: usize| {
                let weekday_slots: Vec<usize> = (0..m.n_slots())
                    .filter(|t| t % 24 == hour && (t / 24) % 7 < 5)
                    .collect();
                let on = weekday_slots.iter().filter(|&&t| m.get(u, t)).count();
                (on as f64 + 1.0) / (weekday_slots.len() as f64 + 2.0)
            };
            assert!(frac_at(10) > 0.8);
            assert!(frac_at(3) < 0.2);
        }
    }

    #[test]
    fn same_seed_same_matrix_and_rows_are_stable_under_append() {
        let base = vec![UserProfile::flat(0.3).with_noise(0.1), UserProfile::night_owl()];
        let a = generate_trace(&base, 3, 9).unwrap();
        assert_eq!(a, generate_trace(&base, 3, 9).unwrap());
        let mut more = base.clone();
        more.push(UserProfile::office_worker());
        let b = generate_trace(&more, 3, 9).unwrap();
        assert_eq!(a.row(0), b.row(0));
        assert_eq!(a.row(1), b.row(1));
        assert_ne!(a, generate_trace(&base, 3, 10).unwrap());
    }

    #[test]
    fn deterministic_profiles_are_weekly_periodic() {
        let p = UserProfile {
            base_rate: 1.0,
            daily_profile: hour_window(6, 14),
            weekday_profile: [1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0],
            noise: 0.0,
        };
        let m = generate_trace(&[p], 4, 5).unwrap();
        for t in 0..m.n_slots() - HOURS_PER_WEEK {
            assert_eq!(m.get(0, t), m.get(0, t + HOURS_PER_WEEK));
        }
    }

    #[test]
    fn parse_profile_file() {
        let text = "\
# two groups
[office]
count=3
base_rate=0.9
hours=8-18
weekday=1,1,1,1,1,0,0
noise=0.05

[night]
count=2
hours=20-4
";
        let groups = parse_profiles(text.as_bytes(), "p.cfg").unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].count, 3);
        assert_eq!(groups[0].profile.daily_profile[8], 1.0);
        assert_eq!(groups[0].profile.daily_profile[18], 0.0);
        assert_eq!(groups[1].profile.daily_profile[23], 1.0);
        assert_eq!(groups[1].profile.daily_profile[4], 0.0);
        assert_eq!(expand_groups(&groups).len(), 5);

        assert!(parse_profiles("count=3\n".as_bytes(), "x").is_err());
        assert!(parse_profiles("[a]\nbogus=1\n".as_bytes(), "x").is_err());
        assert!(parse_profiles("[a]\nbase_rate=1.5\n".as_bytes(), "x").is_err());
        assert!(parse_profiles("[a]\nweekday=1,1\n".as_bytes(), "x").is_err());
    }
}
