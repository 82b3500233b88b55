//! End-to-end experiment: features from period A with labels from B for
//! training, features from C to predict D for testing, then metrics and the
//! optional simulators. Every random choice draws from a named substream of
//! the root seed.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::bayes::FitOptions;
use crate::error::{Error, Result};
use crate::features::{build_design_matrix, Feature};
use crate::metrics::{auc, gm, metric_over_time, roc_points, write_two_columns, Metric, ScoredLabels};
use crate::model::TrainedModel;
use crate::prediction::PredictionMatrix;
use crate::seeds::derive_seed;
use crate::sim_dht::{self, redundancy_for_target, DhtConfig, SimRow};
use crate::sim_f2f::{self, F2fConfig};
use crate::sim_newsfeed::{permutation_band, simulate_preload, PreloadRun};
use crate::synth::{expand_groups, generate_trace, load_profiles};
use crate::trace::{
    average_availability, filter_superpeers, split_periods, AvailabilityMatrix, PeriodSplit, SlotRange,
};

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Synthetic { profiles: PathBuf, weeks: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    All,
    Superpeer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: Option<TraceSource>,
    pub filter: FilterMode,
    pub threshold_hours: f64,
    pub standardize: bool,
    pub batches: usize,
    pub seed: u64,
    pub ablation: bool,
    /// Window of the metric time series, in slots.
    pub window: usize,
    pub dht: bool,
    pub f2f: bool,
    pub newsfeed: bool,
    pub sample_size: usize,
    pub repetitions: usize,
    pub dht_iterations: usize,
    pub target_unavail: f64,
    pub f2f_degree: usize,
    pub f2f_rewire: f64,
    pub f2f_max_sweeps: usize,
    pub newsfeed_max_n: usize,
    pub permutations: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: None,
            filter: FilterMode::All,
            threshold_hours: 4.0,
            standardize: true,
            batches: 1,
            seed: 0,
            ablation: true,
            window: 168,
            dht: false,
            f2f: false,
            newsfeed: false,
            sample_size: sim_dht::DEFAULT_SAMPLE_SIZE,
            repetitions: 10,
            dht_iterations: sim_dht::DEFAULT_ITERATIONS,
            target_unavail: sim_dht::DEFAULT_TARGET_UNAVAILABILITY,
            f2f_degree: sim_f2f::DEFAULT_DEGREE,
            f2f_rewire: sim_f2f::DEFAULT_REWIRE_P,
            f2f_max_sweeps: sim_f2f::DEFAULT_MAX_SWEEPS,
            newsfeed_max_n: 20,
            permutations: 200,
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::invalid(format!("bad value `{value}` for `{key}`"));
        let flag = || match value {
            "0" | "false" | "no" => Ok(false),
            "1" | "true" | "yes" => Ok(true),
            _ => Err(bad()),
        };
        fn num<T: std::str::FromStr>(v: &str, bad: impl Fn() -> Error) -> Result<T> {
            v.parse().map_err(|_| bad())
        }
        match key {
            "trace" => self.source = Some(TraceSource::File(PathBuf::from(value))),
            "profiles" => {
                let weeks = match &self.source {
                    Some(TraceSource::Synthetic { weeks, .. }) => *weeks,
                    _ => 24,
                };
                self.source = Some(TraceSource::Synthetic {
                    profiles: PathBuf::from(value),
                    weeks,
                })
            }
            "weeks" => match &mut self.source {
                Some(TraceSource::Synthetic { weeks, .. }) => *weeks = num(value, bad)?,
                _ => return Err(Error::invalid("`weeks` must follow `profiles`")),
            },
            "filter" => {
                self.filter = match value {
                    "all" => FilterMode::All,
                    "superpeer" => FilterMode::Superpeer,
                    _ => return Err(bad()),
                }
            }
            "threshold_hours" => self.threshold_hours = num(value, bad)?,
            "standardize" => self.standardize = flag()?,
            "batches" => self.batches = num(value, bad)?,
            "seed" => self.seed = num(value, bad)?,
            "ablation" => self.ablation = flag()?,
            "window" => self.window = num(value, bad)?,
            "simulators" => {
                self.dht = false;
                self.f2f = false;
                self.newsfeed = false;
                for s in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    match s {
                        "dht" => self.dht = true,
                        "f2f" => self.f2f = true,
                        "newsfeed" => self.newsfeed = true,
                        "none" => {}
                        _ => return Err(Error::invalid(format!("unknown simulator `{s}`"))),
                    }
                }
            }
            "sample_size" => self.sample_size = num(value, bad)?,
            "repetitions" => self.repetitions = num(value, bad)?,
            "dht_iterations" => self.dht_iterations = num(value, bad)?,
            "target_unavail" => self.target_unavail = num(value, bad)?,
            "f2f_degree" => self.f2f_degree = num(value, bad)?,
            "f2f_rewire" => self.f2f_rewire = num(value, bad)?,
            "f2f_max_sweeps" => self.f2f_max_sweeps = num(value, bad)?,
            "newsfeed_max_n" => self.newsfeed_max_n = num(value, bad)?,
            "permutations" => self.permutations = num(value, bad)?,
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Flat `key=value` text; `#` starts a comment.
    pub fn parse<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source_name, e))?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source_name, i + 1, format!("expected key=value, got `{line}`")))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(std::io::BufReader::new(file), &path.display().to_string())
    }

    fn describe(&self) -> String {
        let mut s = String::new();
        match &self.source {
            Some(TraceSource::File(p)) => writeln!(s, "trace={}", p.display()),
            Some(TraceSource::Synthetic { profiles, weeks }) => {
                writeln!(s, "profiles={}\nweeks={weeks}", profiles.display())
            }
            None => writeln!(s, "trace=<in-memory>"),
        }
        .unwrap();
        let sims: Vec<&str> = [(self.dht, "dht"), (self.f2f, "f2f"), (self.newsfeed, "newsfeed")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect();
        let filter = match self.filter {
            FilterMode::All => "all",
            FilterMode::Superpeer => "superpeer",
        };
        writeln!(
            s,
            "filter={filter}\nthreshold_hours={}\nstandardize={}\nbatches={}\nseed={}\nablation={}\nwindow={}\nsimulators={}",
            self.threshold_hours,
            self.standardize as u8,
            self.batches,
            self.seed,
            self.ablation as u8,
            self.window,
            if sims.is_empty() { "none".to_string() } else { sims.join(",") },
        )
        .unwrap();
        if self.dht || self.f2f {
            writeln!(
                s,
                "sample_size={}\nrepetitions={}\ntarget_unavail={}",
                self.sample_size, self.repetitions, self.target_unavail
            )
            .unwrap();
        }
        if self.dht {
            writeln!(s, "dht_iterations={}", self.dht_iterations).unwrap();
        }
        if self.f2f {
            writeln!(
                s,
                "f2f_degree={}\nf2f_rewire={}\nf2f_max_sweeps={}",
                self.f2f_degree, self.f2f_rewire, self.f2f_max_sweeps
            )
            .unwrap();
        }
        if self.newsfeed {
            writeln!(
                s,
                "newsfeed_max_n={}\npermutations={}",
                self.newsfeed_max_n, self.permutations
            )
            .unwrap();
        }
        s
    }
}

/// Loads or generates the trace named by the config.
pub fn load_trace(cfg: &ExperimentConfig) -> Result<AvailabilityMatrix> {
    match &cfg.source {
        Some(TraceSource::File(p)) => AvailabilityMatrix::load(p),
        Some(TraceSource::Synthetic { profiles, weeks }) => {
            let groups = load_profiles(profiles)?;
            generate_trace(&expand_groups(&groups), *weeks, derive_seed(cfg.seed, "synth"))
        }
        None => Err(Error::invalid("config names no trace source")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    /// `None` for the model using all features.
    pub feature: Option<Feature>,
    pub auc: f64,
    pub gm: f64,
    /// Coefficient of the feature in the all-features model.
    pub beta: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub header: String,
    pub split: PeriodSplit,
    pub train_users: Vec<String>,
    pub test_users: Vec<String>,
    pub model: TrainedModel,
    pub predictions: PredictionMatrix,
    pub metrics: Vec<(String, String, f64)>,
    pub roc: Vec<(f64, f64)>,
    pub auc_series: Vec<(usize, f64)>,
    pub gm_series: Vec<(usize, f64)>,
    pub ablation: Vec<AblationRow>,
    pub replicas: Option<usize>,
    pub dht: Vec<SimRow>,
    pub f2f: Vec<SimRow>,
    pub newsfeed: Option<(PreloadRun, Vec<f64>)>,
}

fn select_users(m: &AvailabilityMatrix, mode: FilterMode, reference: SlotRange, threshold: f64) -> Result<Vec<String>> {
    let users = match mode {
        FilterMode::All => m.users().to_vec(),
        FilterMode::Superpeer => filter_superpeers(m, reference, threshold)?,
    };
    if users.is_empty() {
        return Err(Error::EmptyUserSet("filtered user set"));
    }
    Ok(users)
}

/// Trains on A→B, predicts D from C.
pub fn train_and_predict(
    m: &AvailabilityMatrix,
    split: &PeriodSplit,
    cfg: &ExperimentConfig,
) -> Result<(Vec<String>, Vec<String>, TrainedModel, PredictionMatrix)> {
    let train_users = select_users(m, cfg.filter, split.a, cfg.threshold_hours)?;
    let test_users = select_users(m, cfg.filter, split.c, cfg.threshold_hours)?;
    let design = build_design_matrix(m, split.a, split.b, &train_users, cfg.standardize)?;
    let model = TrainedModel::fit(&design, cfg.batches, &FitOptions::default())?;
    let predictions = model.predict_period(m, split.c, split.d, &test_users)?;
    Ok((train_users, test_users, model, predictions))
}

/// One row for all features, then one per single-feature model (each with an
/// intercept), evaluated on period D.
pub fn per_feature_ablation(
    m: &AvailabilityMatrix,
    split: &PeriodSplit,
    cfg: &ExperimentConfig,
) -> Result<Vec<AblationRow>> {
    let train_users = select_users(m, cfg.filter, split.a, cfg.threshold_hours)?;
    let test_users = select_users(m, cfg.filter, split.c, cfg.threshold_hours)?;
    let design = build_design_matrix(m, split.a, split.b, &train_users, cfg.standardize)?;
    ablation_rows(m, split, cfg, &design, &test_users)
}

fn ablation_rows(
    m: &AvailabilityMatrix,
    split: &PeriodSplit,
    cfg: &ExperimentConfig,
    design: &crate::features::DesignMatrix,
    test_users: &[String],
) -> Result<Vec<AblationRow>> {
    let eval = |model: &TrainedModel| -> Result<(f64, f64)> {
        let p = model.predict_period(m, split.c, split.d, test_users)?;
        let s = p.score_against(m, split.d)?;
        Ok((auc(&s)?, gm(&s)?))
    };
    let full = TrainedModel::fit(design, cfg.batches, &FitOptions::default())?;
    let (a, g) = eval(&full)?;
    let mut rows = vec![AblationRow {
        feature: None,
        auc: a,
        gm: g,
        beta: None,
    }];
    for f in Feature::ALL {
        let model = TrainedModel::fit(&design.select(&[f])?, cfg.batches, &FitOptions::default())?;
        let (a, g) = eval(&model)?;
        let i = f.index() + 1;
        rows.push(AblationRow {
            feature: Some(f),
            auc: a,
            gm: g,
            beta: Some((full.posterior.mean[i], full.posterior.sd(i))),
        });
    }
    Ok(rows)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let m = load_trace(cfg)?;
    run_experiment_on(&m, cfg)
}

pub fn run_experiment_on(m: &AvailabilityMatrix, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let split = split_periods(m)?;
    let train_users = select_users(m, cfg.filter, split.a, cfg.threshold_hours)?;
    let test_users = select_users(m, cfg.filter, split.c, cfg.threshold_hours)?;
    let design = build_design_matrix(m, split.a, split.b, &train_users, cfg.standardize)?;
    let model = TrainedModel::fit(&design, cfg.batches, &FitOptions::default())?;
    let predictions = model.predict_period(m, split.c, split.d, &test_users)?;
    let scored = predictions.score_against(m, split.d)?;

    let mut metrics = vec![
        ("auc".to_string(), "all".to_string(), auc(&scored)?),
        ("gm".to_string(), "all".to_string(), gm(&scored)?),
    ];
    let (acc_on, acc_off) = scored.class_accuracy();
    metrics.extend(acc_on.map(|v| ("accuracy".to_string(), "online".to_string(), v)));
    metrics.extend(acc_off.map(|v| ("accuracy".to_string(), "offline".to_string(), v)));
    let roc = roc_points(&scored)?;
    let auc_series = metric_over_time(&scored, cfg.window, Metric::Auc)?;
    let gm_series = metric_over_time(&scored, cfg.window, Metric::Gm)?;
    let ablation = if cfg.ablation {
        ablation_rows(m, &split, cfg, &design, &test_users)?
    } else {
        Vec::new()
    };

    let mut header = cfg.describe();
    writeln!(header, "seed.synth={}", derive_seed(cfg.seed, "synth")).unwrap();
    writeln!(
        header,
        "train_users={}\ntest_users={}",
        train_users.len(),
        test_users.len()
    )
    .unwrap();
    for (name, r) in split.periods() {
        writeln!(header, "period.{name}={r}").unwrap();
    }

    let sims = cfg.dht || cfg.f2f || cfg.newsfeed;
    let actual = if sims { Some(m.select_users(&test_users)?) } else { None };
    let mut replicas = None;
    let (mut dht, mut f2f, mut newsfeed) = (Vec::new(), Vec::new(), None);
    if cfg.dht || cfg.f2f {
        let a_bar = average_availability(m, &test_users, split.c)?;
        let n = redundancy_for_target(a_bar, cfg.target_unavail)?;
        writeln!(header, "avg_availability_c={a_bar:.6}\nreplicas={n}").unwrap();
        replicas = Some(n);
        let actual = actual.as_ref().unwrap();
        if cfg.dht {
            let seed = derive_seed(cfg.seed, "dht");
            writeln!(header, "seed.dht={seed}").unwrap();
            let dc = DhtConfig {
                replicas: n,
                sample_size: cfg.sample_size,
                repetitions: cfg.repetitions,
                iterations: cfg.dht_iterations,
                seed,
            };
            dht = sim_dht::run_dht_experiment(&predictions, actual, &dc)?;
        }
        if cfg.f2f {
            let seed = derive_seed(cfg.seed, "f2f");
            writeln!(header, "seed.f2f={seed}").unwrap();
            let fc = F2fConfig {
                capacity: n,
                sample_size: cfg.sample_size,
                degree: cfg.f2f_degree,
                rewire_p: cfg.f2f_rewire,
                repetitions: cfg.repetitions,
                max_sweeps: cfg.f2f_max_sweeps,
                seed,
            };
            f2f = sim_f2f::run_f2f_experiment(&predictions, actual, actual, split.c, &fc)?;
        }
    }
    if cfg.newsfeed {
        let seed = derive_seed(cfg.seed, "newsfeed");
        writeln!(header, "seed.newsfeed={seed}").unwrap();
        let actual = actual.as_ref().unwrap();
        let train_avail: Vec<f64> = (0..actual.n_users())
            .map(|u| actual.online_count(u, split.c) as f64 / split.c.len() as f64)
            .collect();
        let n_values: Vec<usize> = (1..=cfg.newsfeed_max_n).collect();
        let run = simulate_preload(actual, &predictions, &train_avail, &n_values)?;
        let band = permutation_band(&run, cfg.permutations, m.slots_per_day()?, seed);
        newsfeed = Some((run, band));
    }

    Ok(ExperimentReport {
        header,
        split,
        train_users,
        test_users,
        model,
        predictions,
        metrics,
        roc,
        auc_series,
        gm_series,
        ablation,
        replicas,
        dht,
        f2f,
        newsfeed,
    })
}

fn create(dir: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    let path = dir.join(name);
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn finish(dir: &Path, name: &str, r: std::io::Result<()>, mut w: std::io::BufWriter<std::fs::File>) -> Result<()> {
    let path = dir.join(name);
    r.and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
}

impl ExperimentReport {
    pub fn scored(&self, m: &AvailabilityMatrix) -> Result<ScoredLabels> {
        self.predictions.score_against(m, self.split.d)
    }

    /// Writes every artifact into `dir` (created if missing).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let emit =
            |name: &str, f: &dyn Fn(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>| -> Result<()> {
                let mut w = create(dir, name)?;
                let r = f(&mut w);
                finish(dir, name, r, w)
            };
        emit("report.txt", &|w| w.write_all(self.header.as_bytes()))?;
        emit("model.txt", &|w| self.model.write_to(w))?;
        emit("predictions.csv", &|w| self.predictions.write_to(w))?;
        emit("metrics.csv", &|w| {
            crate::metrics::write_metric_report(w, &self.metrics)
        })?;
        emit("roc.csv", &|w| {
            write_two_columns(
                w,
                ("fpr", "tpr"),
                self.roc.iter().map(|&(a, b)| (format!("{a:.6}"), format!("{b:.6}"))),
            )
        })?;
        for (name, series) in [
            ("auc_over_time.csv", &self.auc_series),
            ("gm_over_time.csv", &self.gm_series),
        ] {
            emit(name, &|w| {
                write_two_columns(
                    w,
                    ("slot", "value"),
                    series.iter().map(|&(t, v)| (t, format!("{v:.6}"))),
                )
            })?;
        }
        if !self.ablation.is_empty() {
            emit("ablation.csv", &|w| {
                writeln!(w, "feature,auc,gm,beta_mean,beta_sd")?;
                for r in &self.ablation {
                    let name = r.feature.map_or("ALL", |f| f.key());
                    let beta = r.beta.map_or(",".to_string(), |(b, s)| format!("{b:.6},{s:.6}"));
                    writeln!(w, "{name},{:.6},{:.6},{beta}", r.auc, r.gm)?;
                }
                Ok(())
            })?;
        }
        for (name, rows) in [("dht", &self.dht), ("f2f", &self.f2f)] {
            if !rows.is_empty() {
                emit(&format!("{name}.csv"), &|w| sim_dht::write_sim_report(w, rows))?;
                emit(&format!("{name}_summary.csv"), &|w| sim_dht::write_sim_summary(w, rows))?;
            }
        }
        if let Some((run, band)) = &self.newsfeed {
            emit("newsfeed.csv", &|w| crate::sim_newsfeed::write_curve(w, run))?;
            emit("newsfeed_band.csv", &|w| {
                write_two_columns(
                    w,
                    ("n", "band"),
                    run.n_values.iter().zip(band).map(|(n, b)| (n, format!("{b:.6}"))),
                )
            })?;
        }
        Ok(())
    }
}
