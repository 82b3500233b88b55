//! `availcast`: availability forecasting and placement experiments from the
//! command line. Exit status: 0 success, 1 data error, 2 usage error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use availcast::bayes::FitOptions;
use availcast::cluster::{kmeans_availability, write_clusters};
use availcast::features::{build_design_matrix, Feature};
use availcast::metrics::{auc, gm, metric_over_time, roc_points, write_metric_report, write_two_columns, Metric};
use availcast::model::TrainedModel;
use availcast::pipeline::{run_experiment, ExperimentConfig};
use availcast::prediction::PredictionMatrix;
use availcast::sim_dht::{self, redundancy_for_target, DhtConfig};
use availcast::sim_f2f::{self, F2fConfig};
use availcast::sim_newsfeed::{permutation_band, simulate_preload, write_curve};
use availcast::synth::{expand_groups, generate_trace, load_profiles};
use availcast::trace::{
    average_availability, filter_superpeers, ingest_events, read_events_csv, split_periods, AvailabilityMatrix,
    SlotRange,
};

#[derive(Parser)]
#[command(
    name = "availcast",
    version,
    about = "Forecast user availability and evaluate placement strategies"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an availability matrix from a session CSV (user_id,login_ts,logout_ts).
    Ingest(IngestArgs),
    /// Generate a synthetic trace from a profile file.
    Synth(SynthArgs),
    /// Print the four six-week periods of a trace.
    Split(SplitArgs),
    /// List users online at least the given hours per day over a range.
    Filter(FilterArgs),
    /// Dump the design matrix built from an observation and a label range.
    Features(FeaturesArgs),
    /// Fit the Bayesian logistic regression model.
    Train(TrainArgs),
    /// Predict online probabilities for a future range.
    Predict(PredictArgs),
    /// Score predictions against observed availability.
    Eval(EvalArgs),
    /// k-means clustering of one week of availability rows.
    Cluster(ClusterArgs),
    /// DHT identifier assignment experiment.
    SimDht(SimDhtArgs),
    /// Friend-to-friend storage placement experiment.
    SimF2f(SimF2fArgs),
    /// Newsfeed pre-loading experiment.
    SimNewsfeed(SimNewsfeedArgs),
    /// Full experiment: train on A/B, test on C/D, metrics and simulators.
    Run(RunArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    events: PathBuf,
    /// Unix time of the start of slot 0.
    #[arg(long)]
    origin: i64,
    #[arg(long, default_value_t = 3600)]
    slot_seconds: u64,
    #[arg(long)]
    slots: usize,
    /// Drop users never online within the horizon.
    #[arg(long)]
    drop_inactive: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long, default_value_t = 24)]
    weeks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Period name (A-D) or `start:end` slots.
    #[arg(long, default_value = "A")]
    range: String,
    #[arg(long, default_value_t = 4.0)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Observation range for features.
    #[arg(long, default_value = "A")]
    obs: String,
    /// Label range.
    #[arg(long, default_value = "B")]
    labels: String,
    /// File with one user id per line (default: all users).
    #[arg(long)]
    users: Option<PathBuf>,
    /// Keep raw feature values.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct FeaturesArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Comma-separated feature subset (keys such as `individual_daily` or f1..f5).
    #[arg(long)]
    features: Option<String>,
    /// Consecutive row batches, each posterior used as the next prior.
    #[arg(long, default_value_t = 1)]
    batches: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value = "C")]
    obs: String,
    #[arg(long, default_value = "D")]
    range: String,
    #[arg(long)]
    users: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Trace holding the observed availability.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "D")]
    range: String,
    /// Window of the metric time series, in slots.
    #[arg(long, default_value_t = 168)]
    window: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    trace: PathBuf,
    /// One week of slots; defaults to the first week.
    #[arg(long)]
    range: Option<String>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimCommon {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Range whose average availability sizes the replica count when not given.
    #[arg(long, default_value = "C")]
    avail_range: String,
    #[arg(long, default_value_t = 0.01)]
    target_unavail: f64,
    #[arg(long, default_value_t = 408)]
    sample_size: usize,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimDhtArgs {
    #[command(flatten)]
    common: SimCommon,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
}

#[derive(Args)]
struct SimF2fArgs {
    #[command(flatten)]
    common: SimCommon,
    /// Storage units per node.
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long, default_value_t = 20)]
    degree: usize,
    #[arg(long, default_value_t = 0.5)]
    rewire: f64,
    #[arg(long, default_value_t = 10_000)]
    max_sweeps: usize,
}

#[derive(Args)]
struct SimNewsfeedArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Range ranking the baseline by availability.
    #[arg(long, default_value = "C")]
    train_range: String,
    #[arg(long, default_value_t = 20)]
    max_n: usize,
    #[arg(long, default_value_t = 200)]
    permutations: usize,
    /// Consecutive slots exchanged together by the permutation band (default: one day).
    #[arg(long)]
    block: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key=value` lines; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    weeks: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `all` or `superpeer`.
    #[arg(long)]
    filter: Option<String>,
    /// Comma-separated subset of dht,f2f,newsfeed.
    #[arg(long)]
    simulators: Option<String>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Repeated `key=value` config overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Period name or `start:end`.
fn resolve_range(text: &str, m: &AvailabilityMatrix) -> Result<SlotRange> {
    if let Some((a, b)) = text.split_once(':') {
        let start: usize = a.trim().parse().with_context(|| format!("bad range start `{a}`"))?;
        let end: usize = b.trim().parse().with_context(|| format!("bad range end `{b}`"))?;
        if start >= end || end > m.n_slots() {
            bail!(
                "range {start}:{end} is empty or exceeds the {} slots of the trace",
                m.n_slots()
            );
        }
        return Ok(SlotRange::new(start, end));
    }
    let split = split_periods(m)?;
    split
        .by_name(text.trim())
        .with_context(|| format!("unknown range `{text}` (expected A-D or start:end)"))
}

fn read_users(path: &Option<PathBuf>, m: &AvailabilityMatrix) -> Result<Vec<String>> {
    match path {
        None => Ok(m.users().to_vec()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let users: Vec<String> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
            if users.is_empty() {
                bail!("{} lists no users", p.display());
            }
            Ok(users)
        }
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_trace(path: &Path) -> Result<AvailabilityMatrix> {
    Ok(AvailabilityMatrix::load(path)?)
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let file = File::open(&a.events).with_context(|| format!("opening {}", a.events.display()))?;
    let events = read_events_csv(BufReader::new(file), &a.events.display().to_string())?;
    let mut m = ingest_events(&events, a.origin, a.slot_seconds, a.slots)?;
    if a.drop_inactive {
        m = m.drop_inactive_users();
    }
    write_file(&a.out, |w| m.write_to(w))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let groups = load_profiles(&a.profiles)?;
    let m = generate_trace(&expand_groups(&groups), a.weeks, a.seed)?;
    write_file(&a.out, |w| m.write_to(w))
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let m = load_trace(&a.trace)?;
    let split = split_periods(&m)?;
    write_file(&a.out, |w| {
        writeln!(w, "period,start,end")?;
        for (name, r) in split.periods() {
            writeln!(w, "{name},{},{}", r.start, r.end)?;
        }
        Ok(())
    })
}

fn cmd_filter(a: FilterArgs) -> Result<()> {
    let m = load_trace(&a.trace)?;
    let range = resolve_range(&a.range, &m)?;
    let users = filter_superpeers(&m, range, a.threshold)?;
    write_file(&a.out, |w| users.iter().try_for_each(|u| writeln!(w, "{u}")))
}

fn design(d: &DesignArgs) -> Result<availcast::features::DesignMatrix> {
    let m = load_trace(&d.trace)?;
    let obs = resolve_range(&d.obs, &m)?;
    let labels = resolve_range(&d.labels, &m)?;
    let users = read_users(&d.users, &m)?;
    Ok(build_design_matrix(&m, obs, labels, &users, !d.raw)?)
}

fn cmd_features(a: FeaturesArgs) -> Result<()> {
    let x = design(&a.design)?;
    write_file(&a.out, |w| x.write_csv(w))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut x = design(&a.design)?;
    if let Some(list) = &a.features {
        let fs: Vec<Feature> = list
            .split(',')
            .map(|k| Feature::parse(k.trim()).with_context(|| format!("unknown feature `{k}`")))
            .collect::<Result<_>>()?;
        x = x.select(&fs)?;
    }
    let model = TrainedModel::fit(&x, a.batches, &FitOptions::default())?;
    if !model.posterior.converged {
        eprintln!(
            "warning: Newton iterations did not converge (gradient norm {:e})",
            model.posterior.final_grad_norm
        );
    }
    write_file(&a.out, |w| model.write_to(w))
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let m = load_trace(&a.trace)?;
    let obs = resolve_range(&a.obs, &m)?;
    let target = resolve_range(&a.range, &m)?;
    let users = read_users(&a.users, &m)?;
    let p = model.predict_period(&m, obs, target, &users)?;
    write_file(&a.out, |w| p.write_to(w))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let p = PredictionMatrix::load(&a.pred)?;
    let m = load_trace(&a.labels)?;
    let range = resolve_range(&a.range, &m)?;
    let s = p.score_against(&m, range)?;
    let mut rows = vec![
        ("auc".to_string(), "all".to_string(), auc(&s)?),
        ("gm".to_string(), "all".to_string(), gm(&s)?),
    ];
    let (on, off) = s.class_accuracy();
    rows.extend(on.map(|v| ("accuracy".to_string(), "online".to_string(), v)));
    rows.extend(off.map(|v| ("accuracy".to_string(), "offline".to_string(), v)));
    out_dir(&a.out)?;
    write_file(&a.out.join("metrics.csv"), |w| write_metric_report(w, &rows))?;
    let roc = roc_points(&s)?;
    write_file(&a.out.join("roc.csv"), |w| {
        write_two_columns(
            w,
            ("fpr", "tpr"),
            roc.iter().map(|&(x, y)| (format!("{x:.6}"), format!("{y:.6}"))),
        )
    })?;
    for (name, metric) in [("auc_over_time.csv", Metric::Auc), ("gm_over_time.csv", Metric::Gm)] {
        let series = metric_over_time(&s, a.window, metric)?;
        write_file(&a.out.join(name), |w| {
            write_two_columns(
                w,
                ("slot", "value"),
                series.iter().map(|&(t, v)| (t, format!("{v:.6}"))),
            )
        })?;
    }
    Ok(())
}

fn cmd_cluster(a: ClusterArgs) -> Result<()> {
    let m = load_trace(&a.trace)?;
    let range = match &a.range {
        Some(r) => resolve_range(r, &m)?,
        None => SlotRange::new(0, m.slots_per_week()?),
    };
    let r = kmeans_availability(&m, range, a.k, a.seed, a.restarts)?;
    write_file(&a.out, |w| write_clusters(w, &r))
}

/// Predictions and the matching rows of the trace, in prediction order.
fn sim_inputs(c: &SimCommon) -> Result<(PredictionMatrix, AvailabilityMatrix, AvailabilityMatrix)> {
    let p = PredictionMatrix::load(&c.pred)?;
    let full = load_trace(&c.trace)?;
    let actual = full.select_users(p.users())?;
    Ok((p, actual, full))
}

fn replicas_from(
    c: &SimCommon,
    given: Option<usize>,
    p: &PredictionMatrix,
    full: &AvailabilityMatrix,
) -> Result<usize> {
    match given {
        Some(n) => Ok(n),
        None => {
            let range = resolve_range(&c.avail_range, full)?;
            let a_bar = average_availability(full, p.users(), range)?;
            Ok(redundancy_for_target(a_bar, c.target_unavail)?)
        }
    }
}

fn write_sim(dir: &Path, name: &str, rows: &[sim_dht::SimRow]) -> Result<()> {
    out_dir(dir)?;
    write_file(&dir.join(format!("{name}.csv")), |w| sim_dht::write_sim_report(w, rows))?;
    write_file(&dir.join(format!("{name}_summary.csv")), |w| {
        sim_dht::write_sim_summary(w, rows)
    })
}

fn cmd_sim_dht(a: SimDhtArgs) -> Result<()> {
    let c = &a.common;
    let (p, actual, full) = sim_inputs(c)?;
    let cfg = DhtConfig {
        replicas: replicas_from(c, a.replicas, &p, &full)?,
        sample_size: c.sample_size,
        repetitions: c.repetitions,
        iterations: a.iterations,
        seed: c.seed,
    };
    let rows = sim_dht::run_dht_experiment(&p, &actual, &cfg)?;
    write_sim(&c.out, "dht", &rows)
}

fn cmd_sim_f2f(a: SimF2fArgs) -> Result<()> {
    let c = &a.common;
    let (p, actual, full) = sim_inputs(c)?;
    let ref_range = resolve_range(&c.avail_range, &full)?;
    let cfg = F2fConfig {
        capacity: replicas_from(c, a.capacity, &p, &full)?,
        sample_size: c.sample_size,
        degree: a.degree,
        rewire_p: a.rewire,
        repetitions: c.repetitions,
        max_sweeps: a.max_sweeps,
        seed: c.seed,
    };
    let rows = sim_f2f::run_f2f_experiment(&p, &actual, &actual, ref_range, &cfg)?;
    write_sim(&c.out, "f2f", &rows)
}

fn cmd_sim_newsfeed(a: SimNewsfeedArgs) -> Result<()> {
    let p = PredictionMatrix::load(&a.pred)?;
    let full = load_trace(&a.trace)?;
    let actual = full.select_users(p.users())?;
    let train = resolve_range(&a.train_range, &full)?;
    let train_avail: Vec<f64> = (0..actual.n_users())
        .map(|u| actual.online_count(u, train) as f64 / train.len() as f64)
        .collect();
    let n_values: Vec<usize> = (1..=a.max_n).collect();
    let run = simulate_preload(&actual, &p, &train_avail, &n_values)?;
    if !run.capped.is_empty() {
        eprintln!(
            "note: n values {:?} exceed the {} users and select everyone offline",
            run.capped,
            p.n_users()
        );
    }
    let band = permutation_band(&run, a.permutations, a.block.unwrap_or(full.slots_per_day()?), a.seed);
    out_dir(&a.out)?;
    write_file(&a.out.join("newsfeed.csv"), |w| write_curve(w, &run))?;
    write_file(&a.out.join("newsfeed_band.csv"), |w| {
        write_two_columns(
            w,
            ("n", "band"),
            run.n_values.iter().zip(&band).map(|(n, b)| (n, format!("{b:.6}"))),
        )
    })
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            overrides.push((k.to_string(), v));
        }
    };
    push("trace", a.trace.map(|p| p.display().to_string()));
    push("profiles", a.profiles.map(|p| p.display().to_string()));
    push("weeks", a.weeks.map(|w| w.to_string()));
    push("seed", a.seed.map(|s| s.to_string()));
    push("filter", a.filter);
    push("simulators", a.simulators);
    push("sample_size", a.sample_size.map(|s| s.to_string()));
    push("repetitions", a.repetitions.map(|s| s.to_string()));
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    for (k, v) in &overrides {
        cfg.set(k, v)?;
    }
    if cfg.source.is_none() {
        bail!("no trace source: pass --trace, --profiles or a config naming one");
    }
    let report = run_experiment(&cfg)?;
    report.write_dir(&a.out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Split(a) => cmd_split(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Features(a) => cmd_features(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::SimDht(a) => cmd_sim_dht(a),
        Command::SimF2f(a) => cmd_sim_f2f(a),
        Command::SimNewsfeed(a) => cmd_sim_newsfeed(a),
        Command::Run(a) => cmd_run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
