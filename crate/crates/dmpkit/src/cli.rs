//! `dmpkit` command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use dmpkit_core::control::delay_margin;
use dmpkit_core::correction::CorrectionError;
use dmpkit_core::dmp::DmpError;
use dmpkit_core::rnn::{
    detect_stream, evaluate, extract_windows, sweep_window, synth_quiet, synth_transients, train, Recording, RnnError,
    WindowSpec,
};
use dmpkit_core::sim::{reference_dmp, SimError};
use dmpkit_core::{
    merge_and_refit, run_scenario, CorrectionInput, Dmp, NoiseConfig, Perturbation, Scenario, Trajectory,
    TrajectoryError,
};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{resolve_seed, Config, ConfigError, Preset};
use crate::formats::{self, FormatError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Format(FormatError::NonFinite(_)) | Self::Numeric(_) => 3,
            Self::Format(_) | Self::Input(_) => 1,
            Self::Config(_) => 2,
        }
    }
}

impl From<DmpError> for CliError {
    fn from(e: DmpError) -> Self {
        match e {
            DmpError::NonFinite(_) | DmpError::Trajectory(TrajectoryError::NonFinite { .. }) => {
                Self::Numeric(e.to_string())
            }
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<CorrectionError> for CliError {
    fn from(e: CorrectionError) -> Self {
        match e {
            CorrectionError::Lambda(_) => Self::Config(ConfigError::Invalid(e.to_string())),
            CorrectionError::Singular => Self::Numeric(e.to_string()),
            CorrectionError::Fit(f) => f.into(),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<RnnError> for CliError {
    fn from(e: RnnError) -> Self {
        match e {
            RnnError::NonFinite => Self::Numeric(e.to_string()),
            RnnError::Config(_) => Self::Config(ConfigError::Invalid(e.to_string())),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Dmp(d) => d.into(),
            _ => Self::Config(ConfigError::Invalid(e.to_string())),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dmpkit",
    version,
    about = "Movement primitives, corrective merging, coupled control and transient detection"
)]
pub struct Cli {
    /// Print a machine-readable JSON summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// TOML or JSON configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Random seed (falls back to the config, then DMPKIT_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a primitive from a demonstration CSV.
    Fit {
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
        /// Time constant; defaults to the demonstration's duration.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        n_basis: Option<usize>,
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
    },
    /// Integrate a primitive and write the trajectory.
    Rollout {
        #[arg(long, value_name = "JSON")]
        dmp: PathBuf,
        /// Seconds; defaults to the primitive's time constant.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Join a deficient trajectory to a correction and refit.
    Merge {
        #[arg(long, value_name = "CSV")]
        deficient: PathBuf,
        #[arg(long, value_name = "CSV")]
        corrective: PathBuf,
        /// Smoothing weight.
        #[arg(long)]
        lambda: Option<f64>,
        /// Time constant of the refit; defaults to the merged duration.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        #[arg(long, value_name = "JSON")]
        dmp_out: PathBuf,
    },
    /// Run the plant and controller on a perturbation scenario.
    Simulate {
        #[arg(long, value_enum, default_value_t = ScenarioKind::None)]
        scenario: ScenarioKind,
        /// Overrides the configured preset.
        #[arg(long, value_enum)]
        controller: Option<Preset>,
        #[arg(long)]
        delay_ms: Option<f64>,
        #[arg(long, overrides_with = "no_noise")]
        noise: bool,
        #[arg(long, overrides_with = "noise")]
        no_noise: bool,
        #[arg(long)]
        duration: Option<f64>,
        /// Primitive to execute; the built-in planar reach when absent.
        #[arg(long, value_name = "JSON")]
        dmp: Option<PathBuf>,
        /// Per-step log CSV.
        #[arg(long, value_name = "CSV")]
        out: Option<PathBuf>,
    },
    /// Generate synthetic torque recordings.
    GenData {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        n_recordings: Option<usize>,
        #[arg(long)]
        n_samples: Option<usize>,
        /// Write one transient-free recording of this many samples instead.
        #[arg(long, value_name = "SAMPLES")]
        quiet: Option<usize>,
    },
    /// Train a classifier for a fixed window on the first half of the recordings.
    TrainDetector {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long)]
        n_pre: usize,
        #[arg(long)]
        n_post: usize,
        /// Negatives per positive; the configured final ratio when absent.
        #[arg(long)]
        ratio: Option<usize>,
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
    },
    /// Search for the smallest window that classifies held-out data perfectly.
    Sweep {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
        /// Every trial of the search as JSON.
        #[arg(long, value_name = "JSON")]
        report: Option<PathBuf>,
    },
    /// Stream a torque CSV through a trained classifier.
    Detect {
        #[arg(long, value_name = "JSON")]
        model: PathBuf,
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
        /// Seconds; the configured value when absent.
        #[arg(long)]
        refractory: Option<f64>,
        /// Detections as CSV.
        #[arg(long, value_name = "CSV")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioKind {
    Stop,
    Move,
    None,
}

impl ScenarioKind {
    fn perturbation(self) -> Perturbation {
        match self {
            Self::Stop => Perturbation::stop(),
            Self::Move => Perturbation::push(),
            Self::None => Perturbation::None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Stop => "stop",
            Self::Move => "move",
            Self::None => "none",
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            if cli.json {
                print!("{}", formats::json_string(&summary));
            } else {
                print_human(&summary);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn print_human(summary: &Value) {
    let Value::Object(map) = summary else {
        println!("{summary}");
        return;
    };
    for (key, value) in map {
        match value {
            Value::String(s) => println!("{key}: {s}"),
            other => println!("{key}: {other}"),
        }
    }
}

/// Runs the parsed command and returns its summary.
pub fn execute(cli: &Cli) -> Result<Value, CliError> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match &cli.command {
        Command::Fit { input, tau, n_basis, out } => fit(&config, input, *tau, *n_basis, out),
        Command::Rollout { dmp, duration, dt, out } => rollout(&config, dmp, *duration, *dt, out),
        Command::Merge { deficient, corrective, lambda, tau, out, dmp_out } => {
            merge(&config, deficient, corrective, *lambda, *tau, out, dmp_out)
        }
        Command::Simulate { scenario, controller, delay_ms, noise, no_noise, duration, dmp, out } => {
            let noise = if *noise {
                true
            } else if *no_noise {
                false
            } else {
                config.sim.noise
            };
            let opts = SimulateOptions {
                scenario: *scenario,
                preset: controller.unwrap_or(config.controller.preset),
                delay: delay_ms.map(|ms| ms / 1000.0),
                noise,
                duration: *duration,
                seed: resolve_seed(cli.seed, config.sim.seed)?,
            };
            simulate(&config, &opts, dmp.as_deref(), out.as_deref())
        }
        Command::GenData { out, n_recordings, n_samples, quiet } => {
            let seed = resolve_seed(cli.seed, config.detector.seed)?;
            gen_data(&config, seed, out, *n_recordings, *n_samples, *quiet)
        }
        Command::TrainDetector { data, n_pre, n_post, ratio, out } => {
            let seed = resolve_seed(cli.seed, config.detector.seed)?;
            let spec = WindowSpec { n_pre: *n_pre, n_post: *n_post };
            train_detector(&config, seed, data, spec, ratio.unwrap_or(config.detector.final_ratio), out)
        }
        Command::Sweep { data, out, report } => {
            let seed = resolve_seed(cli.seed, config.detector.seed)?;
            sweep(&config, seed, data, out, report.as_deref())
        }
        Command::Detect { model, input, refractory, out } => {
            detect(model, input, refractory.unwrap_or(config.detector.refractory), out.as_deref())
        }
    }
}

fn positive_flag(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::Invalid(format!("--{name} must be positive, got {v}")).into())
    }
}

fn fit(config: &Config, input: &Path, tau: Option<f64>, n_basis: Option<usize>, out: &Path) -> Result<Value, CliError> {
    let demo = formats::read_trajectory(input)?;
    let tau = positive_flag("tau", tau.or(config.dmp.tau).unwrap_or(demo.duration()))?;
    let mut cfg = config.dmp.fit_config(tau);
    if let Some(n) = n_basis {
        if n == 0 {
            return Err(ConfigError::Invalid("--n-basis must be positive".into()).into());
        }
        cfg.n_basis = n;
    }
    let (dmp, diag) = Dmp::fit_with_diagnostics(&demo, &cfg)?;
    let replay = dmp.rollout(demo.duration(), demo.dt())?;
    let rmse = relative_rmse(&demo, &replay);
    if !rmse.is_finite() {
        return Err(CliError::Numeric("reconstruction is not finite".into()));
    }
    formats::write_dmp(&dmp, out)?;
    Ok(json!({
        "command": "fit",
        "samples": demo.len(),
        "dims": dmp.dims(),
        "n_basis": dmp.n_basis(),
        "tau": dmp.tau(),
        "degenerate_channels": diag.degenerate_channels,
        "relative_rmse": rmse,
        "out": out.display().to_string(),
    }))
}

/// Reconstruction error over the shared samples, relative to the demo's range.
fn relative_rmse(demo: &Trajectory, replay: &Trajectory) -> f64 {
    let n = demo.len().min(replay.len());
    let mut sum = 0.0;
    for k in 0..n {
        for (a, b) in demo.sample(k).iter().zip(replay.sample(k)) {
            sum += (a - b).powi(2);
        }
    }
    let rmse = (sum / (n * demo.dims()) as f64).sqrt();
    let range = demo.range();
    if range > 0.0 {
        rmse / range
    } else {
        rmse
    }
}

fn rollout(
    config: &Config,
    dmp_path: &Path,
    duration: Option<f64>,
    dt: Option<f64>,
    out: &Path,
) -> Result<Value, CliError> {
    let dmp = formats::read_dmp(dmp_path)?;
    let dt = positive_flag("dt", dt.unwrap_or(config.dmp.dt))?;
    let duration = duration.unwrap_or(dmp.tau());
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(ConfigError::Invalid("--duration must be non-negative".into()).into());
    }
    let traj = dmp.rollout(duration, dt)?;
    formats::write_trajectory(&traj, out)?;
    Ok(json!({
        "command": "rollout",
        "samples": traj.len(),
        "duration": traj.duration(),
        "final": traj.last(),
        "out": out.display().to_string(),
    }))
}

fn merge(
    config: &Config,
    deficient: &Path,
    corrective: &Path,
    lambda: Option<f64>,
    tau: Option<f64>,
    out: &Path,
    dmp_out: &Path,
) -> Result<Value, CliError> {
    let y_d = formats::read_trajectory(deficient)?;
    let y_cr = formats::read_trajectory(corrective)?;
    let lambda = lambda.unwrap_or(config.dmp.lambda);
    let input = CorrectionInput::new(y_d, y_cr, lambda)?;
    let tau = match tau.or(config.dmp.tau) {
        Some(t) => t,
        None => dmpkit_core::merge(&input)?.merged.duration(),
    };
    let tau = positive_flag("tau", tau)?;
    let (result, dmp) = merge_and_refit(&input, &config.dmp.fit_config(tau))?;
    formats::write_trajectory(&result.merged, out)?;
    formats::write_dmp(&dmp, dmp_out)?;
    Ok(json!({
        "command": "merge",
        "split_index": result.split_index,
        "samples": result.merged.len(),
        "lambda": lambda,
        "tau": tau,
        "out": out.display().to_string(),
        "dmp_out": dmp_out.display().to_string(),
    }))
}

struct SimulateOptions {
    scenario: ScenarioKind,
    preset: Preset,
    delay: Option<f64>,
    noise: bool,
    duration: Option<f64>,
    seed: u64,
}

fn simulate(
    config: &Config,
    opts: &SimulateOptions,
    dmp: Option<&Path>,
    out: Option<&Path>,
) -> Result<Value, CliError> {
    let dmp = match dmp {
        Some(p) => formats::read_dmp(p)?,
        None => reference_dmp(),
    };
    let gains = config.controller.gains(opts.preset);
    gains.validate().map_err(|m| ConfigError::Invalid(format!("controller: {m}")))?;
    let noise = if opts.noise { config.sim.noise(opts.seed) } else { NoiseConfig::ideal() };
    let scenario = Scenario {
        gains,
        noise,
        perturbation: opts.scenario.perturbation(),
        delay: opts.delay.unwrap_or(config.sim.delay),
        dt: config.sim.dt,
        duration: opts.duration.unwrap_or(config.sim.duration),
    };
    let result = run_scenario(&dmp, &scenario)?;
    if let Some(path) = out {
        formats::write_sim_log(&result, path)?;
    }
    let m = &result.metrics;
    let span = dmp.goal().iter().zip(dmp.start()).map(|(g, s)| (g - s).powi(2)).sum::<f64>().sqrt();
    let unstable = result.diverged || result.aborted;
    Ok(json!({
        "command": "simulate",
        "scenario": opts.scenario.name(),
        "controller": match opts.preset { Preset::Proposed => "proposed", Preset::Legacy => "legacy" },
        "seed": opts.seed,
        "noise": opts.noise,
        "delay": scenario.delay,
        "delay_margin": delay_margin(gains.k_p, gains.k_v),
        "steps": result.log.len(),
        "unstable": unstable,
        "aborted": result.aborted,
        "range": result.range,
        "max_accel": m.max_accel,
        "final_goal_error": m.final_goal_error,
        "relative_goal_error": if span > 0.0 { m.final_goal_error / span } else { m.final_goal_error },
        "recovery_time": m.recovery_time,
        "slowdown_ratio": m.slowdown_ratio,
        "max_tracking_error": m.max_tracking_error,
        "max_reference_deviation": m.max_reference_deviation,
    }))
}

fn gen_data(
    config: &Config,
    seed: u64,
    out: &Path,
    n_recordings: Option<usize>,
    n_samples: Option<usize>,
    quiet: Option<usize>,
) -> Result<Value, CliError> {
    let mut cfg = config.detector.synth.synth_config(seed);
    cfg.n_recordings = n_recordings.unwrap_or(cfg.n_recordings);
    cfg.n_samples = n_samples.unwrap_or(cfg.n_samples);
    let recordings = match quiet {
        Some(n) => vec![Recording { torques: synth_quiet(&cfg, n)?, peaks: Vec::new() }],
        None => synth_transients(&cfg)?,
    };
    formats::write_recordings(&recordings, out)?;
    Ok(json!({
        "command": "gen-data",
        "seed": seed,
        "recordings": recordings.len(),
        "samples": recordings.iter().map(|r| r.torques.len()).sum::<usize>(),
        "channels": cfg.n_channels,
        "transients": recordings.iter().map(|r| r.peaks.len()).sum::<usize>(),
        "out": out.display().to_string(),
    }))
}

fn split_halves(recordings: &[Recording]) -> Result<(&[Recording], &[Recording]), CliError> {
    if recordings.len() < 2 {
        return Err(CliError::Input("need at least two recordings to hold some out".into()));
    }
    Ok(recordings.split_at(recordings.len() / 2))
}

fn metrics_json(m: &dmpkit_core::rnn::DetectorMetrics) -> Value {
    json!({
        "tp": m.true_positives,
        "tn": m.true_negatives,
        "fp": m.false_positives,
        "fn": m.false_negatives,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
    })
}

fn train_detector(
    config: &Config,
    seed: u64,
    data: &Path,
    spec: WindowSpec,
    ratio: usize,
    out: &Path,
) -> Result<Value, CliError> {
    if ratio == 0 {
        return Err(ConfigError::Invalid("--ratio must be positive".into()).into());
    }
    let recordings = formats::read_recordings(data)?;
    let (train_set, test_set) = split_halves(&recordings)?;
    let train_data = extract_windows(train_set, spec, ratio)?;
    let test_data = extract_windows(test_set, spec, ratio)?;
    let trained = train(&train_data, &config.detector.train_config(seed))?;
    let metrics = evaluate(&trained.model, &test_data)?;
    formats::write_model(&trained.model, out)?;
    Ok(json!({
        "command": "train-detector",
        "seed": seed,
        "n_pre": spec.n_pre,
        "n_post": spec.n_post,
        "negatives_per_positive": ratio,
        "train_windows": train_data.len(),
        "initial_loss": trained.initial_loss,
        "final_loss": trained.final_loss,
        "held_out": metrics_json(&metrics),
        "out": out.display().to_string(),
    }))
}

fn sweep(config: &Config, seed: u64, data: &Path, out: &Path, report: Option<&Path>) -> Result<Value, CliError> {
    let recordings = formats::read_recordings(data)?;
    let outcome = sweep_window(&recordings, &config.detector.sweep_config(seed))?;
    formats::write_model(&outcome.model, out)?;
    let rows: Vec<Value> = outcome
        .rows
        .iter()
        .map(|r| {
            json!({
                "n_pre": r.spec.n_pre,
                "n_post": r.spec.n_post,
                "negatives_per_positive": r.negatives_per_positive,
                "test_positives": r.test_positives,
                "test_negatives": r.test_negatives,
                "metrics": metrics_json(&r.metrics),
            })
        })
        .collect();
    if let Some(path) = report {
        formats::write_json(&rows, path)?;
    }
    let last = outcome.rows.last().map(|r| metrics_json(&r.metrics));
    Ok(json!({
        "command": "sweep",
        "seed": seed,
        "n_pre": outcome.chosen.n_pre,
        "n_post": outcome.chosen.n_post,
        "perfect": outcome.perfect,
        "trials": outcome.rows.len(),
        "final": last,
        "out": out.display().to_string(),
    }))
}

fn detect(model: &Path, input: &Path, refractory: f64, out: Option<&Path>) -> Result<Value, CliError> {
    if !(refractory >= 0.0 && refractory.is_finite()) {
        return Err(ConfigError::Invalid("--refractory must be non-negative".into()).into());
    }
    let model = formats::read_model(model)?;
    let stream = formats::read_trajectory(input)?;
    let detections = detect_stream(&model, &stream, refractory)?;
    if let Some(path) = out {
        formats::write_detections(&detections, path)?;
    }
    let list: Vec<Value> = detections
        .iter()
        .map(|d| json!({ "index": d.index, "peak_index": d.peak_index, "time": d.time, "confidence": d.confidence }))
        .collect();
    Ok(json!({
        "command": "detect",
        "samples": stream.len(),
        "count": detections.len(),
        "detections": list,
    }))
}
