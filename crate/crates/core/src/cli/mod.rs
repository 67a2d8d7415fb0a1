//! The `mapctl` command line. Everything the binary does lives here so it
//! can be driven from tests with an argument vector.
//!
//! `--config` carries whatever the positional argument does not:
//!
//! | subcommand      | positional              | `--config`            |
//! |-----------------|-------------------------|-----------------------|
//! | `fit-tires`     | cornering log CSV       | vehicle JSON          |
//! | `gen-lut`       | vehicle JSON            | [`LutJob`]            |
//! | `tune`          | raceline                | [`ExperimentSpec`]    |
//! | `simulate`      | raceline                | [`SimulateConfig`]    |
//! | `sweep`         | spec JSON (optional)    | spec, if no positional|
//! | `ablation`      | spec JSON (optional)    | spec, if no positional|
//! | `gen-sweep-log` | profile JSON (optional) | vehicle JSON          |
//!
//! A raceline is a CSV path or `builtin:oval` / `builtin:reference`.

mod output;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

use crate::control::{ControlError, Controller, ControllerConfig, ControllerVariant};
use crate::lut::{build_lut, LutError, LutGrid, LutModel, SolverTolerances};
use crate::raceline::{scale_profile, tracks, RacelineError};
use crate::sim::{
    ablation_report, build_controllers, run_lap_batch, velocity_sweep, ExperimentError, ExperimentSpec, Plant,
    RowStatus, RunOutcome, SimConfig, SimError,
};
use crate::tire_fit::{fit_linear, fit_pacejka, generate_sweep_log, load_samples, regress_linear, FitError, SweepProfile};
use crate::vehicle::TireModel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
/// Every run of the command crashed or timed out. Outputs are still written.
pub const EXIT_CRASHED: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "mapctl", version, about = "MAP lateral control: tire fitting, lookup tables and racing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config for the subcommand (see `mapctl <cmd> --help`).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out_dir: PathBuf,
    /// Format of tables and reports. Lookup tables and traces are always CSV.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads for independent runs. Output never depends on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit Magic Formula and linear tires to a steady-state cornering log.
    /// `--config` is a vehicle JSON.
    FitTires { log: PathBuf },
    /// Build a steering lookup table for a vehicle JSON. `--config` sets
    /// model, grid and tolerances.
    GenLut { vehicle: PathBuf },
    /// Grid-search the lookahead schedule of each variant. `--config` is an
    /// experiment spec.
    Tune { raceline: String },
    /// Drive one controller around a raceline. `--config` is a simulate config.
    Simulate { raceline: String },
    /// Speed-scale sweep over every variant.
    Sweep { spec: Option<PathBuf> },
    /// Two-scale comparison of every variant.
    Ablation { spec: Option<PathBuf> },
    /// Synthetic ramp-steer identification log. `--config` is a vehicle JSON.
    GenSweepLog { profile: Option<PathBuf> },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}\nexpected JSON of this shape (defaults shown):\n{schema}")]
    Config {
        path: PathBuf,
        source: serde_json::Error,
        schema: String,
    },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Lut(#[from] LutError),
    #[error(transparent)]
    Raceline(#[from] RacelineError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Whether anything got around the track.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    CrashedOnly,
}

/// Settings of `gen-lut`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LutJob {
    pub model: LutSource,
    pub grid: LutGrid,
    pub tolerances: SolverTolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LutSource {
    /// Single-track model with the vehicle's tires.
    #[default]
    SingleTrack,
    Kinematic,
}

/// Settings of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Speed scale applied to the raceline profile.
    pub scale: f64,
    pub plant: Plant,
    pub sim: SimConfig,
    /// Variant and lookahead schedule of the controller.
    pub controller: ControllerConfig,
    pub lut_grid: LutGrid,
    pub lut_tolerances: SolverTolerances,
    /// Tires of the linear table; regressed from the plant when absent.
    pub linear_tires: Option<TireModel>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scale: 0.6,
            plant: Plant::default(),
            sim: SimConfig::default(),
            controller: ControllerConfig::default(),
            lut_grid: LutGrid::default(),
            lut_tolerances: SolverTolerances::default(),
            linear_tires: None,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
        }
    };
    match execute(&cli) {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::CrashedOnly) => EXIT_CRASHED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

/// Runs a parsed command, on a pool of `--workers` threads if given.
pub fn execute(cli: &Cli) -> Result<Status, CliError> {
    match cli.workers {
        None => dispatch(cli),
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?
            .install(|| dispatch(cli)),
    }
}

fn dispatch(cli: &Cli) -> Result<Status, CliError> {
    let out = output::OutDir::create(&cli.out_dir, cli.format)?;
    match &cli.command {
        Command::FitTires { log } => fit_tires(cli, &out, log),
        Command::GenLut { vehicle } => gen_lut(cli, &out, vehicle),
        Command::Tune { raceline } => tune(cli, &out, raceline),
        Command::Simulate { raceline } => simulate(cli, &out, raceline),
        Command::Sweep { spec } => sweep(cli, &out, spec.as_deref()),
        Command::Ablation { spec } => ablation(cli, &out, spec.as_deref()),
        Command::GenSweepLog { profile } => gen_sweep_log(cli, &out, profile.as_deref()),
    }
}

fn read_json<T: DeserializeOwned + Serialize + Default>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
        schema: serde_json::to_string_pretty(&T::default()).unwrap_or_default(),
    })
}

fn config_or_default<T: DeserializeOwned + Serialize + Default>(path: Option<&Path>) -> Result<T, CliError> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

/// The spec comes from the positional file or from `--config`, not both.
fn positional_or_config<T: DeserializeOwned + Serialize + Default>(
    cli: &Cli,
    positional: Option<&Path>,
) -> Result<T, CliError> {
    match (positional, cli.config.as_deref()) {
        (Some(_), Some(_)) => Err(CliError::Usage("give the spec either as argument or with --config".into())),
        (p, c) => config_or_default(p.or(c)),
    }
}

fn fit_tires(cli: &Cli, out: &output::OutDir, log: &Path) -> Result<Status, CliError> {
    let plant: Plant = config_or_default(cli.config.as_deref())?;
    plant.params.validate().map_err(FitError::from)?;
    let samples = load_samples(log)?;
    let pacejka = fit_pacejka(&samples, &plant.params)?;
    let linear = fit_linear(&samples, &plant.params)?;
    out.fit_report(&pacejka, &linear)?;
    out.json("vehicle_pacejka.json", &Plant { tires: pacejka.tire_model(), ..plant })?;
    out.json("vehicle_linear.json", &Plant { tires: linear.tire_model(), ..plant })?;
    let (f, r) = (pacejka.params.front, pacejka.params.rear);
    println!("front B={:.4} C={:.4} D={:.4} E={:.4}", f.b, f.c, f.d, f.e);
    println!("rear  B={:.4} C={:.4} D={:.4} E={:.4}", r.b, r.c, r.d, r.e);
    println!(
        "linear front={:.2} rear={:.2} N/rad, rejected {:.1}%",
        linear.params.front,
        linear.params.rear,
        100.0 * pacejka.rejected_fraction
    );
    Ok(Status::Ok)
}

fn gen_lut(cli: &Cli, out: &output::OutDir, vehicle: &Path) -> Result<Status, CliError> {
    let plant: Plant = read_json(vehicle)?;
    let job: LutJob = config_or_default(cli.config.as_deref())?;
    let model = match job.model {
        LutSource::SingleTrack => LutModel::SingleTrack { tires: plant.tires },
        LutSource::Kinematic => LutModel::Kinematic,
    };
    let lut = build_lut(&job.grid, &plant.params, &model, &job.tolerances)?;
    out.lut(&lut)?;
    println!("{} table, {} x {} cells, hash {}", model.name(), job.grid.v.len(), job.grid.delta.len(), lut.params_hash());
    Ok(Status::Ok)
}

fn experiment_spec(cli: &Cli, positional: Option<&Path>) -> Result<ExperimentSpec, CliError> {
    let mut spec: ExperimentSpec = positional_or_config(cli, positional)?;
    if let Some(seed) = cli.seed {
        spec.sim.seed = seed;
    }
    Ok(spec)
}

fn tune(cli: &Cli, out: &output::OutDir, raceline: &str) -> Result<Status, CliError> {
    let mut spec = experiment_spec(cli, None)?;
    spec.raceline = raceline.to_string();
    spec.schedules.clear();
    let track = tracks::resolve(raceline)?;
    let prepared = match build_controllers(&spec, &track) {
        Err(ExperimentError::AllCrashed(kind)) => {
            eprintln!("every tuning cell of {kind} crashed");
            return Ok(Status::CrashedOnly);
        }
        r => r?,
    };
    out.tuning(&prepared.tuning)?;
    for t in &prepared.tuning {
        println!("{}: m={} q={} rms={:.5}", t.variant, t.best.m, t.best.q, t.score);
    }
    Ok(Status::Ok)
}

fn simulate(cli: &Cli, out: &output::OutDir, raceline: &str) -> Result<Status, CliError> {
    let mut cfg: SimulateConfig = config_or_default(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    cfg.controller.validate()?;
    let track = scale_profile(&tracks::resolve(raceline)?, cfg.scale)?;
    let kind = cfg.controller.variant;
    let linear = match cfg.linear_tires {
        Some(t) => t,
        None if kind == crate::control::VariantKind::MapLinear => {
            regress_linear(&cfg.plant.params, &cfg.plant.tires, &SweepProfile::default())?
        }
        None => cfg.plant.tires,
    };
    let lut = match kind.lut_model(&cfg.plant.tires, &linear) {
        Some(model) => Some(Arc::new(build_lut(&cfg.lut_grid, &cfg.plant.params, &model, &cfg.lut_tolerances)?)),
        None => None,
    };
    let variant = ControllerVariant::from_kind(kind, lut)?;
    let controller = Controller::new(cfg.controller, variant, &cfg.plant.params)?;
    let batch = run_lap_batch(&cfg.sim, &cfg.plant, &track, &controller)?;
    out.trace(&batch.trace)?;
    out.run_metrics(kind, cfg.scale, &batch)?;
    println!("{kind} at {:.3}: {} laps, {}", cfg.scale, batch.laps.len(), output::outcome_text(&batch.outcome));
    Ok(match batch.outcome {
        RunOutcome::Completed => Status::Ok,
        _ => Status::CrashedOnly,
    })
}

fn sweep(cli: &Cli, out: &output::OutDir, spec_path: Option<&Path>) -> Result<Status, CliError> {
    let spec = experiment_spec(cli, spec_path)?;
    let track = tracks::resolve(&spec.raceline)?;
    let prepared = build_controllers(&spec, &track)?;
    let result = velocity_sweep(&spec, &track, &prepared)?;
    out.sweep(&result)?;
    for (kind, first) in &result.first_failure {
        match first {
            Some(s) => println!("{kind}: first failure at {s}"),
            None => println!("{kind}: completed every scale"),
        }
    }
    Ok(if result.cells.iter().any(|c| c.completed) {
        Status::Ok
    } else {
        Status::CrashedOnly
    })
}

fn ablation(cli: &Cli, out: &output::OutDir, spec_path: Option<&Path>) -> Result<Status, CliError> {
    let spec = experiment_spec(cli, spec_path)?;
    let track = tracks::resolve(&spec.raceline)?;
    let prepared = build_controllers(&spec, &track)?;
    let report = ablation_report(&spec, &track, &prepared)?;
    out.ablation(&report)?;
    for r in &report.rows {
        let status = match r.status {
            RowStatus::Completed => "completed",
            RowStatus::NotCompleted => "N.C.",
        };
        println!("{:.2} {:<13} {:<9} mean|d|={}", r.scale, r.variant.name(), status, output::opt_text(r.mean_abs_d));
    }
    Ok(if report.rows.iter().any(|r| r.status == RowStatus::Completed) {
        Status::Ok
    } else {
        Status::CrashedOnly
    })
}

fn gen_sweep_log(cli: &Cli, out: &output::OutDir, profile_path: Option<&Path>) -> Result<Status, CliError> {
    let mut profile: SweepProfile = config_or_default(profile_path)?;
    if let Some(seed) = cli.seed {
        profile.seed = seed;
    }
    let plant: Plant = config_or_default(cli.config.as_deref())?;
    let log = generate_sweep_log(&profile, &plant.params, &plant.tires)?;
    out.sweep_log(&log)?;
    println!(
        "{} samples, {} outliers{}",
        log.samples.len(),
        log.outlier_count(),
        if log.spun_out { ", ramp ended in a spin" } else { "" }
    );
    Ok(Status::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(args: &[&str]) -> i32 {
        run(std::iter::once("mapctl").chain(args.iter().copied()))
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(code(&["simulate", "builtin:oval", "--bogus"]), EXIT_INVALID);
        assert_eq!(code(&[]), EXIT_INVALID);
        assert_eq!(code(&["--help"]), EXIT_OK);
    }

    #[test]
    fn bad_config_reports_the_expected_shape() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("lut.json");
        std::fs::write(&cfg, r#"{"modle": "kinematic"}"#).unwrap();
        let err = read_json::<LutJob>(&cfg).unwrap_err();
        let text = err.to_string();
        assert!(matches!(err, CliError::Config { .. }), "{text}");
        assert!(text.contains("\"tolerances\""), "{text}");
        let vehicle = dir.path().join("v.json");
        std::fs::write(&vehicle, "{}").unwrap();
        let out = dir.path().join("out");
        let args = ["gen-lut", vehicle.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
        assert_eq!(code(&args), EXIT_INVALID);
    }

    #[test]
    fn zero_workers_is_rejected() {
        assert_eq!(code(&["gen-sweep-log", "--workers", "0", "--out-dir", "/nonexistent/x"]), EXIT_INVALID);
    }

    #[test]
    fn spec_given_twice_is_rejected() {
        let cli = Cli::parse_from(["mapctl", "sweep", "a.json", "--config", "b.json"]);
        assert!(matches!(positional_or_config::<ExperimentSpec>(&cli, Some(Path::new("a.json"))), Err(CliError::Usage(_))));
    }

    #[test]
    fn unknown_builtin_track_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            code(&["simulate", "builtin:nowhere", "--out-dir", dir.path().to_str().unwrap()]),
            EXIT_INVALID
        );
    }
}
