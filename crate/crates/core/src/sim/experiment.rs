//! Tuning, velocity sweeps and the three-variant ablation. Cells are
//! independent runs executed on the rayon pool and merged by index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

use super::{run_lap_batch, Crash, LapBatch, Plant, RunOutcome, SimConfig, SimError, Summary};
use crate::control::{
    ControlError, Controller, ControllerConfig, ControllerVariant, LookaheadSchedule, VariantKind,
};
use crate::lut::{build_lut, LutError, LutGrid, SolverTolerances};
use crate::raceline::{scale_profile, Raceline, RacelineError};
use crate::tire_fit::{regress_linear, FitError, SweepProfile};
use crate::vehicle::TireModel;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Lut(#[from] LutError),
    #[error(transparent)]
    Raceline(#[from] RacelineError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("every tuning cell of {0} crashed")]
    AllCrashed(VariantKind),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningGrid {
    pub m: Vec<f64>,
    pub q: Vec<f64>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            m: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0],
            q: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSpec {
    pub grid: TuningGrid,
    /// Speed scale the schedule is tuned at.
    pub scale: f64,
    pub warmup_laps: usize,
    /// Scored laps after the warm-up.
    pub laps: usize,
}

impl Default for TuningSpec {
    fn default() -> Self {
        Self {
            grid: TuningGrid::default(),
            scale: 0.6,
            warmup_laps: 1,
            laps: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneCell {
    pub m: f64,
    pub q: f64,
    /// Mean lap RMS of the scored laps; absent if the cell crashed.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub variant: VariantKind,
    pub best: LookaheadSchedule,
    pub score: f64,
    pub cells: Vec<TuneCell>,
}

/// Grid search over `(m, q)` at the tuning scale. Each cell drives the
/// warm-up laps and is scored by the mean lap RMS of the following laps;
/// crashed cells never win. Ties go to the larger `m`, then the larger `q`.
pub fn tune_lookahead(
    base: &ControllerConfig,
    variant: &ControllerVariant,
    plant: &Plant,
    raceline: &Raceline,
    tuning: &TuningSpec,
    sim: &SimConfig,
) -> Result<TuneResult, ExperimentError> {
    if tuning.grid.m.is_empty() || tuning.grid.q.is_empty() || tuning.laps == 0 {
        return Err(ExperimentError::Invalid("tuning grid and laps must be non-empty".into()));
    }
    let track = scale_profile(raceline, tuning.scale)?;
    let jobs: Vec<(f64, f64)> = tuning
        .grid
        .m
        .iter()
        .flat_map(|&m| tuning.grid.q.iter().map(move |&q| (m, q)))
        .collect();
    let cfg = SimConfig {
        laps: tuning.warmup_laps + tuning.laps,
        ..*sim
    };
    let cells: Vec<TuneCell> = jobs
        .par_iter()
        .map(|&(m, q)| {
            let schedule = LookaheadSchedule::new(m, q)?;
            let c = Controller::new(base.with_schedule(schedule), variant.clone(), &plant.params)?;
            let run = run_lap_batch(&cfg, plant, &track, &c)?;
            let score = run.completed().then(|| {
                let scored = &run.laps[tuning.warmup_laps..];
                scored.iter().map(|l| l.rms_d).sum::<f64>() / scored.len() as f64
            });
            Ok(TuneCell { m, q, score })
        })
        .collect::<Result<_, ExperimentError>>()?;
    let best = cells
        .iter()
        .filter_map(|c| c.score.map(|s| (c, s)))
        .min_by(|(a, sa), (b, sb)| {
            sa.total_cmp(sb)
                .then(b.m.total_cmp(&a.m))
                .then(b.q.total_cmp(&a.q))
        })
        .ok_or(ExperimentError::AllCrashed(variant.kind()))?;
    Ok(TuneResult {
        variant: variant.kind(),
        best: LookaheadSchedule { m: best.0.m, q: best.0.q },
        score: best.1,
        cells,
    })
}

fn default_scales() -> Vec<f64> {
    (0..=16).map(|i| ((0.6 + 0.025 * i as f64) * 1e6).round() / 1e6).collect()
}

/// Everything a sweep or ablation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// `builtin:<name>` or a raceline CSV path.
    pub raceline: String,
    pub variants: Vec<VariantKind>,
    pub scales: Vec<f64>,
    pub laps: usize,
    pub ablation_scales: Vec<f64>,
    pub ablation_laps: usize,
    pub plant: Plant,
    pub sim: SimConfig,
    /// Shared controller settings; variant and lookahead are set per run.
    pub controller: ControllerConfig,
    /// Fixed lookahead schedules. Variants without one are tuned first.
    pub schedules: BTreeMap<VariantKind, LookaheadSchedule>,
    pub tuning: TuningSpec,
    /// Tires of the linear ablation table. Regressed from a noiseless
    /// ramp-steer log of the plant when absent.
    pub linear_tires: Option<TireModel>,
    pub lut_grid: LutGrid,
    pub lut_tolerances: SolverTolerances,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            raceline: "builtin:reference".into(),
            variants: VariantKind::ALL.to_vec(),
            scales: default_scales(),
            laps: 10,
            ablation_scales: vec![0.7, 0.8],
            ablation_laps: 5,
            plant: Plant::default(),
            sim: SimConfig::default(),
            controller: ControllerConfig::default(),
            schedules: BTreeMap::new(),
            tuning: TuningSpec::default(),
            linear_tires: None,
            lut_grid: LutGrid::default(),
            lut_tolerances: SolverTolerances::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Invalid(m.to_string()));
        let scale_ok = |xs: &[f64]| {
            !xs.is_empty() && xs.windows(2).all(|w| w[1] > w[0]) && xs.iter().all(|&s| s > 0.0 && s <= 1.2)
        };
        if self.variants.is_empty() {
            return bad("at least one variant is required");
        }
        let mut seen = self.variants.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variants.len() {
            return bad("variants must be distinct");
        }
        if !scale_ok(&self.scales) || !scale_ok(&self.ablation_scales) {
            return bad("scales must be ascending and within (0, 1.2]");
        }
        if self.laps == 0 || self.ablation_laps == 0 {
            return bad("laps must be >= 1");
        }
        self.sim.validate()?;
        self.controller.validate()?;
        for s in self.schedules.values() {
            s.validate()?;
        }
        Ok(())
    }
}

/// Tables, schedules and ready controllers for the spec's variants.
#[derive(Debug, Clone)]
pub struct PreparedControllers {
    pub controllers: Vec<Controller>,
    pub tuning: Vec<TuneResult>,
}

/// Builds the lookup tables each variant needs and tunes every variant
/// without a fixed schedule.
pub fn build_controllers(spec: &ExperimentSpec, raceline: &Raceline) -> Result<PreparedControllers, ExperimentError> {
    spec.validate()?;
    let plant = &spec.plant;
    let mut controllers = Vec::new();
    let mut tuning = Vec::new();
    let linear = match spec.linear_tires {
        Some(t) => t,
        None => regress_linear(&plant.params, &plant.tires, &SweepProfile::default())?,
    };
    for &kind in &spec.variants {
        let lut = match kind.lut_model(&plant.tires, &linear) {
            Some(model) => Some(Arc::new(build_lut(&spec.lut_grid, &plant.params, &model, &spec.lut_tolerances)?)),
            None => None,
        };
        let variant = ControllerVariant::from_kind(kind, lut)?;
        let base = ControllerConfig { variant: kind, ..spec.controller };
        let schedule = match spec.schedules.get(&kind) {
            Some(s) => *s,
            None => {
                let t = tune_lookahead(&base, &variant, plant, raceline, &spec.tuning, &spec.sim)?;
                let s = t.best;
                tuning.push(t);
                s
            }
        };
        controllers.push(Controller::new(base.with_schedule(schedule), variant, &plant.params)?);
    }
    Ok(PreparedControllers { controllers, tuning })
}

fn controller_for<'a>(controllers: &'a [Controller], kind: VariantKind) -> Result<&'a Controller, ExperimentError> {
    controllers
        .iter()
        .find(|c| c.variant().kind() == kind)
        .ok_or_else(|| ExperimentError::Invalid(format!("no controller for {kind}")))
}

/// Per-cell seed so cells differ but never depend on scheduling.
fn cell_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs the jobs in parallel and returns results in job order.
fn run_cells(
    jobs: &[(VariantKind, f64)],
    laps: usize,
    spec: &ExperimentSpec,
    raceline: &Raceline,
    controllers: &[Controller],
) -> Result<Vec<LapBatch>, ExperimentError> {
    jobs.par_iter()
        .map(|&(kind, scale)| {
            let c = controller_for(controllers, kind)?;
            let track = scale_profile(raceline, scale)?;
            let cfg = SimConfig {
                laps,
                // same noise for every variant at a given scale
                seed: cell_seed(spec.sim.seed, (scale * 1000.0).round() as usize),
                ..spec.sim
            };
            Ok(run_lap_batch(&cfg, &spec.plant, &track, c)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub variant: VariantKind,
    pub scale: f64,
    pub laps_completed: usize,
    /// All requested laps were driven.
    pub completed: bool,
    pub crash: Option<Crash>,
    pub lap_time: Option<Summary>,
    pub rms: Option<Summary>,
    pub mean_abs_d: Option<f64>,
    pub max_abs_d: Option<f64>,
}

impl CellResult {
    fn from_batch(variant: VariantKind, scale: f64, b: &LapBatch) -> Self {
        let times: Vec<f64> = b.laps.iter().map(|l| l.lap_time).collect();
        let rms: Vec<f64> = b.laps.iter().map(|l| l.rms_d).collect();
        let (mean_abs_d, max_abs_d) = sample_stats(b);
        Self {
            variant,
            scale,
            laps_completed: b.laps.len(),
            completed: b.completed(),
            crash: b.crash().copied(),
            lap_time: Summary::of(&times),
            rms: Summary::of(&rms),
            mean_abs_d,
            max_abs_d,
        }
    }
}

/// Sample-weighted mean |d| and max |d| over completed and partial laps.
fn sample_stats(b: &LapBatch) -> (Option<f64>, Option<f64>) {
    let parts = b.laps.iter().chain(b.partial.iter());
    let (mut n, mut sum, mut max) = (0usize, 0.0, 0.0f64);
    for l in parts {
        n += l.samples;
        sum += l.mean_abs_d * l.samples as f64;
        max = max.max(l.max_abs_d);
    }
    if n == 0 {
        (None, None)
    } else {
        (Some(sum / n as f64), Some(max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub raceline: String,
    pub laps: usize,
    pub schedules: BTreeMap<VariantKind, LookaheadSchedule>,
    pub tuning: Vec<TuneResult>,
    /// Variant-major, scales ascending.
    pub cells: Vec<CellResult>,
    /// First scale at which each variant failed to finish all laps.
    pub first_failure: BTreeMap<VariantKind, Option<f64>>,
}

impl SweepResult {
    pub fn cell(&self, kind: VariantKind, scale: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.variant == kind && c.scale == scale)
    }

    /// Highest scale below which both variants finished every cell.
    pub fn mutual_limit(&self, a: VariantKind, b: VariantKind) -> Option<f64> {
        let mut scales: Vec<f64> = self.cells.iter().filter(|c| c.variant == a).map(|c| c.scale).collect();
        scales.sort_by(f64::total_cmp);
        let mut last = None;
        for s in scales {
            match (self.cell(a, s), self.cell(b, s)) {
                (Some(x), Some(y)) if x.completed && y.completed => last = Some(s),
                _ => break,
            }
        }
        last
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "variant", "scale", "laps_completed", "completed", "crash_lap", "crash_s", "lap_time_min",
            "lap_time_q1", "lap_time_median", "lap_time_q3", "lap_time_max", "rms_min", "rms_q1",
            "rms_median", "rms_q3", "rms_max", "mean_abs_d", "max_abs_d",
        ])?;
        for c in &self.cells {
            let mut rec = vec![
                c.variant.name().to_string(),
                c.scale.to_string(),
                c.laps_completed.to_string(),
                c.completed.to_string(),
                opt(c.crash.map(|x| x.lap as f64)),
                opt(c.crash.map(|x| x.s)),
            ];
            for s in [c.lap_time, c.rms] {
                rec.extend(summary_fields(s));
            }
            rec.push(opt(c.mean_abs_d));
            rec.push(opt(c.max_abs_d));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn summary_fields(s: Option<Summary>) -> [String; 5] {
    match s {
        Some(s) => [s.min, s.q1, s.median, s.q3, s.max].map(|v| v.to_string()),
        None => Default::default(),
    }
}

/// Runs every (variant, scale) cell for `spec.laps` laps.
pub fn velocity_sweep(
    spec: &ExperimentSpec,
    raceline: &Raceline,
    prepared: &PreparedControllers,
) -> Result<SweepResult, ExperimentError> {
    spec.validate()?;
    let jobs: Vec<(VariantKind, f64)> = spec
        .variants
        .iter()
        .flat_map(|&k| spec.scales.iter().map(move |&s| (k, s)))
        .collect();
    let batches = run_cells(&jobs, spec.laps, spec, raceline, &prepared.controllers)?;
    let cells: Vec<CellResult> = jobs
        .iter()
        .zip(&batches)
        .map(|(&(k, s), b)| CellResult::from_batch(k, s, b))
        .collect();
    let first_failure = spec
        .variants
        .iter()
        .map(|&k| (k, cells.iter().find(|c| c.variant == k && !c.completed).map(|c| c.scale)))
        .collect();
    Ok(SweepResult {
        raceline: spec.raceline.clone(),
        laps: spec.laps,
        schedules: schedules_of(&prepared.controllers),
        tuning: prepared.tuning.clone(),
        cells,
        first_failure,
    })
}

fn schedules_of(controllers: &[Controller]) -> BTreeMap<VariantKind, LookaheadSchedule> {
    controllers.iter().map(|c| (c.variant().kind(), c.config().schedule())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Completed,
    /// Not completed: the car crashed or ran out of time.
    #[serde(rename = "N.C.")]
    NotCompleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: VariantKind,
    pub scale: f64,
    pub status: RowStatus,
    pub laps_completed: usize,
    /// Mean over completed laps.
    pub lap_time: Option<f64>,
    pub mean_abs_d: Option<f64>,
    pub max_abs_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub raceline: String,
    pub laps: usize,
    pub schedules: BTreeMap<VariantKind, LookaheadSchedule>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, kind: VariantKind, scale: f64) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == kind && r.scale == scale)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["variant", "scale", "status", "laps_completed", "lap_time", "mean_abs_d", "max_abs_d"])?;
        for r in &self.rows {
            wtr.write_record([
                r.variant.name().to_string(),
                r.scale.to_string(),
                match r.status {
                    RowStatus::Completed => "completed".to_string(),
                    RowStatus::NotCompleted => "N.C.".to_string(),
                },
                r.laps_completed.to_string(),
                opt(r.lap_time),
                opt(r.mean_abs_d),
                opt(r.max_abs_d),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Drives every variant for `spec.ablation_laps` laps at each ablation
/// scale. Crashed runs are reported as N.C. with statistics of everything
/// driven up to the crash.
pub fn ablation_report(
    spec: &ExperimentSpec,
    raceline: &Raceline,
    prepared: &PreparedControllers,
) -> Result<AblationReport, ExperimentError> {
    spec.validate()?;
    let jobs: Vec<(VariantKind, f64)> = spec
        .ablation_scales
        .iter()
        .flat_map(|&s| spec.variants.iter().map(move |&k| (k, s)))
        .collect();
    let batches = run_cells(&jobs, spec.ablation_laps, spec, raceline, &prepared.controllers)?;
    let rows = jobs
        .iter()
        .zip(&batches)
        .map(|(&(variant, scale), b)| {
            let (mean_abs_d, max_abs_d) = sample_stats(b);
            let lap_time = (!b.laps.is_empty())
                .then(|| b.laps.iter().map(|l| l.lap_time).sum::<f64>() / b.laps.len() as f64);
            AblationRow {
                variant,
                scale,
                status: if b.outcome == RunOutcome::Completed {
                    RowStatus::Completed
                } else {
                    RowStatus::NotCompleted
                },
                laps_completed: b.laps.len(),
                lap_time,
                mean_abs_d,
                max_abs_d,
            }
        })
        .collect();
    Ok(AblationReport {
        raceline: spec.raceline.clone(),
        laps: spec.ablation_laps,
        schedules: schedules_of(&prepared.controllers),
        rows,
    })
}
