//! Closed-loop simulation: plant, steering actuator and a controller
//! sampled at a fixed period, plus the experiments built on top of it.

mod analysis;
mod experiment;

pub use analysis::{fit_second_order, quantile, SecondOrderFit, Summary};
pub use experiment::{
    ablation_report, build_controllers, tune_lookahead, velocity_sweep, AblationReport, AblationRow,
    CellResult, ExperimentError, ExperimentSpec, PreparedControllers, RowStatus, SweepResult,
    TuneCell, TuneResult, TuningGrid, TuningSpec,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

use crate::control::{ControlCommand, Controller};
use crate::raceline::{project, split_laps, LapCounter, LapMetrics, Raceline, TraceSample};
use crate::vehicle::{
    dynamics_derivative, rk4_step, TireModel, VehicleError, VehicleParams, VehicleState, V_MIN,
};

/// Sideslip beyond this ends the run as a spin, rad.
const SPIN_SIDESLIP: f64 = std::f64::consts::FRAC_PI_3;
/// Arc-length window for the incremental projection, m.
const PROJECTION_WINDOW: f64 = 2.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
}

/// Where and how the car starts, relative to the raceline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    /// Arc length of the start point, m. Negative values count back from
    /// the start line.
    pub s: f64,
    /// Lateral offset, positive to the left, m.
    pub d: f64,
    /// Heading relative to the raceline, rad.
    pub heading_error: f64,
    /// Initial speed; the local reference speed if absent, m/s.
    pub speed: Option<f64>,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            s: -1.0,
            d: 0.0,
            heading_error: 0.0,
            speed: None,
        }
    }
}

/// Gaussian noise on the pose the controller sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseNoise {
    /// Standard deviation per position axis, m.
    pub position: f64,
    /// Standard deviation of yaw, rad.
    pub yaw: f64,
}

impl PoseNoise {
    pub const NONE: PoseNoise = PoseNoise { position: 0.0, yaw: 0.0 };
}

impl Default for PoseNoise {
    fn default() -> Self {
        Self {
            position: 0.02,
            yaw: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Physics step, s.
    pub dt: f64,
    /// Controller period, s. Must be a whole number of physics steps.
    pub control_period: f64,
    /// First-order steering servo time constant, s.
    pub actuator_tau: f64,
    /// Steering servo rate limit, rad/s.
    pub steer_rate_limit: f64,
    /// Mechanical steering limit of the plant, rad.
    pub steer_limit: f64,
    /// Commands take effect this many control periods late.
    pub delay_ticks: usize,
    pub laps: usize,
    pub seed: u64,
    pub initial: InitialState,
    pub pose_noise: PoseNoise,
    /// Stop after this much simulated time. Defaults to a generous multiple
    /// of the planned lap time.
    pub max_time: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            control_period: 0.02,
            actuator_tau: 0.05,
            steer_rate_limit: 4.0,
            steer_limit: 0.45,
            delay_ticks: 0,
            laps: 10,
            seed: 0,
            initial: InitialState::default(),
            pose_noise: PoseNoise::default(),
            max_time: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::ConfigInvalid(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be > 0", self.dt));
        }
        if !(self.control_period >= self.dt) {
            return bad(format!("control period {} is shorter than dt {}", self.control_period, self.dt));
        }
        let ratio = self.control_period / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad(format!(
                "control period {} is not a multiple of dt {}",
                self.control_period, self.dt
            ));
        }
        if !(self.actuator_tau >= 0.0) || !(self.steer_rate_limit > 0.0) || !(self.steer_limit > 0.0) {
            return bad("actuator tau must be >= 0, rate and steering limits > 0".into());
        }
        if self.laps == 0 {
            return bad("laps must be >= 1".into());
        }
        if !(self.pose_noise.position >= 0.0 && self.pose_noise.yaw >= 0.0) {
            return bad("pose noise must be >= 0".into());
        }
        if let Some(t) = self.max_time {
            if !(t > 0.0) {
                return bad(format!("max_time = {t} must be > 0"));
            }
        }
        Ok(())
    }

    fn physics_steps_per_tick(&self) -> usize {
        (self.control_period / self.dt).round() as usize
    }
}

/// Physical car: parameters and the true tire law.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Plant {
    pub params: VehicleParams,
    pub tires: TireModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crash {
    /// Index of the lap being driven, 0 for the first timed lap. The run-in
    /// before the first start-line crossing also counts as 0.
    pub lap: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub s: f64,
    pub d: f64,
    /// The car spun rather than leaving the track.
    pub spun: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RunOutcome {
    Completed,
    Crashed(Crash),
    TimedOut { t: f64 },
}

/// Everything one closed-loop run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapBatch {
    pub laps: Vec<LapMetrics>,
    /// The lap in progress when the run ended, if it did not end on the line.
    pub partial: Option<LapMetrics>,
    pub outcome: RunOutcome,
    pub trace: Vec<TraceSample>,
    /// Control ticks whose command was saturated.
    pub saturated_ticks: usize,
}

impl LapBatch {
    pub fn crash(&self) -> Option<&Crash> {
        match &self.outcome {
            RunOutcome::Crashed(c) => Some(c),
            _ => None,
        }
    }

    pub fn completed(&self) -> bool {
        self.outcome == RunOutcome::Completed
    }
}

/// Steering servo: first-order lag toward the target, rate and travel
/// limited.
#[derive(Debug, Clone, Copy)]
struct Actuator {
    angle: f64,
}

impl Actuator {
    fn advance(&mut self, target: f64, dt: f64, cfg: &SimConfig) {
        let target = target.clamp(-cfg.steer_limit, cfg.steer_limit);
        let rate = if cfg.actuator_tau > 0.0 {
            (target - self.angle) / cfg.actuator_tau
        } else {
            (target - self.angle) / dt
        };
        let rate = rate.clamp(-cfg.steer_rate_limit, cfg.steer_rate_limit);
        self.angle = (self.angle + rate * dt).clamp(-cfg.steer_limit, cfg.steer_limit);
    }
}

/// Planned time for one lap, `sum ds / v_ref`.
fn planned_lap_time(raceline: &Raceline) -> f64 {
    raceline
        .waypoints()
        .windows(2)
        .map(|w| (w[1].s - w[0].s) / (0.5 * (w[0].v_ref + w[1].v_ref)).max(V_MIN))
        .sum()
}

/// Pose of the configured start point.
pub fn initial_state(init: &InitialState, raceline: &Raceline) -> VehicleState {
    let w = raceline.sample(init.s);
    let (sin, cos) = w.psi.sin_cos();
    let speed = init.speed.unwrap_or(w.v_ref).max(V_MIN);
    VehicleState::new(w.x - init.d * sin, w.y + init.d * cos, w.psi + init.heading_error, speed)
}

/// Runs `config.laps` laps (or until a crash or the time limit) with the
/// controller sampled every control period and RK4 physics in between.
pub fn run_lap_batch(
    config: &SimConfig,
    plant: &Plant,
    raceline: &Raceline,
    controller: &Controller,
) -> Result<LapBatch, SimError> {
    config.validate()?;
    plant.params.validate()?;
    plant.tires.validate()?;
    let substeps = config.physics_steps_per_tick();
    let max_time = config
        .max_time
        .unwrap_or_else(|| 2.0 * (config.laps as f64 + 1.0) * planned_lap_time(raceline) + 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pos_noise = Normal::new(0.0, config.pose_noise.position).expect("validated");
    let yaw_noise = Normal::new(0.0, config.pose_noise.yaw).expect("validated");
    let noisy = config.pose_noise.position > 0.0 || config.pose_noise.yaw > 0.0;

    let mut state = initial_state(&config.initial, raceline);
    let mut proj = project([state.x, state.y], raceline);
    let mut meas_proj = proj;
    let mut counter = LapCounter::new(raceline.length(), proj.s, 0.0);
    let mut actuator = Actuator { angle: 0.0 };
    let mut queue: VecDeque<ControlCommand> = VecDeque::with_capacity(config.delay_ticks + 1);
    let mut trace = Vec::new();
    let mut saturated_ticks = 0;
    let mut tick = 0usize;

    let outcome = loop {
        let t = tick as f64 * config.control_period;
        if tick > 0 {
            proj = raceline.project_near([state.x, state.y], &proj, PROJECTION_WINDOW);
            counter.push(proj.s, t);
        }
        let lap = counter.completed_laps();
        let w = raceline.sample(proj.s);
        let half_width = if proj.d >= 0.0 { w.w_left } else { w.w_right };
        let spun = !state.is_finite() || state.sideslip().abs() > SPIN_SIDESLIP;
        let off_track = proj.d.abs() > half_width;
        let done = lap >= config.laps;

        let measured = if noisy {
            VehicleState {
                x: state.x + pos_noise.sample(&mut rng),
                y: state.y + pos_noise.sample(&mut rng),
                yaw: state.yaw + yaw_noise.sample(&mut rng),
                ..state
            }
        } else {
            state
        };
        let cmd = if noisy {
            meas_proj = raceline.project_near([measured.x, measured.y], &meas_proj, PROJECTION_WINDOW);
            controller.step(&measured, raceline, &meas_proj)
        } else {
            controller.step(&measured, raceline, &proj)
        };
        trace.push(TraceSample {
            t,
            x: state.x,
            y: state.y,
            psi: state.yaw,
            vx: state.vx,
            vy: state.vy,
            yaw_rate: state.yaw_rate,
            delta_cmd: cmd.delta,
            delta_act: actuator.angle,
            s: proj.s,
            d: proj.d,
        });
        if spun || off_track {
            break RunOutcome::Crashed(Crash {
                lap,
                t,
                x: state.x,
                y: state.y,
                s: proj.s,
                d: proj.d,
                spun,
            });
        }
        if done {
            break RunOutcome::Completed;
        }
        if t >= max_time {
            break RunOutcome::TimedOut { t };
        }
        saturated_ticks += usize::from(cmd.saturated);

        queue.push_back(cmd);
        let active = if queue.len() > config.delay_ticks {
            queue.pop_front().expect("non-empty")
        } else {
            // nothing has arrived yet: hold straight at the current speed
            ControlCommand { delta: 0.0, v_ctrl: state.vx, ..cmd }
        };
        for _ in 0..substeps {
            actuator.advance(active.delta, config.dt, config);
            let mut a_long = controller.longitudinal_accel(active.v_ctrl, state.vx);
            if state.vx <= V_MIN {
                a_long = a_long.max(0.0);
            }
            let delta = actuator.angle;
            state = rk4_step(&state, config.dt, |s| {
                dynamics_derivative(s, delta, a_long, &plant.params, &plant.tires)
            })?;
        }
        tick += 1;
    };

    // the last sample may sit exactly on the line; drop nothing else
    let (mut laps, partial) = split_laps(&trace, raceline);
    laps.truncate(config.laps);
    let partial = if outcome == RunOutcome::Completed { None } else { partial };
    Ok(LapBatch {
        laps,
        partial,
        outcome,
        trace,
        saturated_ticks,
    })
}

/// Writes a trace with header `t,x,y,psi,vx,vy,yawrate,delta_cmd,delta_act,s,d`.
pub fn write_trace<W: std::io::Write>(trace: &[TraceSample], writer: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for p in trace {
        wtr.serialize(p)?;
    }
    wtr.flush()?;
    Ok(())
}
