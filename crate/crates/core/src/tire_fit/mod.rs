//! Tire identification from steady-state cornering logs.
//!
//! Forces are recovered from the IMU lateral acceleration, paired with
//! reconstructed slip angles and fitted per axle with a bound-constrained
//! Levenberg-Marquardt solver. Three rejection passes with shrinking
//! thresholds (5, 2.5, 1.25 N) remove gross outliers.

mod lm;
mod sweep;

pub use sweep::{generate_sweep_log, SweepLog, SweepProfile};

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::vehicle::{
    axle_loads, slip_angles, AxleTireParams, TireModel, VehicleError, VehicleParams,
    VehicleState, TIRE_MU, V_MIN,
};

/// Samples whose yaw acceleration exceeds this (rad/s^2) are not steady.
pub const STEADY_YAW_ACC: f64 = 0.5;
/// `cos(delta)` below this makes the front force relation ill-conditioned.
pub const MIN_COS_DELTA: f64 = 0.1;
/// Fewer inliers than this and a fit is abandoned.
pub const MIN_INLIERS: usize = 10;
/// Rejection steps `k = 1, 2, 3` keep residuals below `10 / 2^k` N.
pub const EM_STEPS: u32 = 3;

pub fn em_threshold(k: u32) -> f64 {
    10.0 / f64::from(1u32 << k)
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },
    #[error("near-singular steering angle {0} rad (cos below 0.1)")]
    SingularSteering(f64),
    #[error("speed {0} m/s is below the 0.5 m/s minimum")]
    BelowMinSpeed(f64),
    #[error("sample has no logged lateral velocity; slip angles cannot be reconstructed")]
    MissingLateralVelocity,
    #[error("{axle} fit diverged: only {inliers} inliers left")]
    FitDiverged { axle: &'static str, inliers: usize },
    #[error("need at least {needed} steady samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid sweep profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One logged cornering sample. `v` is the longitudinal speed.
///
/// CSV header `t,v,delta,ay,yaw_rate` with an optional trailing `vy`
/// column; `yaw_rate` may be left empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorneringSample {
    pub t: f64,
    pub v: f64,
    pub delta: f64,
    pub ay: f64,
    pub yaw_rate: Option<f64>,
    #[serde(default)]
    pub vy: Option<f64>,
}

impl CorneringSample {
    fn check(&self, index: usize) -> Result<(), FitError> {
        let mut vals = vec![self.t, self.v, self.delta, self.ay];
        vals.extend(self.yaw_rate);
        vals.extend(self.vy);
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(FitError::InvalidSample {
                index,
                reason: "non-finite value".into(),
            });
        }
        if !(self.v > 0.0) {
            return Err(FitError::InvalidSample {
                index,
                reason: format!("speed must be > 0, got {}", self.v),
            });
        }
        Ok(())
    }

    pub fn mirrored(&self) -> Self {
        Self {
            delta: -self.delta,
            ay: -self.ay,
            yaw_rate: self.yaw_rate.map(|r| -r),
            vy: self.vy.map(|v| -v),
            ..*self
        }
    }
}

/// Front and rear lateral force on the chassis implied by a steady-state
/// lateral acceleration.
pub fn forces_from_imu(
    sample: &CorneringSample,
    params: &VehicleParams,
) -> Result<(f64, f64), FitError> {
    let cos = sample.delta.cos();
    if cos <= MIN_COS_DELTA {
        return Err(FitError::SingularSteering(sample.delta));
    }
    let wb = params.wheelbase();
    let front = params.mass * params.l_r / (wb * cos) * sample.ay;
    let rear = params.mass * params.l_f / wb * sample.ay;
    Ok((front, rear))
}

/// Slip angles of a steady-state sample. The yaw rate is the logged one if
/// present, otherwise `ay / v`.
pub fn slip_angles_steady(
    sample: &CorneringSample,
    params: &VehicleParams,
) -> Result<(f64, f64), FitError> {
    if sample.v <= V_MIN {
        return Err(FitError::BelowMinSpeed(sample.v));
    }
    let vy = sample.vy.ok_or(FitError::MissingLateralVelocity)?;
    let state = VehicleState {
        vx: sample.v,
        vy,
        yaw_rate: sample.yaw_rate.unwrap_or(sample.ay / sample.v),
        ..Default::default()
    };
    let a = slip_angles(&state, sample.delta, params)?;
    Ok((a.front, a.rear))
}

/// Mask of samples that pass the steady-state filter. Yaw acceleration is
/// a finite difference of the logged yaw rate; samples without a logged
/// yaw rate always pass.
pub fn steady_mask(samples: &[CorneringSample]) -> Vec<bool> {
    let n = samples.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            if lo == hi {
                return true;
            }
            match (samples[lo].yaw_rate, samples[hi].yaw_rate) {
                (Some(a), Some(b)) => {
                    let dt = samples[hi].t - samples[lo].t;
                    !(dt > 0.0) || ((b - a) / dt).abs() <= STEADY_YAW_ACC
                }
                _ => true,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxlePair<T> {
    pub front: T,
    pub rear: T,
}

/// One rejection pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmStep {
    pub k: u32,
    /// N
    pub threshold: f64,
    pub inliers: AxlePair<usize>,
    /// Mean absolute residual over the inliers after the refit, N.
    pub mean_abs_residual: AxlePair<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitWarning {
    /// A parameter sits on its bound at the optimum.
    BoundsActive { axle: String, param: String, value: f64 },
}

/// Outcome of a fit. `P` is [`AxleTireParams`] for the Magic Formula and
/// `f64` (N/rad) for a linear tire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport<P> {
    pub params: AxlePair<P>,
    /// Per input sample: passed the steady-state filter and ended as an
    /// inlier on both axles.
    pub inliers: Vec<bool>,
    /// Per input sample: passed the steady-state filter.
    pub steady: Vec<bool>,
    /// Share of steady samples rejected on at least one axle.
    pub rejected_fraction: f64,
    /// Over the final inliers of each axle, N.
    pub mean_abs_residual: AxlePair<f64>,
    pub trace: Vec<EmStep>,
    pub warnings: Vec<FitWarning>,
}

impl FitReport<AxleTireParams> {
    pub fn tire_model(&self) -> TireModel {
        TireModel::Pacejka {
            front: self.params.front,
            rear: self.params.rear,
        }
    }
}

impl FitReport<f64> {
    pub fn tire_model(&self) -> TireModel {
        TireModel::Linear {
            front: self.params.front,
            rear: self.params.rear,
        }
    }
}

/// Slip angle and tire force pairs of one axle. `y` is the Magic Formula
/// output, i.e. the negated chassis force.
#[derive(Debug, Clone, Default)]
pub(crate) struct AxleData {
    pub alpha: Vec<f64>,
    pub y: Vec<f64>,
    pub fz: f64,
}

struct Prepared {
    front: AxleData,
    rear: AxleData,
    /// Index into the input for each prepared sample.
    index: Vec<usize>,
    steady: Vec<bool>,
}

fn prepare(samples: &[CorneringSample], params: &VehicleParams) -> Result<Prepared, FitError> {
    params.validate()?;
    for (i, s) in samples.iter().enumerate() {
        s.check(i)?;
    }
    let steady = steady_mask(samples);
    let loads = axle_loads(0.0, params);
    let mut front = AxleData {
        fz: loads.front,
        ..Default::default()
    };
    let mut rear = AxleData {
        fz: loads.rear,
        ..Default::default()
    };
    let mut index = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if !steady[i] {
            continue;
        }
        let (ff, fr) = forces_from_imu(s, params)?;
        let (af, ar) = slip_angles_steady(s, params)?;
        front.alpha.push(af);
        front.y.push(-ff);
        rear.alpha.push(ar);
        rear.y.push(-fr);
        index.push(i);
    }
    Ok(Prepared {
        front,
        rear,
        index,
        steady,
    })
}

/// A per-axle force law that can be fitted by least squares.
pub(crate) trait AxleModel: Copy {
    fn fit(data: &AxleData, mask: &[bool], warm: Option<Self>) -> Self;
    fn eval(&self, alpha: f64, fz: f64) -> f64;
    fn bound_warnings(&self, axle: &str) -> Vec<FitWarning>;
}

impl AxleModel for AxleTireParams {
    fn fit(data: &AxleData, mask: &[bool], warm: Option<Self>) -> Self {
        lm::fit_magic_formula(data, mask, warm)
    }

    fn eval(&self, alpha: f64, fz: f64) -> f64 {
        crate::vehicle::pacejka_force(alpha, fz, TIRE_MU, self)
    }

    fn bound_warnings(&self, axle: &str) -> Vec<FitWarning> {
        lm::active_bounds(self)
            .into_iter()
            .map(|(param, value)| FitWarning::BoundsActive {
                axle: axle.to_string(),
                param: param.to_string(),
                value,
            })
            .collect()
    }
}

impl AxleModel for f64 {
    fn fit(data: &AxleData, mask: &[bool], _warm: Option<Self>) -> Self {
        ols_through_origin(data, mask)
    }

    fn eval(&self, alpha: f64, _fz: f64) -> f64 {
        // Magic Formula sign: the chassis force is -k alpha.
        self * alpha
    }

    fn bound_warnings(&self, _axle: &str) -> Vec<FitWarning> {
        Vec::new()
    }
}

/// Least-squares slope through the origin of tire force against slip.
pub(crate) fn ols_through_origin(data: &AxleData, mask: &[bool]) -> f64 {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for ((a, y), &keep) in data.alpha.iter().zip(&data.y).zip(mask) {
        if keep {
            sxy += a * y;
            sxx += a * a;
        }
    }
    sxy / sxx
}

struct AxleOutcome<P> {
    params: P,
    mask: Vec<bool>,
    steps: Vec<(usize, f64)>,
}

fn fit_axle<P: AxleModel>(data: &AxleData, axle: &'static str) -> Result<AxleOutcome<P>, FitError> {
    let n = data.alpha.len();
    let mut mask = vec![true; n];
    let mut p = P::fit(data, &mask, None);
    let mut steps = Vec::new();
    for k in 1..=EM_STEPS {
        let thr = em_threshold(k);
        for i in 0..n {
            mask[i] = (p.eval(data.alpha[i], data.fz) - data.y[i]).abs() < thr;
        }
        let inliers = mask.iter().filter(|&&m| m).count();
        if inliers < MIN_INLIERS {
            return Err(FitError::FitDiverged { axle, inliers });
        }
        p = P::fit(data, &mask, Some(p));
        steps.push((inliers, mean_abs_residual(&p, data, &mask)));
    }
    Ok(AxleOutcome {
        params: p,
        mask,
        steps,
    })
}

fn mean_abs_residual<P: AxleModel>(p: &P, data: &AxleData, mask: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..data.alpha.len() {
        if mask[i] {
            sum += (p.eval(data.alpha[i], data.fz) - data.y[i]).abs();
            n += 1;
        }
    }
    sum / n.max(1) as f64
}

fn run_fit<P: AxleModel + Send>(
    samples: &[CorneringSample],
    params: &VehicleParams,
    min_samples: usize,
) -> Result<FitReport<P>, FitError> {
    let prep = prepare(samples, params)?;
    let n = prep.index.len();
    if n < min_samples.max(MIN_INLIERS) {
        if n == 0 || min_samples <= MIN_INLIERS {
            return Err(FitError::FitDiverged {
                axle: "front",
                inliers: n,
            });
        }
        return Err(FitError::InsufficientData {
            needed: min_samples,
            got: n,
        });
    }
    let (front, rear) = rayon::join(
        || fit_axle::<P>(&prep.front, "front"),
        || fit_axle::<P>(&prep.rear, "rear"),
    );
    let (front, rear) = (front?, rear?);

    let mut inliers = vec![false; samples.len()];
    let mut kept = 0usize;
    for (j, &i) in prep.index.iter().enumerate() {
        if front.mask[j] && rear.mask[j] {
            inliers[i] = true;
            kept += 1;
        }
    }
    let trace = (0..EM_STEPS as usize)
        .map(|s| EmStep {
            k: s as u32 + 1,
            threshold: em_threshold(s as u32 + 1),
            inliers: AxlePair {
                front: front.steps[s].0,
                rear: rear.steps[s].0,
            },
            mean_abs_residual: AxlePair {
                front: front.steps[s].1,
                rear: rear.steps[s].1,
            },
        })
        .collect();
    let mut warnings = front.params.bound_warnings("front");
    warnings.extend(rear.params.bound_warnings("rear"));
    Ok(FitReport {
        params: AxlePair {
            front: front.params,
            rear: rear.params,
        },
        inliers,
        steady: prep.steady,
        rejected_fraction: 1.0 - kept as f64 / n as f64,
        mean_abs_residual: AxlePair {
            front: mean_abs_residual(&front.params, &prep.front, &front.mask),
            rear: mean_abs_residual(&rear.params, &prep.rear, &rear.mask),
        },
        trace,
        warnings,
    })
}

/// Fits Magic Formula coefficients per axle. Needs at least 30 steady
/// samples.
pub fn fit_pacejka(
    samples: &[CorneringSample],
    params: &VehicleParams,
) -> Result<FitReport<AxleTireParams>, FitError> {
    run_fit(samples, params, 30)
}

/// Fits a linear cornering stiffness per axle (N/rad) with the same
/// rejection schedule.
pub fn fit_linear(
    samples: &[CorneringSample],
    params: &VehicleParams,
) -> Result<FitReport<f64>, FitError> {
    run_fit(samples, params, MIN_INLIERS)
}

/// Linear stiffness regressed over a noiseless ramp-steer log driven with
/// `tires`, the way a linear model would be identified from the same data
/// as the Magic Formula.
pub fn regress_linear(
    params: &VehicleParams,
    tires: &TireModel,
    profile: &SweepProfile,
) -> Result<TireModel, FitError> {
    let log = generate_sweep_log(&SweepProfile { noise: 0.0, outlier_fraction: 0.0, ..*profile }, params, tires)?;
    Ok(fit_linear(&log.samples, params)?.tire_model())
}

const HEADER: [&str; 5] = ["t", "v", "delta", "ay", "yaw_rate"];

pub fn read_samples<R: Read>(reader: R) -> Result<Vec<CorneringSample>, FitError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let ok = cols.len() >= 5
        && cols[..5] == HEADER
        && (cols.len() == 5 || (cols.len() == 6 && cols[5] == "vy"));
    if !ok {
        return Err(FitError::InvalidSample {
            index: 0,
            reason: "expected header `t,v,delta,ay,yaw_rate[,vy]`".into(),
        });
    }
    let samples: Vec<CorneringSample> = rdr.deserialize().collect::<Result<_, _>>()?;
    for (i, s) in samples.iter().enumerate() {
        s.check(i)?;
    }
    Ok(samples)
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<CorneringSample>, FitError> {
    read_samples(std::fs::File::open(path)?)
}

pub fn write_samples<W: Write>(writer: W, samples: &[CorneringSample]) -> Result<(), FitError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(["t", "v", "delta", "ay", "yaw_rate", "vy"])?;
    for s in samples {
        wtr.serialize(s)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Exact steady states by Newton iteration on the force and moment
    //! balance, written independently of the simulator.
    use super::*;
    use crate::vehicle::pacejka_force;

    fn axle(tires: &TireModel, front: bool, alpha: f64, fz: f64) -> f64 {
        match (tires, front) {
            (TireModel::Pacejka { front: p, .. }, true) | (TireModel::Pacejka { rear: p, .. }, false) => {
                -pacejka_force(alpha, fz, 1.0, p)
            }
            (TireModel::Linear { front: k, .. }, true) | (TireModel::Linear { rear: k, .. }, false) => -k * alpha,
        }
    }

    fn balance(v: f64, delta: f64, vy: f64, r: f64, p: &VehicleParams, tires: &TireModel) -> [f64; 2] {
        let wb = p.l_f + p.l_r;
        let fzf = p.mass * p.g * p.l_r / wb;
        let fzr = p.mass * p.g * p.l_f / wb;
        let af = ((vy + p.l_f * r) / v).atan() - delta;
        let ar = ((vy - p.l_r * r) / v).atan();
        let ff = axle(tires, true, af, fzf) * delta.cos();
        let fr = axle(tires, false, ar, fzr);
        [ff + fr - p.mass * v * r, p.l_f * ff - p.l_r * fr]
    }

    /// `(vy, r)` of the steady state at `(v, delta)`, tracking from `guess`.
    pub fn steady_state(v: f64, delta: f64, guess: (f64, f64), p: &VehicleParams, tires: &TireModel) -> Option<(f64, f64)> {
        let (mut vy, mut r) = guess;
        for _ in 0..100 {
            let g = balance(v, delta, vy, r, p, tires);
            if g[0].abs() < 1e-13 && g[1].abs() < 1e-14 {
                return Some((vy, r));
            }
            let h = 1e-7;
            let gv = balance(v, delta, vy + h, r, p, tires);
            let gr = balance(v, delta, vy, r + h, p, tires);
            let j = [[(gv[0] - g[0]) / h, (gr[0] - g[0]) / h], [(gv[1] - g[1]) / h, (gr[1] - g[1]) / h]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-300 {
                return None;
            }
            vy -= (j[1][1] * g[0] - j[0][1] * g[1]) / det;
            r -= (-j[1][0] * g[0] + j[0][0] * g[1]) / det;
        }
        let g = balance(v, delta, vy, r, p, tires);
        (g[0].abs() < 1e-9 && g[1].abs() < 1e-9).then_some((vy, r))
    }

    /// Noiseless steady samples for steering angles `0..=delta_max`,
    /// stopping at the first angle without a steady state.
    pub fn steady_samples(v: f64, delta_max: f64, n: usize, p: &VehicleParams, tires: &TireModel) -> Vec<CorneringSample> {
        let mut out = Vec::new();
        let mut guess = (0.0, 0.0);
        for i in 0..n {
            let delta = delta_max * i as f64 / (n - 1) as f64;
            let Some((vy, r)) = steady_state(v, delta, guess, p, tires) else {
                break;
            };
            guess = (vy, r);
            out.push(CorneringSample {
                // as if ramped at 0.02 rad/s
                t: delta / 0.02,
                v,
                delta,
                ay: v * r,
                yaw_rate: Some(r),
                vy: Some(vy),
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;
    use crate::vehicle::pacejka_force;
    use crate::vehicle::{dynamics_derivative, rk4_step};
    use proptest::prelude::*;

    fn sample(v: f64, delta: f64, ay: f64) -> CorneringSample {
        CorneringSample {
            t: 0.0,
            v,
            delta,
            ay,
            yaw_rate: None,
            vy: Some(0.0),
        }
    }

    fn truth() -> (AxleTireParams, AxleTireParams) {
        // the generating tires of every synthetic set below
        (AxleTireParams::default_front(), AxleTireParams::default_rear())
    }

    #[test]
    fn zero_acceleration_zero_force() {
        let p = VehicleParams::default();
        assert_eq!(forces_from_imu(&sample(3.0, 0.2, 0.0), &p).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn imu_force_reference_values() {
        let p = VehicleParams::default();
        let (f, r) = forces_from_imu(&sample(3.0, 0.1, 5.0), &p).unwrap();
        let wb = 0.32;
        let f_ref = 3.5 * 0.17 * 5.0 / (wb * 0.1f64.cos());
        assert!((f - f_ref).abs() < 1e-12 && (f - 9.344).abs() < 1e-3, "{f}");
        assert!((r - 8.203).abs() < 1e-3, "{r}");
    }

    #[test]
    fn straight_steering_force_ratio() {
        let p = VehicleParams::default();
        let (f, r) = forces_from_imu(&sample(3.0, 0.0, 4.2), &p).unwrap();
        assert!((f / r - p.l_r / p.l_f).abs() < 1e-12);
    }

    #[test]
    fn singular_steering_is_rejected() {
        let p = VehicleParams::default();
        assert!(matches!(
            forces_from_imu(&sample(3.0, 1.5, 1.0), &p),
            Err(FitError::SingularSteering(_))
        ));
    }

    #[test]
    fn slip_reconstruction_basics() {
        let p = VehicleParams::default();
        assert_eq!(slip_angles_steady(&sample(3.0, 0.0, 0.0), &p).unwrap(), (0.0, 0.0));
        assert!(matches!(
            slip_angles_steady(&sample(0.4, 0.0, 0.0), &p),
            Err(FitError::BelowMinSpeed(_))
        ));
        let mut s = sample(3.0, 0.0, 0.0);
        s.vy = None;
        assert!(matches!(slip_angles_steady(&s, &p), Err(FitError::MissingLateralVelocity)));
    }

    #[test]
    fn slip_reconstruction_matches_propagated_steady_state() {
        let p = VehicleParams::default();
        let tires = TireModel::default();
        for (v, delta) in [(2.0, 0.15), (4.0, 0.1), (6.0, 0.05)] {
            let mut st = VehicleState::new(0.0, 0.0, 0.0, v);
            for _ in 0..5000 {
                st = rk4_step(&st, 1e-3, |x| dynamics_derivative(x, delta, 0.0, &p, &tires)).unwrap();
            }
            let truth = slip_angles(&st, delta, &p).unwrap();
            let s = CorneringSample {
                t: 0.0,
                v,
                delta,
                ay: v * st.yaw_rate,
                yaw_rate: None,
                vy: Some(st.vy),
            };
            let (af, ar) = slip_angles_steady(&s, &p).unwrap();
            assert!((af - truth.front).abs() < 1e-3 && (ar - truth.rear).abs() < 1e-3);
        }
    }

    #[test]
    fn oracle_samples_satisfy_the_force_relation() {
        let p = VehicleParams::default();
        let (f, r) = truth();
        let samples = steady_samples(4.0, 0.2, 50, &p, &TireModel::default());
        assert_eq!(samples.len(), 50);
        let loads = axle_loads(0.0, &p);
        for s in &samples {
            let (ff, fr) = forces_from_imu(s, &p).unwrap();
            let (af, ar) = slip_angles_steady(s, &p).unwrap();
            let mf = -pacejka_force(af, loads.front, 1.0, &f);
            let mr = -pacejka_force(ar, loads.rear, 1.0, &r);
            assert!((ff - mf).abs() < 1e-9 && (fr - mr).abs() < 1e-9, "{ff} {mf} {fr} {mr}");
        }
    }

    #[test]
    fn noiseless_pacejka_recovery() {
        let p = VehicleParams::default();
        let (f, r) = truth();
        let samples = steady_samples(4.0, 0.245, 200, &p, &TireModel::default());
        let rep = fit_pacejka(&samples, &p).unwrap();
        assert_eq!(rep.rejected_fraction, 0.0);
        for (fit, want) in [(rep.params.front, f), (rep.params.rear, r)] {
            for (a, b) in [(fit.b, want.b), (fit.c, want.c), (fit.d, want.d), (fit.e, want.e)] {
                assert!((a - b).abs() < 1e-3 * b.abs().max(1.0), "{fit:?} vs {want:?}");
            }
        }
        let thresholds: Vec<f64> = rep.trace.iter().map(|s| s.threshold).collect();
        assert_eq!(thresholds, vec![5.0, 2.5, 1.25]);
    }

    #[test]
    fn noiseless_linear_recovery_is_exact() {
        let p = VehicleParams::default();
        let (kf, kr) = (180.0, 260.0);
        let samples = steady_samples(3.0, 0.08, 40, &p, &TireModel::Linear { front: kf, rear: kr });
        assert_eq!(samples.len(), 40);
        let rep = fit_linear(&samples, &p).unwrap();
        assert!((rep.params.front - kf).abs() < 1e-9 * kf, "{}", rep.params.front);
        assert!((rep.params.rear - kr).abs() < 1e-9 * kr, "{}", rep.params.rear);
        assert_eq!(rep.rejected_fraction, 0.0);
    }

    #[test]
    fn small_slip_linear_fit_matches_pacejka_stiffness() {
        let p = VehicleParams::default();
        let (f, r) = truth();
        let samples: Vec<_> = steady_samples(3.0, 0.2, 200, &p, &TireModel::default())
            .into_iter()
            .filter(|s| {
                let (af, ar) = slip_angles_steady(s, &p).unwrap();
                af.abs() < 0.02 && ar.abs() < 0.02
            })
            .collect();
        assert!(samples.len() > 30);
        let rep = fit_linear(&samples, &p).unwrap();
        let loads = axle_loads(0.0, &p);
        let kf = TIRE_MU * loads.front * f.normalized_stiffness();
        let kr = TIRE_MU * loads.rear * r.normalized_stiffness();
        assert!(((rep.params.front - kf) / kf).abs() < 0.05, "{} vs {kf}", rep.params.front);
        assert!(((rep.params.rear - kr) / kr).abs() < 0.05, "{} vs {kr}", rep.params.rear);
    }

    #[test]
    fn linear_fit_is_ols_on_final_inliers() {
        let p = VehicleParams::default();

        let samples = steady_samples(4.0, 0.2, 120, &p, &TireModel::default());
        let rep = fit_linear(&samples, &p).unwrap();
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (s, &keep) in samples.iter().zip(&rep.inliers) {
            let (af, _) = slip_angles_steady(s, &p).unwrap();
            let (ff, _) = forces_from_imu(s, &p).unwrap();
            if keep {
                sxy += af * -ff;
                sxx += af * af;
            }
        }
        // front mask can be wider than the joint one; compare on the front only
        let prep = prepare(&samples, &p).unwrap();
        let mask: Vec<bool> = prep.front.alpha.iter().zip(&prep.front.y).map(|(a, y)| (rep.params.front * a - y).abs() < 1.25).collect();
        let k = ols_through_origin(&prep.front, &mask);
        assert!((k - rep.params.front).abs() < 1e-9 * k.abs());
        assert!(sxx > 0.0 && sxy.is_finite());
    }

    #[test]
    fn empty_input_diverges() {
        let p = VehicleParams::default();
        assert!(matches!(fit_linear(&[], &p), Err(FitError::FitDiverged { .. })));
        assert!(matches!(fit_pacejka(&[], &p), Err(FitError::FitDiverged { .. })));
    }

    #[test]
    fn too_few_samples_for_pacejka() {
        let p = VehicleParams::default();

        let s = steady_samples(4.0, 0.2, 20, &p, &TireModel::default());
        assert!(matches!(fit_pacejka(&s, &p), Err(FitError::InsufficientData { .. })));
    }

    #[test]
    fn steady_filter_drops_fast_yaw_changes() {
        let mut s: Vec<_> = (0..5).map(|i| CorneringSample { t: i as f64 * 0.1, v: 3.0, delta: 0.0, ay: 0.0, yaw_rate: Some(0.0), vy: Some(0.0) }).collect();
        s[2].yaw_rate = Some(0.2);
        assert_eq!(steady_mask(&s), vec![true, false, true, false, true]);
    }

    #[test]
    fn csv_round_trip() {
        let s = vec![
            CorneringSample { t: 0.0, v: 3.0, delta: 0.1, ay: 1.5, yaw_rate: Some(0.5), vy: Some(-0.01) },
            CorneringSample { t: 0.1, v: 3.0, delta: 0.1, ay: 1.5, yaw_rate: None, vy: None },
        ];
        let mut buf = Vec::new();
        write_samples(&mut buf, &s).unwrap();
        assert!(buf.starts_with(b"t,v,delta,ay,yaw_rate,vy\n"));
        assert_eq!(read_samples(buf.as_slice()).unwrap(), s);
        let five = "t,v,delta,ay,yaw_rate\n0,3,0.1,1.5,\n";
        let got = read_samples(five.as_bytes()).unwrap();
        assert_eq!(got[0].yaw_rate, None);
        assert!(read_samples("t,v,ay\n".as_bytes()).is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let p = VehicleParams::default();

        let rep = fit_pacejka(&steady_samples(4.0, 0.2, 60, &p, &TireModel::default()), &p).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        let back: FitReport<AxleTireParams> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn mirrored_sample_negates_slip_and_force(v in 0.6f64..12.0, delta in -0.45f64..0.45, ay in -12.0f64..12.0, vy in -0.5f64..0.5, r in -4.0f64..4.0) {
            let p = VehicleParams::default();
            let s = CorneringSample { t: 0.0, v, delta, ay, yaw_rate: Some(r), vy: Some(vy) };
            let (af, ar) = slip_angles_steady(&s, &p).unwrap();
            let (mf, mr) = slip_angles_steady(&s.mirrored(), &p).unwrap();
            prop_assert_eq!((mf, mr), (-af, -ar));
            let (ff, fr) = forces_from_imu(&s, &p).unwrap();
            let (gf, gr) = forces_from_imu(&s.mirrored(), &p).unwrap();
            prop_assert_eq!((gf, gr), (-ff, -fr));
        }
    }
}
