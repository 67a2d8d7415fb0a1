//! Synthetic system-identification logs: constant speed, slowly ramped
//! steering, optional sensor noise and gross outliers.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorneringSample, FitError};
use crate::vehicle::{
    dynamics_derivative, rk4_step, slip_angles, TireModel, VehicleParams, VehicleState, V_MIN,
};

const DT: f64 = 1e-3;
/// The run counts as spun out past this rear slip or sideslip, rad.
const SPIN_ANGLE: f64 = 30.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepProfile {
    /// Longitudinal speed held throughout, m/s.
    pub speed: f64,
    /// Steering ramp, rad/s. Zero holds `delta_start`.
    pub ramp_rate: f64,
    pub delta_start: f64,
    /// The ramp stops rising here, rad.
    pub delta_max: f64,
    pub samples: usize,
    /// Logging interval, s.
    pub sample_period: f64,
    /// Relative noise bound on the measured acceleration: each reading is
    /// scaled by a uniform factor in `[1 - noise, 1 + noise]`.
    pub noise: f64,
    /// Share of samples turned into gross outliers.
    pub outlier_fraction: f64,
    /// Size of an outlier as a front-axle force offset, N. The sign is random.
    pub outlier_force: f64,
    pub seed: u64,
}

impl Default for SweepProfile {
    fn default() -> Self {
        Self {
            speed: 5.0,
            ramp_rate: 0.02,
            delta_start: 0.0,
            delta_max: 0.45,
            samples: 500,
            sample_period: 0.02,
            noise: 0.0,
            outlier_fraction: 0.0,
            outlier_force: 20.0,
            seed: 0,
        }
    }
}

impl SweepProfile {
    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |msg: &str| Err(FitError::InvalidProfile(msg.to_string()));
        if !(self.speed > V_MIN) {
            return bad("speed must exceed 0.5 m/s");
        }
        if !(self.ramp_rate >= 0.0) || !self.ramp_rate.is_finite() {
            return bad("ramp_rate must be >= 0");
        }
        if !(self.sample_period >= DT) {
            return bad("sample_period must be at least the 1 ms integration step");
        }
        if self.samples == 0 {
            return bad("samples must be > 0");
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must lie in [0, 1]");
        }
        if !(self.delta_max.abs() < 1.4 && self.delta_start.abs() < 1.4) {
            return bad("steering angles must stay below 1.4 rad");
        }
        Ok(())
    }

    fn delta_at(&self, t: f64) -> f64 {
        let d = self.delta_start + self.ramp_rate * t;
        if self.delta_max >= self.delta_start {
            d.min(self.delta_max)
        } else {
            self.delta_start
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLog {
    pub samples: Vec<CorneringSample>,
    /// Ground-truth outlier labels, one per sample.
    pub outliers: Vec<bool>,
    /// The ramp ended early because the car spun.
    pub spun_out: bool,
}

impl SweepLog {
    pub fn outlier_count(&self) -> usize {
        self.outliers.iter().filter(|&&o| o).count()
    }
}

/// Drives the dynamic model at constant speed while ramping the steering
/// angle, logging the measured lateral acceleration `vy_dot + vx r`.
pub fn generate_sweep_log(
    profile: &SweepProfile,
    params: &VehicleParams,
    tires: &TireModel,
) -> Result<SweepLog, FitError> {
    profile.validate()?;
    params.validate()?;
    tires.validate()?;
    let steps_per_sample = (profile.sample_period / DT).round() as usize;
    let mut state = VehicleState::new(0.0, 0.0, 0.0, profile.speed);
    let mut clean = Vec::with_capacity(profile.samples);
    let mut spun_out = false;
    let mut step = 0usize;
    for k in 0..profile.samples {
        while step < k * steps_per_sample {
            let delta = profile.delta_at(step as f64 * DT);
            state = rk4_step(&state, DT, |s| dynamics_derivative(s, delta, 0.0, params, tires))?;
            step += 1;
        }
        let t = step as f64 * DT;
        let delta = profile.delta_at(t);
        let rear_slip = slip_angles(&state, delta, params)?.rear;
        if !state.is_finite() || rear_slip.abs() > SPIN_ANGLE || state.sideslip().abs() > SPIN_ANGLE {
            spun_out = true;
            break;
        }
        let d = dynamics_derivative(&state, delta, 0.0, params, tires)?;
        clean.push(CorneringSample {
            t,
            v: state.vx,
            delta,
            ay: d.vy + state.vx * state.yaw_rate,
            yaw_rate: Some(state.yaw_rate),
            vy: Some(state.vy),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let n = clean.len();
    let mut samples = clean;
    if profile.noise > 0.0 {
        for s in &mut samples {
            s.ay *= 1.0 + rng.random_range(-profile.noise..=profile.noise);
        }
    }
    let mut outliers = vec![false; n];
    let count = (profile.outlier_fraction * n as f64).round() as usize;
    let wb = params.wheelbase();
    for i in index::sample(&mut rng, n, count.min(n)).into_vec() {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let s = &mut samples[i];
        s.ay += sign * profile.outlier_force * wb * s.delta.cos() / (params.mass * params.l_r);
        outliers[i] = true;
    }
    Ok(SweepLog {
        samples,
        outliers,
        spun_out,
    })
}
