//! Single-track vehicle model: chassis constants, tire force laws, and the
//! dynamic and kinematic equations of motion.

mod model;
mod tire;

pub use model::{
    axle_loads, dynamics_derivative, kinematic_derivative, lateral_derivative, rk4_step,
    slip_angles, AxleLoads, SlipAngles,
};
pub use tire::{linear_force, pacejka_force, Axle, AxleTireParams, TireModel};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Below this longitudinal speed slip angles are ill-conditioned and the
/// kinematic model takes over.
pub const V_MIN: f64 = 0.5;

/// Friction coefficient used inside the tire law. The fitted peak factor
/// `D` absorbs the real surface friction.
pub const TIRE_MU: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VehicleError {
    #[error("invalid vehicle parameter `{name}` = {value}: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("slip angle undefined for longitudinal speed {0} m/s")]
    NonPositiveSpeed(f64),
    #[error("non-finite vehicle state")]
    NonFiniteState,
}

/// Chassis constants. The wheelbase is always `l_f + l_r`.
///
/// Defaults are plausible 1:10 scale racecar values. Only the mass is a
/// published figure; `l_f`, `l_r`, `yaw_inertia` and `h_cg` are estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg m^2
    pub yaw_inertia: f64,
    /// CG to front axle, m
    pub l_f: f64,
    /// CG to rear axle, m
    pub l_r: f64,
    /// CG height, m
    pub h_cg: f64,
    /// Surface friction, reporting only (see [`TIRE_MU`]).
    pub mu: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 3.5,
            yaw_inertia: 0.05,
            l_f: 0.15,
            l_r: 0.17,
            h_cg: 0.07,
            mu: 1.0,
            g: 9.81,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let fields = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("h_cg", self.h_cg),
            ("mu", self.mu),
            ("g", self.g),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(VehicleError::InvalidParam {
                    name,
                    value,
                    reason: "must be finite and strictly positive",
                });
            }
        }
        Ok(())
    }
}

/// Planar pose plus body-frame velocities. ISO frame: x forward, y left,
/// positive yaw counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, yaw: f64, vx: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
            vx,
            vy: 0.0,
            yaw_rate: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.yaw, self.vx, self.vy, self.yaw_rate]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Speed over ground.
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Sideslip angle of the CG velocity.
    pub fn sideslip(&self) -> f64 {
        self.vy.atan2(self.vx)
    }

    /// `self + h * d`, without yaw wrapping (used for integrator stages).
    pub fn advanced(&self, d: &StateDerivative, h: f64) -> Self {
        Self {
            x: self.x + h * d.x,
            y: self.y + h * d.y,
            yaw: self.yaw + h * d.yaw,
            vx: self.vx + h * d.vx,
            vy: self.vy + h * d.vy,
            yaw_rate: self.yaw_rate + h * d.yaw_rate,
        }
    }

    pub fn mirrored(&self) -> Self {
        Self {
            x: self.x,
            y: -self.y,
            yaw: -self.yaw,
            vx: self.vx,
            vy: -self.vy,
            yaw_rate: -self.yaw_rate,
        }
    }
}

/// Time derivative of [`VehicleState`], field by field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

/// Wraps an angle to (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}
