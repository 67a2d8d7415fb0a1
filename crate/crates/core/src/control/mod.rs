//! Lateral and longitudinal control: acceleration guidance toward a
//! lookahead point, table-based or pure-pursuit steering, speed tracking.
//!
//! Controllers hold no mutable state. A command is a function of the
//! measured state, the raceline and the configuration, so one instance can
//! serve any number of simulations at once.

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

use crate::lut::{params_hash, LutModel, SteeringLut};
use crate::raceline::{lookahead_point, project, Projection, Raceline};
use crate::vehicle::{TireModel, VehicleParams, VehicleState, V_MIN};

pub const DEFAULT_DELTA_MAX: f64 = 0.45;
/// Speed tracking gain, 1/s.
pub const DEFAULT_K_V: f64 = 2.0;
pub const DEFAULT_A_LONG_MAX: f64 = 6.0;
/// Floor applied to the scheduled lookahead, m.
pub const LD_MIN: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("lookup table was built for other vehicle parameters (table {table}, vehicle {vehicle})")]
    StaleLut { table: String, vehicle: String },
    #[error("{variant} needs a table built with {expected} tires, got {found}")]
    WrongModel {
        variant: &'static str,
        expected: &'static str,
        found: &'static str,
    },
    #[error("{0} needs a steering lookup table")]
    MissingLut(&'static str),
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
}

/// Affine lookahead `L_d = m + q v_ctrl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LookaheadSchedule {
    /// Offset, m.
    pub m: f64,
    /// Slope, s.
    pub q: f64,
}

impl LookaheadSchedule {
    pub fn new(m: f64, q: f64) -> Result<Self, ControlError> {
        let s = Self { m, q };
        s.validate()?;
        Ok(s)
    }

    /// Speed-independent lookahead.
    pub fn fixed(ld: f64) -> Result<Self, ControlError> {
        Self::new(ld, 0.0)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.m.is_finite() && self.q.is_finite() && self.m >= 0.0 && self.q >= 0.0) {
            return Err(ControlError::InvalidConfig(format!(
                "lookahead m = {}, q = {} must be finite and >= 0",
                self.m, self.q
            )));
        }
        if self.m == 0.0 && self.q == 0.0 {
            return Err(ControlError::InvalidConfig("lookahead m and q are both 0".into()));
        }
        Ok(())
    }

    pub fn lookahead(&self, v_ctrl: f64) -> f64 {
        (self.m + self.q * v_ctrl.max(0.0)).max(LD_MIN)
    }
}

/// Reference direction for the angle to the lookahead point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringMode {
    /// Heading plus sideslip; falls back to heading below the minimum speed.
    #[default]
    VelocityVector,
    Heading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    PurePursuit,
    #[default]
    MapPacejka,
    MapLinear,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] = [VariantKind::PurePursuit, VariantKind::MapPacejka, VariantKind::MapLinear];

    pub fn name(&self) -> &'static str {
        match self {
            VariantKind::PurePursuit => "pure_pursuit",
            VariantKind::MapPacejka => "map_pacejka",
            VariantKind::MapLinear => "map_linear",
        }
    }

    pub fn needs_lut(&self) -> bool {
        !matches!(self, VariantKind::PurePursuit)
    }

    /// Table model this variant steers with. `linear` is only used by
    /// [`VariantKind::MapLinear`].
    pub fn lut_model(&self, tires: &TireModel, linear: &TireModel) -> Option<LutModel> {
        match self {
            VariantKind::PurePursuit => None,
            VariantKind::MapPacejka => Some(LutModel::SingleTrack { tires: *tires }),
            VariantKind::MapLinear => Some(LutModel::SingleTrack { tires: *linear }),
        }
    }
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for VariantKind {
    type Err = ControlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name() == s.replace('-', "_"))
            .ok_or_else(|| ControlError::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

/// Steering law plus the table it reads, if any.
#[derive(Debug, Clone)]
pub enum ControllerVariant {
    PurePursuit,
    MapPacejka(Arc<SteeringLut>),
    MapLinear(Arc<SteeringLut>),
}

impl ControllerVariant {
    pub fn kind(&self) -> VariantKind {
        match self {
            ControllerVariant::PurePursuit => VariantKind::PurePursuit,
            ControllerVariant::MapPacejka(_) => VariantKind::MapPacejka,
            ControllerVariant::MapLinear(_) => VariantKind::MapLinear,
        }
    }

    pub fn lut(&self) -> Option<&SteeringLut> {
        match self {
            ControllerVariant::PurePursuit => None,
            ControllerVariant::MapPacejka(l) | ControllerVariant::MapLinear(l) => Some(l),
        }
    }

    pub fn from_kind(kind: VariantKind, lut: Option<Arc<SteeringLut>>) -> Result<Self, ControlError> {
        match (kind, lut) {
            (VariantKind::PurePursuit, _) => Ok(ControllerVariant::PurePursuit),
            (VariantKind::MapPacejka, Some(l)) => Ok(ControllerVariant::MapPacejka(l)),
            (VariantKind::MapLinear, Some(l)) => Ok(ControllerVariant::MapLinear(l)),
            (k, None) => Err(ControlError::MissingLut(k.name())),
        }
    }
}

/// Controller settings as stored in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub variant: VariantKind,
    pub m: f64,
    pub q: f64,
    pub delta_max: f64,
    pub steering_mode: SteeringMode,
    pub k_v: f64,
    pub a_long_max: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            variant: VariantKind::MapPacejka,
            m: 0.5,
            q: 0.2,
            delta_max: DEFAULT_DELTA_MAX,
            steering_mode: SteeringMode::VelocityVector,
            k_v: DEFAULT_K_V,
            a_long_max: DEFAULT_A_LONG_MAX,
        }
    }
}

impl ControllerConfig {
    pub fn schedule(&self) -> LookaheadSchedule {
        LookaheadSchedule { m: self.m, q: self.q }
    }

    pub fn with_schedule(self, s: LookaheadSchedule) -> Self {
        Self { m: s.m, q: s.q, ..self }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        self.schedule().validate()?;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ControlError::InvalidConfig(format!("{name} = {v} must be > 0")))
            }
        };
        positive("delta_max", self.delta_max)?;
        positive("k_v", self.k_v)?;
        positive("a_long_max", self.a_long_max)
    }
}

/// One control output with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub delta: f64,
    pub v_ctrl: f64,
    pub ld: f64,
    pub eta: f64,
    pub a_des: f64,
    /// The demand was beyond the table's stable region or `delta_max`.
    pub saturated: bool,
    /// No circle intersection; the target came from the arc-length fallback.
    pub lookahead_fallback: bool,
}

/// Centripetal acceleration that steers onto a circle through the target:
/// `2 v^2 sin(eta) / L_d`.
pub fn lateral_accel_demand(speed: f64, eta: f64, ld: f64) -> f64 {
    2.0 * speed * speed * eta.sin() / ld
}

/// `atan(2 sin(eta) l_wb / L_d)`.
pub fn pure_pursuit_steering(eta: f64, ld: f64, wheelbase: f64) -> f64 {
    (2.0 * eta.sin() * wheelbase / ld).atan()
}

/// Direction `eta` is measured from.
pub fn reference_direction(state: &VehicleState, mode: SteeringMode) -> f64 {
    match mode {
        SteeringMode::VelocityVector if state.speed() > V_MIN => state.yaw + state.vy.atan2(state.vx),
        _ => state.yaw,
    }
}

/// Reference speed at the projection of the car.
pub fn longitudinal_command(raceline: &Raceline, projection: &Projection) -> f64 {
    raceline.sample(projection.s).v_ref
}

/// Proportional speed tracking, clamped to `+-a_max`.
pub fn longitudinal_accel(v_ctrl: f64, vx: f64, k_v: f64, a_max: f64) -> f64 {
    (k_v * (v_ctrl - vx)).clamp(-a_max, a_max)
}

#[derive(Debug, Clone)]
pub struct Controller {
    config: ControllerConfig,
    variant: ControllerVariant,
    wheelbase: f64,
}

impl Controller {
    /// Checks the configuration and that a table matches `params` and the
    /// variant's tire model.
    pub fn new(
        config: ControllerConfig,
        variant: ControllerVariant,
        params: &VehicleParams,
    ) -> Result<Self, ControlError> {
        config.validate()?;
        if config.variant != variant.kind() {
            return Err(ControlError::InvalidConfig(format!(
                "config asks for {} but a {} controller was given",
                config.variant,
                variant.kind()
            )));
        }
        if let Some(lut) = variant.lut() {
            let meta = lut.meta();
            let expected = params_hash(params, &meta.model);
            if expected != lut.params_hash() {
                return Err(ControlError::StaleLut {
                    table: lut.params_hash().to_string(),
                    vehicle: expected,
                });
            }
            let found = meta.model.name();
            let ok = match variant.kind() {
                VariantKind::MapLinear => found == "linear",
                _ => found != "linear",
            };
            if !ok {
                return Err(ControlError::WrongModel {
                    variant: variant.kind().name(),
                    expected: if variant.kind() == VariantKind::MapLinear { "linear" } else { "nonlinear" },
                    found,
                });
            }
        }
        Ok(Self {
            config,
            variant,
            wheelbase: params.wheelbase(),
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn variant(&self) -> &ControllerVariant {
        &self.variant
    }

    /// Lateral command given the car's projection onto the raceline.
    pub fn step(&self, state: &VehicleState, raceline: &Raceline, projection: &Projection) -> ControlCommand {
        let v_ctrl = longitudinal_command(raceline, projection);
        let ld = self.config.schedule().lookahead(v_ctrl);
        let direction = reference_direction(state, self.config.steering_mode);
        let target = lookahead_point([state.x, state.y], direction, ld, raceline, projection);
        let eta = target.eta;
        let a_des = lateral_accel_demand(state.speed(), eta, ld);
        let (raw, table_saturated) = match self.variant.lut() {
            Some(lut) if state.vx >= V_MIN => {
                let l = lut.lookup_steering(state.vx, a_des);
                (l.delta, l.saturated)
            }
            _ => (pure_pursuit_steering(eta, ld, self.wheelbase), false),
        };
        let dm = self.config.delta_max;
        ControlCommand {
            delta: raw.clamp(-dm, dm),
            v_ctrl,
            ld,
            eta,
            a_des,
            saturated: table_saturated || raw.abs() > dm,
            lookahead_fallback: target.fallback,
        }
    }

    /// [`Controller::step`] with a global projection search.
    pub fn command(&self, state: &VehicleState, raceline: &Raceline) -> ControlCommand {
        self.step(state, raceline, &project([state.x, state.y], raceline))
    }

    pub fn longitudinal_accel(&self, v_ctrl: f64, vx: f64) -> f64 {
        longitudinal_accel(v_ctrl, vx, self.config.k_v, self.config.a_long_max)
    }
}
