//! Steering angle to steady-state lateral acceleration table.
//!
//! Each cell holds the lateral acceleration the car settles at when driven
//! at constant speed and steering angle, or nothing if no stable steady
//! state exists. The controller queries the inverse map.

mod persist;
mod solve;

pub use persist::{LutMeta, LUT_FORMAT_VERSION};
pub use solve::{settle, steady_state_accel, Settled};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::vehicle::{TireModel, VehicleError, VehicleParams, V_MIN};

#[derive(Debug, Error)]
pub enum LutError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("speed {0} m/s is below the 0.5 m/s minimum")]
    BelowMinSpeed(f64),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error("table file does not match its metadata: {0}")]
    Corrupt(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Plant model a table is generated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum LutModel {
    /// No-slip geometry: `a = v^2 tan(delta) / l_wb` everywhere.
    Kinematic,
    SingleTrack { tires: TireModel },
}

impl LutModel {
    pub fn name(&self) -> &'static str {
        match self {
            LutModel::Kinematic => "kinematic",
            LutModel::SingleTrack { tires } => tires.name(),
        }
    }
}

/// Evaluated grid axes. Steering covers `[0, delta_max]`; negative angles
/// follow by odd symmetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutGrid {
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
}

impl Default for LutGrid {
    fn default() -> Self {
        Self::uniform(0.5, 12.0, 0.25, 0.45, 0.01)
    }
}

impl LutGrid {
    /// `v_min..=v_max` and `0..=delta_max` with the given steps. Nodes are
    /// computed as `start + i * step` so they never accumulate rounding.
    pub fn uniform(v_min: f64, v_max: f64, v_step: f64, delta_max: f64, delta_step: f64) -> Self {
        let axis = |lo: f64, hi: f64, step: f64| {
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| lo + i as f64 * step).collect()
        };
        Self {
            v: axis(v_min, v_max, v_step),
            delta: axis(0.0, delta_max, delta_step),
        }
    }

    pub fn validate(&self) -> Result<(), LutError> {
        let ascending = |xs: &[f64]| xs.windows(2).all(|w| w[1] > w[0]) && xs.iter().all(|x| x.is_finite());
        if self.v.len() < 2 || self.delta.len() < 2 {
            return Err(LutError::InvalidGrid("each axis needs at least 2 nodes".into()));
        }
        if !ascending(&self.v) || !ascending(&self.delta) {
            return Err(LutError::InvalidGrid("axes must be strictly ascending".into()));
        }
        if self.v[0] < V_MIN {
            return Err(LutError::InvalidGrid(format!("lowest speed must be >= {V_MIN} m/s")));
        }
        if self.delta[0] != 0.0 {
            return Err(LutError::InvalidGrid("steering axis must start at 0".into()));
        }
        Ok(())
    }
}

/// Convergence and stability settings of the steady-state search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverTolerances {
    /// Integration step, s.
    pub dt: f64,
    /// |vy_dot| bound, m/s^2.
    pub vy_dot: f64,
    /// |yaw acceleration| bound, rad/s^2.
    pub yaw_acc: f64,
    /// Both bounds must hold this long, s.
    pub hold: f64,
    /// Give up after this long, s.
    pub max_time: f64,
    /// Rear slip beyond this counts as a spin, rad.
    pub max_rear_slip: f64,
    /// Boundary cells whose warm-started rerun differs by more than this
    /// (relative) are dropped.
    pub warm_start_tol: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            vy_dot: 1e-3,
            yaw_acc: 1e-3,
            hold: 0.5,
            max_time: 5.0,
            max_rear_slip: 30f64.to_radians(),
            warm_start_tol: 0.05,
        }
    }
}

/// Result of an inverse query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringLookup {
    pub delta: f64,
    /// The demand exceeded what a stable steady state can deliver; `delta`
    /// is the boundary angle.
    pub saturated: bool,
    /// The speed was outside the table and got clamped.
    pub speed_clamped: bool,
}

/// Immutable steady-state table. Cells are row-major by speed; `None`
/// marks a cell without a stable steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringLut {
    grid: LutGrid,
    cells: Vec<Option<f64>>,
    meta: LutMeta,
}

/// Hex SHA-256 of the canonical JSON of the vehicle parameters and model.
/// Tables remember it so a controller can refuse a table built for a
/// different car.
pub fn params_hash(params: &VehicleParams, model: &LutModel) -> String {
    let json = serde_json::to_string(&(params, model)).expect("plain data serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Fills every cell of `grid` by propagating the single-track model to a
/// steady state. Rows run in parallel and are merged by index.
pub fn build_lut(
    grid: &LutGrid,
    params: &VehicleParams,
    model: &LutModel,
    tol: &SolverTolerances,
) -> Result<SteeringLut, LutError> {
    grid.validate()?;
    params.validate()?;
    if let LutModel::SingleTrack { tires } = model {
        tires.validate()?;
    }
    let rows: Vec<Vec<Option<f64>>> = grid
        .v
        .par_iter()
        .map(|&v| solve::build_row(v, &grid.delta, params, model, tol))
        .collect::<Result<_, _>>()?;
    let cells: Vec<Option<f64>> = rows.into_iter().flatten().collect();
    let meta = LutMeta::new(grid, params, model, tol, &cells);
    Ok(SteeringLut {
        grid: grid.clone(),
        cells,
        meta,
    })
}

impl SteeringLut {
    pub(crate) fn from_parts(grid: LutGrid, cells: Vec<Option<f64>>, meta: LutMeta) -> Self {
        Self { grid, cells, meta }
    }

    pub fn grid(&self) -> &LutGrid {
        &self.grid
    }

    pub fn meta(&self) -> &LutMeta {
        &self.meta
    }

    pub fn params_hash(&self) -> &str {
        &self.meta.params_hash
    }

    pub fn cell(&self, iv: usize, id: usize) -> Option<f64> {
        self.cells[iv * self.grid.delta.len() + id]
    }

    pub fn row(&self, iv: usize) -> &[Option<f64>] {
        let n = self.grid.delta.len();
        &self.cells[iv * n..(iv + 1) * n]
    }

    /// Number of leading stable cells of a row.
    pub fn stable_len(&self, iv: usize) -> usize {
        self.row(iv).iter().take_while(|c| c.is_some()).count()
    }

    /// First steering angle without a steady state, if the row has one.
    pub fn boundary(&self, iv: usize) -> Option<f64> {
        let k = self.stable_len(iv);
        (k < self.grid.delta.len()).then(|| self.grid.delta[k])
    }

    /// Largest stable steady-state acceleration of a row.
    pub fn row_max(&self, iv: usize) -> f64 {
        self.row(iv)[self.stable_len(iv) - 1].unwrap_or(0.0)
    }

    /// Steering angle that holds lateral acceleration `a_des` at speed `v`.
    ///
    /// Within a row the monotone delta to acceleration relation is inverted
    /// by linear interpolation. Rows are blended at constant path curvature:
    /// row `j` is queried at `a_des (v_j / v)^2`.
    pub fn lookup_steering(&self, v: f64, a_des: f64) -> SteeringLookup {
        let sign = if a_des < 0.0 { -1.0 } else { 1.0 };
        let a = a_des.abs();
        let vs = &self.grid.v;
        let speed_clamped = v < vs[0] || v > vs[vs.len() - 1] || !v.is_finite();
        let v = if v.is_finite() { v } else { vs[0] };
        let (i, w) = bracket(vs, v);
        let (d0, s0) = self.invert_row(i, a * (vs[i] / v).powi(2));
        let (delta, saturated) = if w > 0.0 {
            let (d1, s1) = self.invert_row(i + 1, a * (vs[i + 1] / v).powi(2));
            ((1.0 - w) * d0 + w * d1, s0 || s1)
        } else {
            (d0, s0)
        };
        SteeringLookup {
            delta: sign * delta,
            saturated,
            speed_clamped,
        }
    }

    fn invert_row(&self, iv: usize, a: f64) -> (f64, bool) {
        let row = self.row(iv);
        let k = self.stable_len(iv);
        let ds = &self.grid.delta;
        if a <= 0.0 {
            return (0.0, false);
        }
        let top = row[k - 1].unwrap_or(0.0);
        if k < 2 || a > top {
            return (ds[k - 1], a > top);
        }
        // first node whose acceleration reaches a
        let j = row[..k].partition_point(|c| c.unwrap_or(0.0) < a).max(1);
        let (a0, a1) = (row[j - 1].unwrap_or(0.0), row[j].unwrap_or(0.0));
        let t = (a - a0) / (a1 - a0);
        (ds[j - 1] + t * (ds[j] - ds[j - 1]), false)
    }
}

/// Lower node and weight of `x` on an ascending axis, clamped to the ends.
fn bracket(xs: &[f64], x: f64) -> (usize, f64) {
    let n = xs.len();
    if x <= xs[0] {
        return (0, 0.0);
    }
    if x >= xs[n - 1] {
        return (n - 1, 0.0);
    }
    let i = xs.partition_point(|&g| g <= x) - 1;
    (i, (x - xs[i]) / (xs[i + 1] - xs[i]))
}
