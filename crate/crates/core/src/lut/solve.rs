use super::{LutError, LutModel, SolverTolerances};
use crate::vehicle::{
    dynamics_derivative, rk4_step, slip_angles, TireModel, VehicleParams, VehicleState, V_MIN,
};

/// Outcome of driving at fixed speed and steering until the lateral
/// dynamics stop changing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Settled {
    Converged { accel: f64, vy: f64, yaw_rate: f64 },
    /// Rear slip exceeded the spin threshold.
    Spun,
    /// Still moving when time ran out.
    NotConverged,
}

/// Propagates the single-track model at constant `(vx, delta)` from the
/// lateral state `(vy, yaw_rate)`.
pub fn settle(
    vx: f64,
    delta: f64,
    start: (f64, f64),
    params: &VehicleParams,
    tires: &TireModel,
    tol: &SolverTolerances,
) -> Result<Settled, LutError> {
    if vx < V_MIN {
        return Err(LutError::BelowMinSpeed(vx));
    }
    let mut s = VehicleState {
        vx,
        vy: start.0,
        yaw_rate: start.1,
        ..Default::default()
    };
    let f = |st: &VehicleState| dynamics_derivative(st, delta, 0.0, params, tires);
    let steps = (tol.max_time / tol.dt).round() as usize;
    let hold_steps = (tol.hold / tol.dt).round() as usize;
    let mut calm = 0usize;
    for _ in 0..steps {
        s = rk4_step(&s, tol.dt, f)?;
        if !s.is_finite() || slip_angles(&s, delta, params)?.rear.abs() > tol.max_rear_slip {
            return Ok(Settled::Spun);
        }
        let d = f(&s)?;
        if d.vy.abs() < tol.vy_dot && d.yaw_rate.abs() < tol.yaw_acc {
            calm += 1;
            if calm >= hold_steps {
                return Ok(Settled::Converged {
                    accel: vx * s.yaw_rate,
                    vy: s.vy,
                    yaw_rate: s.yaw_rate,
                });
            }
        } else {
            calm = 0;
        }
    }
    Ok(Settled::NotConverged)
}

/// Steady-state lateral acceleration `vx * yaw_rate` reached from rest, or
/// `None` if the car spins or never settles.
pub fn steady_state_accel(
    vx: f64,
    delta: f64,
    params: &VehicleParams,
    tires: &TireModel,
    tol: &SolverTolerances,
) -> Result<Option<f64>, LutError> {
    Ok(match settle(vx, delta, (0.0, 0.0), params, tires, tol)? {
        Settled::Converged { accel, .. } => Some(accel),
        _ => None,
    })
}

/// One velocity row. After the first missing or non-increasing cell the
/// rest of the row is marked missing. The last stable cells are then
/// re-run from their neighbour's steady state and dropped while the two
/// runs disagree.
pub(super) fn build_row(
    v: f64,
    deltas: &[f64],
    params: &VehicleParams,
    model: &LutModel,
    tol: &SolverTolerances,
) -> Result<Vec<Option<f64>>, LutError> {
    let tires = match model {
        LutModel::Kinematic => {
            let wb = params.wheelbase();
            return Ok(deltas.iter().map(|d| Some(v * v * d.tan() / wb)).collect());
        }
        LutModel::SingleTrack { tires } => tires,
    };
    let mut row = vec![None; deltas.len()];
    let mut states = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (i, &d) in deltas.iter().enumerate() {
        match settle(v, d, (0.0, 0.0), params, tires, tol)? {
            Settled::Converged { accel, vy, yaw_rate } if accel > prev || i == 0 => {
                row[i] = Some(accel);
                states.push((vy, yaw_rate));
                prev = accel;
            }
            _ => break,
        }
    }
    let mut k = states.len();
    if k < deltas.len() {
        while k >= 2 {
            let cold = row[k - 1].expect("stable prefix");
            let warm = match settle(v, deltas[k - 1], states[k - 2], params, tires, tol)? {
                Settled::Converged { accel, .. } => Some(accel),
                _ => None,
            };
            match warm {
                Some(a) if (a - cold).abs() <= tol.warm_start_tol * cold.abs() => break,
                _ => {
                    row[k - 1] = None;
                    k -= 1;
                }
            }
        }
    }
    Ok(row)
}
