use super::tire::Axle;
use super::{normalize_angle, StateDerivative, TireModel, VehicleError, VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipAngles {
    pub front: f64,
    pub rear: f64,
}

/// Front and rear tire slip angles. The steering angle only enters the
/// front one.
pub fn slip_angles(
    state: &VehicleState,
    delta: f64,
    params: &VehicleParams,
) -> Result<SlipAngles, VehicleError> {
    slip_angles_raw(state.vx, state.vy, state.yaw_rate, delta, params)
}

#[inline]
pub(crate) fn slip_angles_raw(
    vx: f64,
    vy: f64,
    yaw_rate: f64,
    delta: f64,
    params: &VehicleParams,
) -> Result<SlipAngles, VehicleError> {
    if !(vx > 0.0) {
        return Err(VehicleError::NonPositiveSpeed(vx));
    }
    Ok(SlipAngles {
        front: ((vy + yaw_rate * params.l_f) / vx).atan() - delta,
        rear: ((vy - yaw_rate * params.l_r) / vx).atan(),
    })
}

/// Vertical axle loads in N. `clamped` is set when an extreme longitudinal
/// acceleration would have unloaded an axle; that load is then held at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxleLoads {
    pub front: f64,
    pub rear: f64,
    pub clamped: bool,
}

pub fn axle_loads(a_long: f64, params: &VehicleParams) -> AxleLoads {
    let m = params.mass;
    let wb = params.l_r + params.l_f;
    let front = (m * params.g * params.l_r - m * a_long * params.h_cg) / wb;
    let rear = (m * params.g * params.l_f + m * a_long * params.h_cg) / wb;
    AxleLoads {
        front: front.max(0.0),
        rear: rear.max(0.0),
        clamped: front < 0.0 || rear < 0.0,
    }
}

/// Lateral velocity and yaw acceleration of the single-track model at fixed
/// longitudinal speed.
///
/// The front force acts along the wheel's lateral axis, so its chassis
/// component carries `cos(delta)`.
#[inline]
pub fn lateral_derivative(
    vx: f64,
    vy: f64,
    yaw_rate: f64,
    delta: f64,
    loads: &AxleLoads,
    params: &VehicleParams,
    tires: &TireModel,
) -> Result<(f64, f64), VehicleError> {
    let alpha = slip_angles_raw(vx, vy, yaw_rate, delta, params)?;
    let fy_f = tires.axle_force(Axle::Front, alpha.front, loads.front) * delta.cos();
    let fy_r = tires.axle_force(Axle::Rear, alpha.rear, loads.rear);
    let vy_dot = (fy_r + fy_f) / params.mass - vx * yaw_rate;
    let yaw_acc = (-params.l_r * fy_r + params.l_f * fy_f) / params.yaw_inertia;
    Ok((vy_dot, yaw_acc))
}

/// Dynamic single-track model with first-order longitudinal dynamics
/// (`vx_dot = a_long`).
pub fn dynamics_derivative(
    state: &VehicleState,
    delta: f64,
    a_long: f64,
    params: &VehicleParams,
    tires: &TireModel,
) -> Result<StateDerivative, VehicleError> {
    let loads = axle_loads(a_long, params);
    let (vy_dot, yaw_acc) = lateral_derivative(
        state.vx,
        state.vy,
        state.yaw_rate,
        delta,
        &loads,
        params,
        tires,
    )?;
    let (sin, cos) = state.yaw.sin_cos();
    Ok(StateDerivative {
        x: state.vx * cos - state.vy * sin,
        y: state.vx * sin + state.vy * cos,
        yaw: state.yaw_rate,
        vx: a_long,
        vy: vy_dot,
        yaw_rate: yaw_acc,
    })
}

/// No-slip (Ackermann) model. Lateral velocity is identically zero and the
/// yaw rate is `vx tan(delta) / l_wb`; the yaw-rate entry holds the rate of
/// change of that algebraic yaw rate.
pub fn kinematic_derivative(
    state: &VehicleState,
    delta: f64,
    a_long: f64,
    params: &VehicleParams,
) -> StateDerivative {
    let tan = delta.tan();
    let (sin, cos) = state.yaw.sin_cos();
    StateDerivative {
        x: state.vx * cos,
        y: state.vx * sin,
        yaw: state.vx * tan / params.wheelbase(),
        vx: a_long,
        vy: 0.0,
        yaw_rate: a_long * tan / params.wheelbase(),
    }
}

/// Classic fourth-order Runge-Kutta step. Yaw is wrapped afterwards.
pub fn rk4_step<E, F>(state: &VehicleState, dt: f64, f: F) -> Result<VehicleState, E>
where
    F: Fn(&VehicleState) -> Result<StateDerivative, E>,
{
    let k1 = f(state)?;
    let k2 = f(&state.advanced(&k1, 0.5 * dt))?;
    let k3 = f(&state.advanced(&k2, 0.5 * dt))?;
    let k4 = f(&state.advanced(&k3, dt))?;
    let combined = StateDerivative {
        x: (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x) / 6.0,
        y: (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y) / 6.0,
        yaw: (k1.yaw + 2.0 * k2.yaw + 2.0 * k3.yaw + k4.yaw) / 6.0,
        vx: (k1.vx + 2.0 * k2.vx + 2.0 * k3.vx + k4.vx) / 6.0,
        vy: (k1.vy + 2.0 * k2.vy + 2.0 * k3.vy + k4.vy) / 6.0,
        yaw_rate: (k1.yaw_rate + 2.0 * k2.yaw_rate + 2.0 * k3.yaw_rate + k4.yaw_rate) / 6.0,
    };
    let mut next = state.advanced(&combined, dt);
    next.yaw = normalize_angle(next.yaw);
    Ok(next)
}
