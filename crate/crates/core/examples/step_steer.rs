//! Step-steer response of the single-track model against the no-slip
//! geometry at a few speeds.
//!
//!     cargo run --example step_steer

use map_pursuit::vehicle::{
    dynamics_derivative, kinematic_derivative, rk4_step, TireModel, VehicleError, VehicleParams, VehicleState,
};

fn main() -> Result<(), VehicleError> {
    let params = VehicleParams::default();
    let tires = TireModel::default();
    let delta = 0.15;
    println!("delta = {delta} rad");
    println!("{:>6} {:>12} {:>12} {:>10}", "v", "yaw rate", "no-slip", "sideslip");
    for v in [1.0, 3.0, 5.0, 7.0] {
        let mut s = VehicleState::new(0.0, 0.0, 0.0, v);
        for _ in 0..3000 {
            s = rk4_step(&s, 1e-3, |x| dynamics_derivative(x, delta, 0.0, &params, &tires))?;
        }
        let kin = kinematic_derivative(&s, delta, 0.0, &params).yaw;
        println!("{v:>6.1} {:>12.4} {:>12.4} {:>10.4}", s.yaw_rate, kin, s.sideslip());
    }
    Ok(())
}
