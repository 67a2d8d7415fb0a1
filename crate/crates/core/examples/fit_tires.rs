//! Ramp-steer log with noise and outliers, then Magic Formula and linear
//! fits with iterative residual rejection.
//!
//!     cargo run --example fit_tires [seed]

use map_pursuit::tire_fit::{fit_linear, fit_pacejka, generate_sweep_log, SweepProfile};
use map_pursuit::vehicle::{TireModel, VehicleParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let params = VehicleParams::default();
    let truth = TireModel::default();
    let profile = SweepProfile { noise: 0.05, outlier_fraction: 0.25, seed, ..Default::default() };
    let log = generate_sweep_log(&profile, &params, &truth)?;
    println!("{} samples, {} injected outliers", log.samples.len(), log.outlier_count());

    let mf = fit_pacejka(&log.samples, &params)?;
    for step in &mf.trace {
        println!(
            "k={} threshold {:>5} N  inliers {}/{}  residual {:.3}/{:.3} N",
            step.k, step.threshold, step.inliers.front, step.inliers.rear, step.mean_abs_residual.front, step.mean_abs_residual.rear
        );
    }
    println!("rejected {:.1}%", 100.0 * mf.rejected_fraction);
    if let TireModel::Pacejka { front, rear } = truth {
        println!("front fit {:?}\n      true {:?}", mf.params.front, front);
        println!("rear  fit {:?}\n      true {:?}", mf.params.rear, rear);
    }
    for w in &mf.warnings {
        println!("warning: {w:?}");
    }
    let lin = fit_linear(&log.samples, &params)?;
    println!("linear stiffness front {:.1} N/rad, rear {:.1} N/rad", lin.params.front, lin.params.rear);
    Ok(())
}
