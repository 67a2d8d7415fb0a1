//! Table-based and pure-pursuit steering for the same pose, then the
//! closed-loop decay of a lateral offset on a straight.
//!
//!     cargo run --release --example guidance

use std::sync::Arc;

use map_pursuit::control::{Controller, ControllerConfig, ControllerVariant, VariantKind};
use map_pursuit::lut::{build_lut, LutGrid, LutModel, SolverTolerances};
use map_pursuit::raceline::tracks;
use map_pursuit::sim::{fit_second_order, run_lap_batch, InitialState, Plant, PoseNoise, SimConfig};
use map_pursuit::vehicle::{TireModel, VehicleParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = VehicleParams::default();
    let model = LutModel::SingleTrack { tires: TireModel::default() };
    let lut = Arc::new(build_lut(&LutGrid::default(), &params, &model, &SolverTolerances::default())?);
    let (m, q) = (0.0, 0.3);
    let map = Controller::new(
        ControllerConfig { variant: VariantKind::MapPacejka, m, q, ..Default::default() },
        ControllerVariant::MapPacejka(lut),
        &params,
    )?;
    let pp = Controller::new(
        ControllerConfig { variant: VariantKind::PurePursuit, m, q, ..Default::default() },
        ControllerVariant::PurePursuit,
        &params,
    )?;

    let oval = tracks::oval();
    let start = map_pursuit::sim::initial_state(&InitialState { s: 14.0, d: 0.2, ..Default::default() }, &oval);
    for c in [&pp, &map] {
        let cmd = c.command(&start, &oval);
        println!("{:<13} L_d {:.2} m  eta {:+.3}  a_des {:+.2}  delta {:+.4}", c.variant().kind().name(), cmd.ld, cmd.eta, cmd.a_des, cmd.delta);
    }

    println!("\noffset decay from 0.3 m, L_d = {m} + {q} v:");
    for v in [3.0, 5.0, 7.0] {
        let track = tracks::stadium(300.0, 30.0, 2.0, v);
        let cfg = SimConfig {
            laps: 1,
            initial: InitialState { s: 5.0, d: 0.3, heading_error: 0.0, speed: Some(v) },
            pose_noise: PoseNoise::NONE,
            max_time: Some(4.0),
            ..Default::default()
        };
        let batch = run_lap_batch(&cfg, &Plant::default(), &track, &map)?;
        let t: Vec<f64> = batch.trace.iter().map(|s| s.t).collect();
        let d: Vec<f64> = batch.trace.iter().map(|s| s.d).collect();
        if let Some(fit) = fit_second_order(&t, &d) {
            println!(
                "v={v}: omega_n {:.2} rad/s (sqrt2 v / L_d = {:.2}), zeta {:.2}",
                fit.omega_n,
                2f64.sqrt() * v / (m + q * v),
                fit.zeta
            );
        }
    }
    Ok(())
}
