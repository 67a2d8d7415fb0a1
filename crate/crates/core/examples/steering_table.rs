//! Builds the steady-state steering table, saves it, and inverts a few
//! acceleration demands.
//!
//!     cargo run --release --example steering_table [out_dir]

use map_pursuit::lut::{build_lut, LutGrid, LutModel, SolverTolerances, SteeringLut};
use map_pursuit::vehicle::{TireModel, VehicleParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "lut_out".into());
    let params = VehicleParams::default();
    let model = LutModel::SingleTrack { tires: TireModel::default() };
    let t0 = std::time::Instant::now();
    let lut = build_lut(&LutGrid::default(), &params, &model, &SolverTolerances::default())?;
    println!("built {}x{} cells in {:.2?}", lut.grid().v.len(), lut.grid().delta.len(), t0.elapsed());

    for (iv, v) in lut.grid().v.iter().enumerate().step_by(8) {
        let edge = lut.boundary(iv).map_or("full lock".to_string(), |d| format!("{d:.2} rad"));
        println!("v={v:>5.2}  max a_y {:>6.2} m/s^2  stable up to {edge}", lut.row_max(iv));
    }
    for (v, a) in [(2.0, 2.0), (5.0, 6.0), (7.0, 9.0), (7.0, 20.0)] {
        let l = lut.lookup_steering(v, a);
        println!("v={v} a={a:>4} -> delta {:.4} rad{}", l.delta, if l.saturated { " (saturated)" } else { "" });
    }

    lut.save(&out)?;
    let back = SteeringLut::load(&out)?;
    assert_eq!(back, lut);
    println!("saved to {out}/ and reloaded identically");
    Ok(())
}
