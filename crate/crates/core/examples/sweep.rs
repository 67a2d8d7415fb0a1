//! Velocity sweep and ablation of the three controllers on the reference
//! track. Schedules are tuned first. Takes a minute or so in release mode.
//!
//!     cargo run --release --example sweep [laps]

use map_pursuit::control::VariantKind;
use map_pursuit::raceline::tracks;
use map_pursuit::sim::{ablation_report, build_controllers, velocity_sweep, ExperimentSpec, RowStatus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let laps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let spec = ExperimentSpec { laps, ..Default::default() };
    let track = tracks::reference();
    let prep = build_controllers(&spec, &track)?;
    for t in &prep.tuning {
        println!("{:<13} tuned m={} q={} (score {:.4})", t.variant.name(), t.best.m, t.best.q, t.score);
    }

    let sweep = velocity_sweep(&spec, &track, &prep)?;
    print!("{:>6}", "scale");
    for k in VariantKind::ALL {
        print!(" {:>13}", k.name());
    }
    println!();
    for &s in &spec.scales {
        print!("{s:>6.3}");
        for k in VariantKind::ALL {
            let c = sweep.cell(k, s).expect("every cell runs");
            match (c.completed, c.rms) {
                (true, Some(r)) => print!(" {:>13.4}", r.median),
                _ => print!(" {:>13}", "crash"),
            }
        }
        println!();
    }
    if let Some(limit) = sweep.mutual_limit(VariantKind::MapPacejka, VariantKind::PurePursuit) {
        println!("mutual limit {limit}");
    }

    let ab = ablation_report(&spec, &track, &prep)?;
    for r in &ab.rows {
        let d = match (r.status, r.mean_abs_d) {
            (RowStatus::Completed, Some(d)) => format!("{d:.4} m"),
            _ => "N.C.".into(),
        };
        println!("scale {} {:<13} mean |d| {d}", r.scale, r.variant.name());
    }
    Ok(())
}
