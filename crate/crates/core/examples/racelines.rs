//! Bundled racelines: writes them as CSV and prints their speed profiles.
//!
//!     cargo run --example racelines [out_dir]

use map_pursuit::raceline::{scale_profile, tracks, Raceline};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "tracks".into()));
    std::fs::create_dir_all(&out)?;
    for name in ["oval", "reference"] {
        let r = tracks::builtin(name).expect("bundled");
        let path = out.join(format!("{name}.csv"));
        r.save(&path)?;
        let back = Raceline::load(&path)?;
        assert_eq!(back.waypoints(), r.waypoints());
        let v: Vec<f64> = r.waypoints().iter().map(|w| w.v_ref).collect();
        let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let vmax = v.iter().cloned().fold(0.0, f64::max);
        println!("{name}: {:.1} m, {} points, v_ref {vmin:.2}..{vmax:.2} m/s -> {}", r.length(), r.waypoints().len(), path.display());
        let slow = scale_profile(&r, 0.6)?;
        println!("  at scale 0.6: peak {:.2} m/s", slow.waypoints().iter().map(|w| w.v_ref).fold(0.0, f64::max));
    }
    Ok(())
}
