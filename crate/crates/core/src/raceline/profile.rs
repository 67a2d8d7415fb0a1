use super::{Raceline, RacelineError};

/// Multiplies every reference speed by `scale`; geometry is untouched.
pub fn scale_profile(raceline: &Raceline, scale: f64) -> Result<Raceline, RacelineError> {
    if !(scale > 0.0 && scale <= 1.2) {
        return Err(RacelineError::InvalidScale(scale));
    }
    let waypoints = raceline
        .waypoints()
        .iter()
        .map(|w| super::Waypoint {
            v_ref: w.v_ref * scale,
            ..*w
        })
        .collect();
    Ok(raceline.with_waypoints(waypoints, raceline.speed_scale() * scale))
}

/// Curvature-limited speed profile with forward (acceleration) and backward
/// (braking) passes around the closed loop.
pub fn forward_backward_profile(
    raceline: &Raceline,
    a_long_max: f64,
    a_lat_max: f64,
    v_max: f64,
) -> Raceline {
    let w = raceline.waypoints();
    let n = raceline.segment_count();
    let ds: Vec<f64> = (0..n).map(|i| w[i + 1].s - w[i].s).collect();
    let limit: Vec<f64> = w[..n]
        .iter()
        .map(|p| {
            if p.kappa == 0.0 {
                v_max
            } else {
                (a_lat_max / p.kappa.abs()).sqrt().min(v_max)
            }
        })
        .collect();

    // Starting at the slowest point, neither pass can lower the start value.
    let start = (0..n)
        .min_by(|&a, &b| limit[a].total_cmp(&limit[b]))
        .expect("non-empty");

    let mut fwd = limit.clone();
    for step in 1..n {
        let j = (start + step) % n;
        let prev = (j + n - 1) % n;
        let reach = (fwd[prev] * fwd[prev] + 2.0 * a_long_max * ds[prev]).sqrt();
        fwd[j] = fwd[j].min(reach);
    }
    let mut bwd = limit;
    for step in 1..n {
        let j = (start + n - step) % n;
        let next = (j + 1) % n;
        let reach = (bwd[next] * bwd[next] + 2.0 * a_long_max * ds[j]).sqrt();
        bwd[j] = bwd[j].min(reach);
    }

    let mut waypoints = w.to_vec();
    for i in 0..n {
        waypoints[i].v_ref = fwd[i].min(bwd[i]);
    }
    waypoints[n].v_ref = waypoints[0].v_ref;
    raceline.with_waypoints(waypoints, 1.0)
}
