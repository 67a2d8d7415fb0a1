//! Bundled desk-scale tracks. Geometry is synthetic; the speed profiles are
//! sized so that scaling from 60% to 100% reaches the friction limit of the
//! default vehicle.

use super::{forward_backward_profile, Raceline, RacelineError, Waypoint};
use std::f64::consts::PI;

/// Top speed of every bundled profile (the 100% reference), m/s.
pub const V_MAX: f64 = 8.5;
/// Lateral acceleration the bundled profiles are planned for, m/s^2.
pub const A_LAT_PLAN: f64 = 13.0;
/// Longitudinal acceleration the bundled profiles are planned for, m/s^2.
pub const A_LONG_PLAN: f64 = 1.0;

const SPACING: f64 = 0.1;

/// Stadium oval: two 10 m straights joined by 3 m radius half circles,
/// driven counter-clockwise, 0.6 m half-width.
pub fn oval() -> Raceline {
    let geometry = stadium(10.0, 3.0, 0.6, 0.0);
    forward_backward_profile(&geometry, A_LONG_PLAN, A_LAT_PLAN, V_MAX)
}

/// Counter-clockwise stadium with constant reference speed `v_ref`. The
/// start line sits at the beginning of the bottom straight, heading +x.
pub fn stadium(straight: f64, radius: f64, half_width: f64, v_ref: f64) -> Raceline {
    let mut pts = Vec::new();
    let mut push = |x: f64, y: f64, psi: f64, kappa: f64| {
        pts.push(Waypoint {
            s: 0.0,
            x,
            y,
            psi,
            kappa,
            v_ref,
            w_left: half_width,
            w_right: half_width,
        })
    };
    let n_straight = (straight / SPACING).round().max(1.0) as usize;
    let n_arc = (PI * radius / SPACING).round().max(2.0) as usize;
    for i in 0..n_straight {
        push(i as f64 * straight / n_straight as f64, -radius, 0.0, 0.0);
    }
    for i in 0..n_arc {
        let th = -PI / 2.0 + PI * i as f64 / n_arc as f64;
        push(straight + radius * th.cos(), radius * th.sin(), th + PI / 2.0, 1.0 / radius);
    }
    for i in 0..n_straight {
        push(straight - i as f64 * straight / n_straight as f64, radius, PI, 0.0);
    }
    for i in 0..n_arc {
        let th = PI / 2.0 + PI * i as f64 / n_arc as f64;
        push(radius * th.cos(), radius * th.sin(), th + PI / 2.0, 1.0 / radius);
    }
    Raceline::close_polyline(pts).expect("stadium geometry is valid")
}

/// Kidney-shaped circuit (~51 m) with a hairpin at each end and a
/// left-right S-bend through the inner dip, 0.6 m half-width.
pub fn reference() -> Raceline {
    let shape = PolarShape {
        r0: 5.0,
        a2: 0.35,
        a3: 0.12,
        b3: 0.05,
        stretch: 1.6,
    };
    let half_width = 0.6;
    let theta0 = 4.4;

    // dense arc-length table, then uniform resampling
    let dense = 40_000;
    let mut table = Vec::with_capacity(dense + 1);
    let mut s = 0.0;
    let mut prev = shape.point(theta0);
    for i in 0..=dense {
        let th = theta0 + 2.0 * PI * i as f64 / dense as f64;
        let p = shape.point(th);
        s += (p[0] - prev[0]).hypot(p[1] - prev[1]);
        prev = p;
        table.push((s, th));
    }
    let total = s;
    let n = (total / SPACING).round() as usize;
    let mut pts = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let target = total * i as f64 / n as f64;
        while table[j + 1].0 < target {
            j += 1;
        }
        let (s0, t0) = table[j];
        let (s1, t1) = table[j + 1];
        let th = t0 + (t1 - t0) * (target - s0) / (s1 - s0);
        let p = shape.point(th);
        let (psi, kappa) = shape.heading_curvature(th);
        pts.push(Waypoint {
            s: 0.0,
            x: p[0],
            y: p[1],
            psi,
            kappa,
            v_ref: 0.0,
            w_left: half_width,
            w_right: half_width,
        });
    }
    let geometry = Raceline::close_polyline(pts).expect("reference geometry is valid");
    forward_backward_profile(&geometry, A_LONG_PLAN, A_LAT_PLAN, V_MAX)
}

/// `r(th) = r0 (1 + a2 cos 2th + a3 sin 3th + b3 cos 3th)`, x stretched.
struct PolarShape {
    r0: f64,
    a2: f64,
    a3: f64,
    b3: f64,
    stretch: f64,
}

impl PolarShape {
    fn radius(&self, th: f64) -> (f64, f64, f64) {
        let (s2, c2) = (2.0 * th).sin_cos();
        let (s3, c3) = (3.0 * th).sin_cos();
        let r = self.r0 * (1.0 + self.a2 * c2 + self.a3 * s3 + self.b3 * c3);
        let dr = self.r0 * (-2.0 * self.a2 * s2 + 3.0 * self.a3 * c3 - 3.0 * self.b3 * s3);
        let ddr = self.r0 * (-4.0 * self.a2 * c2 - 9.0 * self.a3 * s3 - 9.0 * self.b3 * c3);
        (r, dr, ddr)
    }

    fn point(&self, th: f64) -> [f64; 2] {
        let (r, _, _) = self.radius(th);
        [self.stretch * r * th.cos(), r * th.sin()]
    }

    fn heading_curvature(&self, th: f64) -> (f64, f64) {
        let (r, dr, ddr) = self.radius(th);
        let (s, c) = th.sin_cos();
        let dx = self.stretch * (dr * c - r * s);
        let dy = dr * s + r * c;
        let ddx = self.stretch * (ddr * c - 2.0 * dr * s - r * c);
        let ddy = ddr * s + 2.0 * dr * c - r * s;
        let kappa = (dx * ddy - dy * ddx) / (dx * dx + dy * dy).powf(1.5);
        (dy.atan2(dx), kappa)
    }
}

/// Resolves a track name (`oval`, `reference`) to a bundled raceline.
pub fn builtin(name: &str) -> Option<Raceline> {
    match name {
        "oval" => Some(oval()),
        "reference" => Some(reference()),
        _ => None,
    }
}

/// `builtin:<name>` or a path to a raceline CSV.
pub fn resolve(source: &str) -> Result<Raceline, RacelineError> {
    match source.strip_prefix("builtin:") {
        Some(name) => builtin(name).ok_or_else(|| RacelineError::UnknownBuiltin(name.to_string())),
        None => Raceline::load(source),
    }
}
