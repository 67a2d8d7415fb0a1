use super::{Point, Raceline};
use crate::vehicle::normalize_angle;

/// Foot point of a position on the piecewise-linear raceline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point.
    pub s: f64,
    /// Signed lateral distance, positive to the left of travel.
    pub d: f64,
    pub segment: usize,
    /// Parameter along the segment, in [0, 1].
    pub t: f64,
    pub foot: Point,
}

#[inline]
fn project_on_segment(r: &Raceline, i: usize, p: Point) -> (f64, Projection) {
    let w = r.waypoints();
    let a = w[i].position();
    let b = w[i + 1].position();
    let u = [b[0] - a[0], b[1] - a[1]];
    let len2 = u[0] * u[0] + u[1] * u[1];
    let rel = [p[0] - a[0], p[1] - a[1]];
    let t = ((rel[0] * u[0] + rel[1] * u[1]) / len2).clamp(0.0, 1.0);
    let foot = [a[0] + t * u[0], a[1] + t * u[1]];
    let dist2 = (p[0] - foot[0]).powi(2) + (p[1] - foot[1]).powi(2);
    let cross = u[0] * (p[1] - foot[1]) - u[1] * (p[0] - foot[0]);
    let d = dist2.sqrt().copysign(if cross == 0.0 { 1.0 } else { cross });
    let s = w[i].s + t * (w[i + 1].s - w[i].s);
    (
        dist2,
        Projection {
            s: r.wrap_s(s),
            d,
            segment: i,
            t,
            foot,
        },
    )
}

/// Nearest point on the whole raceline.
pub fn project(point: Point, raceline: &Raceline) -> Projection {
    let mut best: Option<(f64, Projection)> = None;
    for i in 0..raceline.segment_count() {
        let cand = project_on_segment(raceline, i, point);
        if best.as_ref().map_or(true, |b| cand.0 < b.0) {
            best = Some(cand);
        }
    }
    best.expect("raceline has segments").1
}

impl Raceline {
    /// Nearest point restricted to segments within `window` metres of arc
    /// length around a previous projection. Used by the simulator to follow
    /// the car without a global search each tick.
    pub fn project_near(&self, point: Point, hint: &Projection, window: f64) -> Projection {
        let n = self.segment_count();
        let avg = self.length() / n as f64;
        let k = ((window / avg).ceil() as usize + 1).min(n / 2);
        let mut best: Option<(f64, Projection)> = None;
        for off in 0..=2 * k {
            let i = (hint.segment + n + off - k) % n;
            let cand = project_on_segment(self, i, point);
            if best.as_ref().map_or(true, |b| cand.0 < b.0) {
                best = Some(cand);
            }
        }
        best.expect("window is non-empty").1
    }
}

/// Pursuit target on the raceline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lookahead {
    pub point: Point,
    /// Signed angle from the velocity direction to the target ray.
    pub eta: f64,
    /// Arc length of the target.
    pub s: f64,
    /// No circle intersection was found; `point` is the raceline point at
    /// `s* + L_d`.
    pub fallback: bool,
}

/// First point where the raceline leaves the circle of radius `ld` around
/// `position`, walking forward from the projection.
pub fn lookahead_point(
    position: Point,
    direction: f64,
    ld: f64,
    raceline: &Raceline,
    projection: &Projection,
) -> Lookahead {
    let target = if projection.d.abs() < ld {
        circle_exit(position, ld, raceline, projection)
    } else {
        None
    };
    let (point, s, fallback) = match target {
        Some((p, s)) => (p, s, false),
        None => {
            let w = raceline.sample(projection.s + ld);
            (w.position(), w.s, true)
        }
    };
    let bearing = (point[1] - position[1]).atan2(point[0] - position[0]);
    Lookahead {
        point,
        eta: normalize_angle(bearing - direction),
        s,
        fallback,
    }
}

fn circle_exit(
    c: Point,
    radius: f64,
    raceline: &Raceline,
    projection: &Projection,
) -> Option<(Point, f64)> {
    let w = raceline.waypoints();
    let n = raceline.segment_count();
    let r2 = radius * radius;
    for step in 0..n {
        let i = (projection.segment + step) % n;
        let a = w[i].position();
        let b = w[i + 1].position();
        let u = [b[0] - a[0], b[1] - a[1]];
        let f = [a[0] - c[0], a[1] - c[1]];
        // |f + t u|^2 = r^2
        let qa = u[0] * u[0] + u[1] * u[1];
        let qb = 2.0 * (f[0] * u[0] + f[1] * u[1]);
        let qc = f[0] * f[0] + f[1] * f[1] - r2;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            continue;
        }
        let t_exit = (-qb + disc.sqrt()) / (2.0 * qa);
        let t_min = if step == 0 { projection.t } else { 0.0 };
        if t_exit >= t_min && t_exit <= 1.0 {
            let p = [a[0] + t_exit * u[0], a[1] + t_exit * u[1]];
            let s = w[i].s + t_exit * (w[i + 1].s - w[i].s);
            return Some((p, raceline.wrap_s(s)));
        }
    }
    None
}
