//! Closed-loop raceline: waypoint storage, CSV I/O, geometric queries,
//! speed profiles and lap metrics.

mod geometry;
mod metrics;
mod profile;
pub mod tracks;

pub use geometry::{lookahead_point, project, Lookahead, Projection};
pub use metrics::{lap_metrics, split_laps, LapCounter, LapMetrics, TraceSample};
pub use profile::{forward_backward_profile, scale_profile};

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub type Point = [f64; 2];

/// Closure tolerance between the last and first waypoint, m.
pub const CLOSURE_TOL: f64 = 0.01;
/// Allowed relative mismatch between chord length and arc-length step.
pub const CHORD_TOL: f64 = 0.01;

#[derive(Debug, Error)]
pub enum RacelineError {
    #[error("raceline needs at least 4 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint {index}: {reason}")]
    InvalidWaypoint { index: usize, reason: String },
    #[error("raceline is not closed: first and last waypoint are {0:.4} m apart")]
    NotClosed(f64),
    #[error("speed scale {0} outside (0, 1.2]")]
    InvalidScale(f64),
    #[error("no bundled track named `{0}` (try oval or reference)")]
    UnknownBuiltin(String),
    #[error("trace never completes a lap")]
    IncompleteLap,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One raceline point. CSV columns: `s,x,y,psi,kappa,v_ref,w_left,w_right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub kappa: f64,
    pub v_ref: f64,
    pub w_left: f64,
    pub w_right: f64,
}

impl Waypoint {
    pub fn position(&self) -> Point {
        [self.x, self.y]
    }
}

/// Ordered closed loop of waypoints. The last waypoint duplicates the first
/// one spatially and carries `s = length`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raceline {
    waypoints: Vec<Waypoint>,
    speed_scale: f64,
}

impl Raceline {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, RacelineError> {
        let n = waypoints.len();
        if n < 4 {
            return Err(RacelineError::TooFewWaypoints(n));
        }
        for (index, w) in waypoints.iter().enumerate() {
            let vals = [w.s, w.x, w.y, w.psi, w.kappa, w.v_ref, w.w_left, w.w_right];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(invalid(index, "non-finite value"));
            }
            if w.w_left <= 0.0 || w.w_right <= 0.0 {
                return Err(invalid(index, "track half-widths must be > 0"));
            }
            if w.v_ref < 0.0 {
                return Err(invalid(index, "negative reference speed"));
            }
        }
        for (i, pair) in waypoints.windows(2).enumerate() {
            let ds = pair[1].s - pair[0].s;
            if !(ds > 0.0) {
                return Err(invalid(i + 1, "arc length must be strictly increasing"));
            }
            let chord = dist(pair[0].position(), pair[1].position());
            if (chord - ds).abs() > CHORD_TOL * ds {
                return Err(invalid(
                    i + 1,
                    &format!("chord {chord:.5} m does not match arc step {ds:.5} m"),
                ));
            }
        }
        let gap = dist(waypoints[0].position(), waypoints[n - 1].position());
        if gap > CLOSURE_TOL {
            return Err(RacelineError::NotClosed(gap));
        }
        Ok(Self {
            waypoints,
            speed_scale: 1.0,
        })
    }

    /// Builds a closed raceline from an open polyline: arc length is the
    /// cumulative chord length starting at 0 and a copy of the first point
    /// closes the loop.
    pub fn close_polyline(mut points: Vec<Waypoint>) -> Result<Self, RacelineError> {
        if points.len() < 3 {
            return Err(RacelineError::TooFewWaypoints(points.len()));
        }
        let mut s = 0.0;
        for i in 0..points.len() {
            if i > 0 {
                s += dist(points[i - 1].position(), points[i].position());
            }
            points[i].s = s;
        }
        let mut last = points[0];
        last.s = s + dist(points[points.len() - 1].position(), last.position());
        points.push(last);
        Self::new(points)
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn speed_scale(&self) -> f64 {
        self.speed_scale
    }

    pub fn length(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].s - self.waypoints[0].s
    }

    pub fn segment_count(&self) -> usize {
        self.waypoints.len() - 1
    }

    /// Wraps an arc length into `[0, length)` relative to the first waypoint.
    pub fn wrap_s(&self, s: f64) -> f64 {
        let s0 = self.waypoints[0].s;
        (s - s0).rem_euclid(self.length()) + s0
    }

    /// Segment index and interpolation parameter for arc length `s`.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let s = self.wrap_s(s);
        let idx = self
            .waypoints
            .partition_point(|w| w.s <= s)
            .clamp(1, self.waypoints.len() - 1)
            - 1;
        let a = &self.waypoints[idx];
        let b = &self.waypoints[idx + 1];
        (idx, ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0))
    }

    /// Linearly interpolated waypoint at arc length `s`.
    pub fn sample(&self, s: f64) -> Waypoint {
        let (i, t) = self.locate(s);
        let a = &self.waypoints[i];
        let b = &self.waypoints[i + 1];
        let lerp = |u: f64, v: f64| u + t * (v - u);
        Waypoint {
            s: lerp(a.s, b.s),
            x: lerp(a.x, b.x),
            y: lerp(a.y, b.y),
            psi: a.psi + t * crate::vehicle::normalize_angle(b.psi - a.psi),
            kappa: lerp(a.kappa, b.kappa),
            v_ref: lerp(a.v_ref, b.v_ref),
            w_left: lerp(a.w_left, b.w_left),
            w_right: lerp(a.w_right, b.w_right),
        }
    }

    pub(crate) fn with_waypoints(&self, waypoints: Vec<Waypoint>, speed_scale: f64) -> Self {
        Self {
            waypoints,
            speed_scale,
        }
    }

    /// Mirror image across the x axis (left turns become right turns).
    pub fn mirrored(&self) -> Self {
        let waypoints = self
            .waypoints
            .iter()
            .map(|w| Waypoint {
                y: -w.y,
                psi: -w.psi,
                kappa: -w.kappa,
                w_left: w.w_right,
                w_right: w.w_left,
                ..*w
            })
            .collect();
        self.with_waypoints(waypoints, self.speed_scale)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, RacelineError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["s", "x", "y", "psi", "kappa", "v_ref", "w_left", "w_right"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(RacelineError::InvalidWaypoint {
                index: 0,
                reason: format!("expected header `{}`", expected.join(",")),
            });
        }
        let waypoints = rdr.deserialize().collect::<Result<Vec<Waypoint>, _>>()?;
        Self::new(waypoints)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RacelineError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), RacelineError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for w in &self.waypoints {
            wtr.serialize(w)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RacelineError> {
        self.to_writer(std::fs::File::create(path)?)
    }
}

fn invalid(index: usize, reason: &str) -> RacelineError {
    RacelineError::InvalidWaypoint {
        index,
        reason: reason.to_string(),
    }
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Axis-aligned unit square, counter-clockwise from the origin.
    pub fn unit_square() -> Raceline {
        let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mut pts = Vec::new();
        for k in 0..4 {
            let a = corners[k];
            let b = corners[(k + 1) % 4];
            for j in 0..10 {
                let t = j as f64 / 10.0;
                pts.push(wp(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), k as f64 * std::f64::consts::FRAC_PI_2));
            }
        }
        Raceline::close_polyline(pts).unwrap()
    }

    /// Straight along +x from -50 to +50 m, closed by a wide return leg far away.
    pub fn long_straight() -> Raceline {
        let mut pts = Vec::new();
        for i in 0..=100 {
            pts.push(wp(-50.0 + i as f64, 0.0, 0.0));
        }
        for i in 0..=100 {
            pts.push(wp(50.0 - i as f64, 200.0, std::f64::consts::PI));
        }
        Raceline::close_polyline(pts).unwrap()
    }

    pub fn wp(x: f64, y: f64, psi: f64) -> Waypoint {
        Waypoint {
            s: 0.0,
            x,
            y,
            psi,
            kappa: 0.0,
            v_ref: 5.0,
            w_left: 0.5,
            w_right: 0.5,
        }
    }
}
