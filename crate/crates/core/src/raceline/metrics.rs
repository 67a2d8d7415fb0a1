use serde::{Deserialize, Serialize};

use super::{Raceline, RacelineError};

/// One control-tick record. CSV header:
/// `t,x,y,psi,vx,vy,yawrate,delta_cmd,delta_act,s,d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    #[serde(rename = "yawrate")]
    pub yaw_rate: f64,
    pub delta_cmd: f64,
    pub delta_act: f64,
    pub s: f64,
    pub d: f64,
}

/// Per-lap tracking statistics. RMS and means are taken over control-tick
/// samples, not weighted by distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LapMetrics {
    pub lap_time: f64,
    pub rms_d: f64,
    pub mean_abs_d: f64,
    pub max_abs_d: f64,
    pub mean_d: f64,
    /// |d| exceeded the local half-width at some sample.
    pub crashed: bool,
    /// The lap ended at a start-line crossing.
    pub completed: bool,
    pub samples: usize,
}

/// Incremental start-line (s = 0) crossing detector over a stream of
/// arc-length samples. A stream that begins exactly on the line counts its
/// first sample as a crossing.
#[derive(Debug, Clone)]
pub struct LapCounter {
    length: f64,
    progress: f64,
    next_line: f64,
    last: (f64, f64),
    crossings: Vec<f64>,
}

impl LapCounter {
    pub fn new(length: f64, s: f64, t: f64) -> Self {
        let progress = wrap_half(s, length);
        let crossings = if progress == 0.0 { vec![t] } else { Vec::new() };
        Self {
            length,
            progress,
            next_line: (progress / length).floor() + 1.0,
            last: (s, t),
            crossings,
        }
    }

    pub fn push(&mut self, s: f64, t: f64) {
        let (s0, t0) = self.last;
        let step = wrap_half(s - s0, self.length);
        let before = self.progress;
        self.progress += step;
        while self.progress >= self.next_line * self.length {
            let frac = (self.next_line * self.length - before) / step;
            self.crossings.push(t0 + frac * (t - t0));
            self.next_line += 1.0;
        }
        self.last = (s, t);
    }

    /// Crossing instants so far.
    pub fn crossings(&self) -> &[f64] {
        &self.crossings
    }

    /// Laps completed between crossings.
    pub fn completed_laps(&self) -> usize {
        self.crossings.len().saturating_sub(1)
    }
}

fn wrap_half(ds: f64, length: f64) -> f64 {
    let mut v = ds.rem_euclid(length);
    if v > 0.5 * length {
        v -= length;
    }
    v
}

fn crossings(trace: &[TraceSample], length: f64) -> Vec<f64> {
    let Some(first) = trace.first() else {
        return Vec::new();
    };
    let mut counter = LapCounter::new(length, first.s, first.t);
    for p in &trace[1..] {
        counter.push(p.s, p.t);
    }
    counter.crossings
}

fn summarize(
    samples: &[TraceSample],
    raceline: &Raceline,
    lap_time: f64,
    completed: bool,
) -> LapMetrics {
    let n = samples.len();
    let mut sum_sq = 0.0;
    let mut sum_abs = 0.0;
    let mut sum = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut crashed = false;
    for p in samples {
        sum_sq += p.d * p.d;
        sum_abs += p.d.abs();
        sum += p.d;
        max_abs = max_abs.max(p.d.abs());
        let w = raceline.sample(p.s);
        let half_width = if p.d >= 0.0 { w.w_left } else { w.w_right };
        crashed |= p.d.abs() > half_width;
    }
    let nf = n.max(1) as f64;
    LapMetrics {
        lap_time,
        rms_d: (sum_sq / nf).sqrt(),
        mean_abs_d: sum_abs / nf,
        max_abs_d: max_abs,
        mean_d: sum / nf,
        crashed,
        completed,
        samples: n,
    }
}

fn window(trace: &[TraceSample], from: f64, to: f64) -> &[TraceSample] {
    let lo = trace.partition_point(|p| p.t < from);
    let hi = trace.partition_point(|p| p.t < to);
    &trace[lo..hi]
}

/// Statistics of the first full lap (between the first two start-line
/// crossings) contained in `trace`.
pub fn lap_metrics(trace: &[TraceSample], raceline: &Raceline) -> Result<LapMetrics, RacelineError> {
    let c = crossings(trace, raceline.length());
    if c.len() < 2 {
        return Err(RacelineError::IncompleteLap);
    }
    Ok(summarize(window(trace, c[0], c[1]), raceline, c[1] - c[0], true))
}

/// Splits a run into completed laps plus the trailing partial lap, if any
/// samples follow the last crossing.
pub fn split_laps(trace: &[TraceSample], raceline: &Raceline) -> (Vec<LapMetrics>, Option<LapMetrics>) {
    let c = crossings(trace, raceline.length());
    let laps = c
        .windows(2)
        .map(|w| summarize(window(trace, w[0], w[1]), raceline, w[1] - w[0], true))
        .collect();
    let partial = match (c.last(), trace.last()) {
        (Some(&start), Some(last)) => {
            let rest = window(trace, start, f64::INFINITY);
            (!rest.is_empty()).then(|| summarize(rest, raceline, last.t - start, false))
        }
        (None, Some(last)) if !trace.is_empty() => {
            Some(summarize(trace, raceline, last.t - trace[0].t, false))
        }
        _ => None,
    };
    (laps, partial)
}
