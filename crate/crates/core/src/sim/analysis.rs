use serde::{Deserialize, Serialize};

/// Linear-interpolation quantile of `sorted` (ascending), `p` in [0, 1].
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box-plot statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

/// Natural frequency and damping of `x'' + 2 zeta w x' + w^2 x = 0`
/// fitted to a decay from rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderFit {
    pub omega_n: f64,
    pub zeta: f64,
    /// RMS of the residual relative to `|x0|`.
    pub rel_residual: f64,
}

/// Free response with `x(0) = x0`, `x'(0) = 0`.
fn free_response(x0: f64, w: f64, zeta: f64, t: f64) -> f64 {
    if (zeta - 1.0).abs() < 1e-9 {
        return x0 * (-w * t).exp() * (1.0 + w * t);
    }
    if zeta < 1.0 {
        let wd = w * (1.0 - zeta * zeta).sqrt();
        let (s, c) = (wd * t).sin_cos();
        x0 * (-zeta * w * t).exp() * (c + zeta * w / wd * s)
    } else {
        let r = (zeta * zeta - 1.0).sqrt();
        let p1 = -w * (zeta - r);
        let p2 = -w * (zeta + r);
        // x = a e^{p1 t} + b e^{p2 t}, a + b = x0, a p1 + b p2 = 0
        let a = -x0 * p2 / (p1 - p2);
        let b = x0 * p1 / (p1 - p2);
        a * (p1 * t).exp() + b * (p2 * t).exp()
    }
}

/// Least-squares fit of a second-order free response to samples `(t, x)`
/// starting at `t[0]` with the initial value `x[0]` and zero rate. Coarse
/// grid over `(ln w, zeta)` followed by repeated local refinement.
pub fn fit_second_order(t: &[f64], x: &[f64]) -> Option<SecondOrderFit> {
    if t.len() < 8 || t.len() != x.len() || x[0] == 0.0 {
        return None;
    }
    let x0 = x[0];
    let t0 = t[0];
    let sse = |lw: f64, z: f64| -> f64 {
        let w = lw.exp();
        t.iter()
            .zip(x)
            .map(|(&ti, &xi)| {
                let r = free_response(x0, w, z, ti - t0) - xi;
                r * r
            })
            .sum()
    };
    let (mut lw_lo, mut lw_hi) = (0.05f64.ln(), 100f64.ln());
    let (mut z_lo, mut z_hi) = (0.02, 4.0);
    let mut best = (0.0, 0.0, f64::INFINITY);
    for _ in 0..12 {
        let n = 40;
        for i in 0..=n {
            let lw = lw_lo + (lw_hi - lw_lo) * i as f64 / n as f64;
            for j in 0..=n {
                let z = z_lo + (z_hi - z_lo) * j as f64 / n as f64;
                let e = sse(lw, z);
                if e < best.2 {
                    best = (lw, z, e);
                }
            }
        }
        let dlw = (lw_hi - lw_lo) / 8.0;
        let dz = (z_hi - z_lo) / 8.0;
        lw_lo = best.0 - dlw;
        lw_hi = best.0 + dlw;
        z_lo = (best.1 - dz).max(1e-3);
        z_hi = best.1 + dz;
    }
    Some(SecondOrderFit {
        omega_n: best.0.exp(),
        zeta: best.1,
        rel_residual: (best.2 / t.len() as f64).sqrt() / x0.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_of_small_sample() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        let s = Summary::of(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.min, s.median, s.max, s.mean), (1.0, 2.0, 3.0, 2.0));
        assert!(Summary::of(&[]).is_none());
    }

    /// Semi-implicit Euler integration of the oscillator, independent of
    /// the closed forms above.
    fn integrate(x0: f64, w: f64, zeta: f64, t_end: f64, dt_out: f64) -> (Vec<f64>, Vec<f64>) {
        let h = 1e-5;
        let (mut x, mut v) = (x0, 0.0);
        let per = (dt_out / h).round() as usize;
        let mut ts = vec![0.0];
        let mut xs = vec![x0];
        let steps = (t_end / h).round() as usize;
        for k in 1..=steps {
            v += h * (-2.0 * zeta * w * v - w * w * x);
            x += h * v;
            if k % per == 0 {
                ts.push(k as f64 * h);
                xs.push(x);
            }
        }
        (ts, xs)
    }

    #[test]
    fn recovers_oscillator_parameters() {
        for (w, z) in [(4.0, 0.7), (2.0, 0.3), (6.0, 1.5), (3.0, 1.0)] {
            let (t, x) = integrate(0.3, w, z, 4.0, 0.02);
            let fit = fit_second_order(&t, &x).unwrap();
            assert!((fit.omega_n - w).abs() < 0.01 * w, "{fit:?} vs {w} {z}");
            assert!((fit.zeta - z).abs() < 0.02, "{fit:?} vs {w} {z}");
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(fit_second_order(&[0.0, 1.0], &[1.0, 0.5]).is_none());
        assert!(fit_second_order(&[0.0; 10], &[0.0; 10]).is_none());
    }
}
