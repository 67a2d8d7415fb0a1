//! Projected Levenberg-Marquardt for the four Magic Formula coefficients.

use nalgebra::{Matrix4, Vector4};

use super::AxleData;
use crate::vehicle::{AxleTireParams, TIRE_MU};

const LOWER: [f64; 4] = [1e-6, 1e-3, 1e-6, -50.0];
const UPPER: [f64; 4] = [1e3, AxleTireParams::C_MAX, 1e3, AxleTireParams::E_MAX];
const NAMES: [&str; 4] = ["B", "C", "D", "E"];
const MAX_ITER: usize = 300;

fn to_vec(p: &AxleTireParams) -> Vector4<f64> {
    Vector4::new(p.b, p.c, p.d, p.e)
}

fn to_params(v: &Vector4<f64>) -> AxleTireParams {
    AxleTireParams::new(v[0], v[1], v[2], v[3])
}

fn project(v: &mut Vector4<f64>) {
    for i in 0..4 {
        v[i] = v[i].clamp(LOWER[i], UPPER[i]);
    }
}

/// Model value and gradient with respect to (B, C, D, E).
#[inline]
fn eval_grad(p: &Vector4<f64>, alpha: f64, fz: f64) -> (f64, Vector4<f64>) {
    let (b, c, d, e) = (p[0], p[1], p[2], p[3]);
    let x = b * alpha;
    let atan_x = x.atan();
    let phi = x - e * (x - atan_x);
    let atan_phi = phi.atan();
    let (s, co) = (c * atan_phi).sin_cos();
    let k = TIRE_MU * fz;
    let f = k * d * s;
    let df_dphi = k * d * co * c / (1.0 + phi * phi);
    let dphi_db = alpha * (1.0 - e * x * x / (1.0 + x * x));
    let dphi_de = -(x - atan_x);
    let grad = Vector4::new(
        df_dphi * dphi_db,
        k * d * co * atan_phi,
        k * s,
        df_dphi * dphi_de,
    );
    (f, grad)
}

fn cost(p: &Vector4<f64>, data: &AxleData, mask: &[bool]) -> f64 {
    let mut c = 0.0;
    for i in 0..data.alpha.len() {
        if mask[i] {
            let r = eval_grad(p, data.alpha[i], data.fz).0 - data.y[i];
            c += r * r;
        }
    }
    c
}

/// Local descent from `start`; returns the optimum and its cost.
fn descend(start: Vector4<f64>, data: &AxleData, mask: &[bool]) -> (Vector4<f64>, f64) {
    let mut p = start;
    project(&mut p);
    let mut c = cost(&p, data, mask);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITER {
        let mut h = Matrix4::<f64>::zeros();
        let mut g = Vector4::<f64>::zeros();
        for i in 0..data.alpha.len() {
            if mask[i] {
                let (f, j) = eval_grad(&p, data.alpha[i], data.fz);
                let r = f - data.y[i];
                h += j * j.transpose();
                g += j * r;
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = h;
            for k in 0..4 {
                a[(k, k)] += lambda * h[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&-g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p + step;
            project(&mut trial);
            let tc = cost(&trial, data, mask);
            if tc < c {
                let done = (c - tc) <= 1e-15 * c.max(1e-300) || (trial - p).norm() < 1e-14;
                p = trial;
                c = tc;
                lambda = (lambda / 3.0).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (p, c)
}

/// Multi-start fit: eight log-spaced `B` starts between 1 and 50 times
/// `C` in {1.0, 1.3, 1.5}. A warm start skips the grid.
pub(crate) fn fit_magic_formula(
    data: &AxleData,
    mask: &[bool],
    warm: Option<AxleTireParams>,
) -> AxleTireParams {
    if let Some(w) = warm {
        return to_params(&descend(to_vec(&w), data, mask).0);
    }
    let peak = data
        .y
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(y, _)| y.abs())
        .fold(0.0f64, f64::max);
    let d0 = (peak / (TIRE_MU * data.fz)).max(0.1);
    let mut best: Option<(Vector4<f64>, f64)> = None;
    for i in 0..8 {
        let b0 = 50f64.powf(i as f64 / 7.0);
        for c0 in [1.0, 1.3, 1.5] {
            let (p, c) = descend(Vector4::new(b0, c0, d0, 0.0), data, mask);
            if best.as_ref().map_or(true, |(_, bc)| c < *bc) {
                best = Some((p, c));
            }
        }
    }
    to_params(&best.expect("grid is non-empty").0)
}

/// Parameters that ended on a bound, with their value.
pub(crate) fn active_bounds(p: &AxleTireParams) -> Vec<(&'static str, f64)> {
    let v = to_vec(p);
    (0..4)
        .filter(|&i| {
            let tol = 1e-9 * (1.0 + v[i].abs());
            (v[i] - LOWER[i]).abs() <= tol || (UPPER[i] - v[i]).abs() <= tol
        })
        .map(|i| (NAMES[i], v[i]))
        .collect()
}
