//! Rules for on-curve evaluation: Kress splitting of the logarithmic kernel,
//! trigonometric interpolation and spectral differentiation.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;

use super::BoundaryOperator;
use crate::error::{Error, Result};
use crate::geometry::{Boundary, CurvePoint};

/// Below this parameter distance a target is treated as sitting on a node.
const COINCIDE: f64 = 1e-10;

/// Cardinal functions of trigonometric interpolation on `n` equispaced nodes
/// (`n` even), evaluated at parameter `t`.
pub fn trig_interp_weights(n: usize, t: f64) -> Vec<f64> {
    let h = TAU / n as f64;
    let mut w = vec![0.0; n];
    for (j, wj) in w.iter_mut().enumerate() {
        let d = t - h * j as f64;
        let half = (0.5 * d).sin();
        if half.abs() < 1e-14 {
            *wj = 1.0;
        } else {
            *wj = (0.5 * n as f64 * d).sin() * (0.5 * d).cos() / (half * n as f64);
        }
    }
    w
}

/// Spectral differentiation matrix on `n` equispaced nodes over `[0, 2π)`.
pub fn diff_matrix(n: usize) -> DMatrix<f64> {
    let h = TAU / n as f64;
    DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            0.0
        } else {
            let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (0.5 * h * (j as f64 - k as f64)).tan()
        }
    })
}

/// Kress weight `R_j(t)` for `∫ ln(4 sin²((t-τ)/2)) f(τ) dτ`, as a function
/// of `d = t - τ_j`.
fn log_weight(n_half: usize, d: f64) -> f64 {
    let (mut c_prev, mut c) = (1.0, d.cos());
    let two_cos = 2.0 * c;
    let mut sum = 0.0;
    for m in 1..n_half {
        sum += c / m as f64;
        let next = two_cos * c - c_prev;
        c_prev = c;
        c = next;
    }
    let nh = n_half as f64;
    -TAU / nh * sum - PI / (nh * nh) * (nh * d).cos()
}

fn check_even(b: &Boundary) -> Result<usize> {
    if b.len() % 2 != 0 {
        return Err(Error::invalid(
            "the logarithmic quadrature needs an even node count",
        ));
    }
    Ok(b.len() / 2)
}

/// Single layer `S` on its own curve, node to node.
pub fn single_layer_self(b: &Boundary) -> Result<BoundaryOperator> {
    let n_half = check_even(b)?;
    let n = b.len();
    let h = TAU / n as f64;
    let r: Vec<f64> = (0..n).map(|k| log_weight(n_half, h * k as f64)).collect();
    let (x, speed) = (b.nodes(), b.speeds());
    Ok(BoundaryOperator::new(DMatrix::from_fn(n, n, |i, j| {
        let smooth = if i == j {
            (speed[i] * speed[i]).ln()
        } else {
            let s = (0.5 * h * (i as f64 - j as f64)).sin();
            ((x[i] - x[j]).norm_squared() / (4.0 * s * s)).ln()
        };
        (r[(i + n - j) % n] + h * smooth) * speed[j] / (2.0 * TAU)
    })))
}

/// Single layer at arbitrary points `x(t)` of the curve the boundary was
/// sampled from.
pub fn single_layer_on_curve(b: &Boundary, targets: &[(f64, CurvePoint)]) -> Result<DMatrix<f64>> {
    let n_half = check_even(b)?;
    let n = b.len();
    let h = TAU / n as f64;
    let (y, speed) = (b.nodes(), b.speeds());
    Ok(DMatrix::from_fn(targets.len(), n, |i, j| {
        let (t, p) = &targets[i];
        let d = t - h * j as f64;
        let s = (0.5 * d).sin();
        let smooth = if s.abs() < COINCIDE {
            (p.speed() * p.speed()).ln()
        } else {
            ((p.x - y[j]).norm_squared() / (4.0 * s * s)).ln()
        };
        (log_weight(n_half, d) + h * smooth) * speed[j] / (2.0 * TAU)
    }))
}

/// Double layer trace `D[φ]|₊ = (-½ + K)[φ]` at arbitrary curve points.
pub fn double_layer_exterior_on_curve(
    b: &Boundary,
    targets: &[(f64, CurvePoint)],
) -> DMatrix<f64> {
    let n = b.len();
    let h = TAU / n as f64;
    let (y, nu, w) = (b.nodes(), b.normals(), b.weights());
    let mut m = DMatrix::zeros(targets.len(), n);
    for (i, (t, p)) in targets.iter().enumerate() {
        let interp = trig_interp_weights(n, *t);
        for j in 0..n {
            let d = t - h * j as f64;
            let k = if (0.5 * d).sin().abs() < COINCIDE {
                p.curvature() / (2.0 * TAU)
            } else {
                let r = y[j] - p.x;
                r.dot(&nu[j]) / (TAU * r.norm_squared())
            };
            m[(i, j)] = k * w[j] - 0.5 * interp[j];
        }
    }
    m
}

/// Hypersingular operator `∂D[φ]/∂ν` on the curve, from Maue's identity
/// `∂D[φ]/∂ν = d/ds S[dφ/ds]`.
pub fn hypersingular(b: &Boundary, single_layer: &BoundaryOperator) -> BoundaryOperator {
    let n = b.len();
    let mut ds = diff_matrix(n);
    for (i, s) in b.speeds().iter().enumerate() {
        ds.row_mut(i).scale_mut(1.0 / s);
    }
    BoundaryOperator::new(&ds * single_layer.matrix() * &ds)
}
