//! Periodic parametrizations of smooth closed curves.
//!
//! Every curve is parametrized over `[0, 2π)` with positive (counterclockwise)
//! orientation, so the outward normal is the tangent rotated clockwise.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{cross, left, Point};
use crate::error::{Error, Result};

/// Position and first two parameter derivatives of a curve.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub x: Point,
    pub dx: Point,
    pub ddx: Point,
}

impl CurvePoint {
    pub fn speed(&self) -> f64 {
        self.dx.norm()
    }

    /// Signed curvature, positive where the curve turns left.
    pub fn curvature(&self) -> f64 {
        let s = self.speed();
        cross(&self.dx, &self.ddx) / (s * s * s)
    }
}

/// A closed curve that can be evaluated at any parameter value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Curve {
    /// `center + R(angle) (a cos t, b sin t)`.
    Ellipse {
        center: [f64; 2],
        a: f64,
        b: f64,
        angle: f64,
    },
    /// Ellipse with semi-axes `a` (along the arc) and `b` (across it) bent
    /// onto the circle of radius `orbit_radius` centered at the origin; its
    /// midpoint sits at polar angle `center_angle`.
    Twisted {
        orbit_radius: f64,
        a: f64,
        b: f64,
        center_angle: f64,
    },
    /// Polygon with smoothed corners.
    Piecewise(PiecewiseCurve),
}

impl Curve {
    pub fn eval(&self, t: f64) -> CurvePoint {
        match self {
            Curve::Ellipse {
                center,
                a,
                b,
                angle,
            } => {
                let (st, ct) = t.sin_cos();
                let (sa, ca) = angle.sin_cos();
                let rot = |v: Point| Point::new(ca * v.x - sa * v.y, sa * v.x + ca * v.y);
                CurvePoint {
                    x: Point::new(center[0], center[1]) + rot(Point::new(a * ct, b * st)),
                    dx: rot(Point::new(-a * st, b * ct)),
                    ddx: rot(Point::new(-a * ct, -b * st)),
                }
            }
            Curve::Twisted {
                orbit_radius,
                a,
                b,
                center_angle,
            } => {
                let (st, ct) = t.sin_cos();
                let k = a / orbit_radius;
                let phi = center_angle + k * ct;
                let dphi = -k * st;
                let ddphi = -k * ct;
                // Inner side first so that the traversal is counterclockwise.
                let rho = orbit_radius - b * st;
                let drho = -b * ct;
                let ddrho = b * st;
                let (sp, cp) = phi.sin_cos();
                let e_r = Point::new(cp, sp);
                let e_phi = Point::new(-sp, cp);
                CurvePoint {
                    x: e_r * rho,
                    dx: e_r * drho + e_phi * (rho * dphi),
                    ddx: e_r * (ddrho - rho * dphi * dphi)
                        + e_phi * (2.0 * drho * dphi + rho * ddphi),
                }
            }
            Curve::Piecewise(p) => p.eval(t),
        }
    }
}

/// Half-order of the corner smoothstep; curvature vanishes to this order at
/// both ends of a corner.
const SMOOTH_ORDER: u32 = 8;

const CORNER_QUAD: usize = 32;

fn corner_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| super::gauss_legendre(CORNER_QUAD))
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Smoothstep `B` with `B' ∝ x^p (1-x)^p`, as a binomial tail sum.
fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    let n = 2 * SMOOTH_ORDER + 1;
    (SMOOTH_ORDER + 1..=n)
        .map(|j| binomial(n, j) * x.powi(j as i32) * (1.0 - x).powi((n - j) as i32))
        .sum()
}

fn smoothstep_d1(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    let p = SMOOTH_ORDER;
    let c = (2 * p + 1) as f64 * binomial(2 * p, p);
    c * (x * (1.0 - x)).powi(p as i32)
}

/// Chord length of a unit-length corner turning by `delta`.
fn corner_chord(delta: f64) -> f64 {
    let (x, w) = corner_rule();
    x.iter()
        .zip(w)
        .map(|(x, w)| 0.5 * w * (delta * (smoothstep(0.5 * (x + 1.0)) - 0.5)).cos())
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "piece", rename_all = "kebab-case")]
enum Piece {
    Line {
        start: [f64; 2],
        dir: [f64; 2],
        len: f64,
    },
    /// Tangent angle `heading + delta·B(σ/len)`.
    Corner {
        start: [f64; 2],
        heading: f64,
        delta: f64,
        len: f64,
    },
}

impl Piece {
    fn len(&self) -> f64 {
        match *self {
            Piece::Line { len, .. } | Piece::Corner { len, .. } => len,
        }
    }

    /// Position, unit tangent and signed curvature at local arc length `s`.
    fn at(&self, s: f64) -> (Point, Point, f64) {
        match *self {
            Piece::Line { start, dir, .. } => {
                let d = Point::new(dir[0], dir[1]);
                (Point::new(start[0], start[1]) + d * s, d, 0.0)
            }
            Piece::Corner {
                start,
                heading,
                delta,
                len,
            } => {
                let (gx, gw) = corner_rule();
                let mut x = Point::new(start[0], start[1]);
                for (g, w) in gx.iter().zip(gw) {
                    let sig = 0.5 * s * (g + 1.0);
                    let th = heading + delta * smoothstep(sig / len);
                    x += Point::new(th.cos(), th.sin()) * (0.5 * s * w);
                }
                let th = heading + delta * smoothstep(s / len);
                let kappa = delta * smoothstep_d1(s / len) / len;
                (x, Point::new(th.cos(), th.sin()), kappa)
            }
        }
    }
}

/// A polygon whose corners are replaced by smooth turns of vanishing end
/// curvature, parametrized proportionally to arc length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseCurve {
    pieces: Vec<Piece>,
    /// Arc length at the start of each piece.
    offsets: Vec<f64>,
    length: f64,
}

impl PiecewiseCurve {
    /// Rounds every corner of a simple polygon. `radius` sets the size of each
    /// turn: it cuts the edges exactly where a tangent circle of that radius
    /// would.
    ///
    /// Vertices may be given in either orientation.
    pub fn rounded_polygon(vertices: &[Point], radius: f64) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::invalid("a polygon needs at least three vertices"));
        }
        if !(radius > 0.0) {
            return Err(Error::invalid(format!(
                "corner rounding radius must be positive, got {radius}"
            )));
        }
        let mut v: Vec<Point> = vertices.to_vec();
        if super::shoelace_area(&v) < 0.0 {
            v.reverse();
        }
        let n = v.len();
        let mut inset = vec![0.0; n];
        let mut turns = vec![0.0; n];
        for i in 0..n {
            let prev = v[(i + n - 1) % n];
            let next = v[(i + 1) % n];
            let d_in = (v[i] - prev).normalize();
            let d_out = (next - v[i]).normalize();
            let turn = cross(&d_in, &d_out).atan2(d_in.dot(&d_out));
            if turn.abs() > PI - 1e-9 {
                return Err(Error::invalid(format!("degenerate spike at vertex {i}")));
            }
            turns[i] = turn;
            inset[i] = radius * (turn.abs() / 2.0).tan();
        }

        let mut pieces = Vec::with_capacity(2 * n);
        for k in 0..n {
            // Straight run from corner k to corner k+1, then the turn at k+1.
            let i = k;
            let j = (k + 1) % n;
            let edge = v[j] - v[i];
            let edge_len = edge.norm();
            let dir = edge / edge_len;
            let run = edge_len - inset[i] - inset[j];
            if run < -1e-12 {
                return Err(Error::invalid(format!(
                    "rounding radius {radius} too large for edge {i}-{j} of length {edge_len:.4}"
                )));
            }
            if run > 1e-14 {
                let start = v[i] + dir * inset[i];
                pieces.push(Piece::Line {
                    start: [start.x, start.y],
                    dir: [dir.x, dir.y],
                    len: run,
                });
            }
            if turns[j].abs() > 1e-12 {
                let p_in = v[j] - dir * inset[j];
                let chord = 2.0 * radius * (turns[j].abs() / 2.0).sin();
                pieces.push(Piece::Corner {
                    start: [p_in.x, p_in.y],
                    heading: dir.y.atan2(dir.x),
                    delta: turns[j],
                    len: chord / corner_chord(turns[j]),
                });
            }
        }
        let mut offsets = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for p in &pieces {
            offsets.push(acc);
            acc += p.len();
        }
        Ok(Self {
            pieces,
            offsets,
            length: acc,
        })
    }

    /// Arc length of the curve.
    pub fn length(&self) -> f64 {
        self.length
    }

    fn eval(&self, t: f64) -> CurvePoint {
        let s = t.rem_euclid(TAU) / TAU * self.length;
        let idx = match self
            .offsets
            .binary_search_by(|o| o.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let (x, tan, kappa) = self.pieces[idx].at(s - self.offsets[idx]);
        let scale = self.length / TAU;
        CurvePoint {
            x,
            dx: tan * scale,
            ddx: left(&tan) * (kappa * scale * scale),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> PiecewiseCurve {
        let v = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)].map(|(x, y)| Point::new(x, y));
        PiecewiseCurve::rounded_polygon(&v, 0.2).unwrap()
    }

    #[test]
    fn smoothstep_is_normalized() {
        assert!(smoothstep(0.0).abs() < 1e-15);
        assert!((smoothstep(1.0) - 1.0).abs() < 1e-14);
        assert!((smoothstep(0.3) + smoothstep(0.7) - 1.0).abs() < 1e-14);
        let h = 1e-6;
        let fd = (smoothstep(0.4 + h) - smoothstep(0.4 - h)) / (2.0 * h);
        assert!((fd - smoothstep_d1(0.4)).abs() < 1e-7);
    }

    #[test]
    fn joins_are_continuous() {
        let c = square();
        for &o in &c.offsets {
            let t = o / c.length * TAU;
            let (a, b) = (c.eval(t - 1e-10), c.eval(t + 1e-10));
            assert!((a.x - b.x).norm() < 1e-9);
            assert!((a.dx - b.dx).norm() < 1e-8);
            assert!((a.ddx - b.ddx).norm() < 1e-7);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let c = square();
        let h = 1e-5;
        for k in 0..40 {
            let t = 0.013 + TAU * k as f64 / 40.0;
            let p = c.eval(t);
            let (a, b) = (c.eval(t - h), c.eval(t + h));
            let dx = (b.x - a.x) / (2.0 * h);
            let ddx = (b.dx - a.dx) / (2.0 * h);
            assert!((dx - p.dx).norm() < 1e-7 * p.dx.norm().max(1.0), "t={t}");
            assert!((ddx - p.ddx).norm() < 1e-5 * p.ddx.norm().max(1.0), "t={t}");
        }
    }

    #[test]
    fn corners_stay_inside_the_polygon_and_turn_fully() {
        let c = square();
        let mut turning = 0.0;
        let n = 4000;
        for k in 0..n {
            let p = c.eval(TAU * k as f64 / n as f64);
            assert!((-1e-12..=1.0 + 1e-12).contains(&p.x.x));
            assert!((-1e-12..=1.0 + 1e-12).contains(&p.x.y));
            turning += p.curvature() * p.speed() * TAU / n as f64;
        }
        assert!((turning - TAU).abs() < 1e-9, "{turning}");
    }
}
