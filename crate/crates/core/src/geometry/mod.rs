//! Closed-curve geometry for targets and fish bodies.
//!
//! Boundaries are sampled at equispaced parameter values of a smooth periodic
//! parametrization, which is what the periodic trapezoidal and Kress rules in
//! [`crate::potentials`] expect.

mod curve;
mod fish;
mod shapes;

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Vector2};

pub use curve::{Curve, CurvePoint, PiecewiseCurve};
pub use fish::{fish_trajectory, FishKind, FishPose, FishSetup};
pub use shapes::{load_polyline, make_shape, shape_curve, ShapeSpec};

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

pub(crate) fn cross(a: &Point, b: &Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Counterclockwise quarter turn.
pub(crate) fn left(v: &Point) -> Point {
    Point::new(-v.y, v.x)
}

pub fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Signed polygon area (positive for counterclockwise vertex order).
pub fn shoelace_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| cross(&poly[i], &poly[(i + 1) % n]))
        .sum::<f64>()
        / 2.0
}

/// Even-odd ray casting test against a closed polyline.
pub fn point_in_polygon(p: &Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Discretized smooth closed curve.
///
/// Node `j` sits at parameter `t_j = 2πj/N`; `weights[j] = |x'(t_j)| 2π/N`
/// are the trapezoidal arc-length weights.
#[derive(Debug, Clone)]
pub struct Boundary {
    nodes: Vec<Point>,
    tangents: Vec<Point>,
    normals: Vec<Point>,
    weights: Vec<f64>,
    speeds: Vec<f64>,
    curvature: Vec<f64>,
}

impl Boundary {
    pub fn from_curve(curve: &Curve, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::invalid(format!(
                "a boundary needs at least 16 nodes, got {n}"
            )));
        }
        if n % 2 != 0 {
            return Err(Error::invalid(format!(
                "node count must be even for the log-singular rule, got {n}"
            )));
        }
        let h = TAU / n as f64;
        let mut b = Boundary {
            nodes: Vec::with_capacity(n),
            tangents: Vec::with_capacity(n),
            normals: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
            speeds: Vec::with_capacity(n),
            curvature: Vec::with_capacity(n),
        };
        for j in 0..n {
            let cp = curve.eval(h * j as f64);
            let speed = cp.speed();
            if !(speed > 0.0) || !speed.is_finite() {
                return Err(Error::invalid("curve parametrization is degenerate"));
            }
            let tan = cp.dx / speed;
            b.nodes.push(cp.x);
            b.tangents.push(tan);
            b.normals.push(Point::new(tan.y, -tan.x));
            b.weights.push(speed * h);
            b.speeds.push(speed);
            b.curvature.push(cp.curvature());
        }
        if b.signed_area() <= 0.0 {
            return Err(Error::invalid(
                "curve must be positively oriented and enclose a nonzero area",
            ));
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn tangents(&self) -> &[Point] {
        &self.tangents
    }

    /// Outward unit normals.
    pub fn normals(&self) -> &[Point] {
        &self.normals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `|x'(t_j)|` at each node.
    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    /// Signed curvature, positive on convex arcs.
    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    /// Parameter spacing `2π/N`.
    pub fn step(&self) -> f64 {
        TAU / self.len() as f64
    }

    pub fn param(&self, j: usize) -> f64 {
        self.step() * j as f64
    }

    pub fn perimeter(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Enclosed area from `½∮ x·ν dσ`, spectrally accurate on smooth curves.
    pub fn signed_area(&self) -> f64 {
        0.5 * self
            .nodes
            .iter()
            .zip(&self.normals)
            .zip(&self.weights)
            .map(|((x, n), w)| x.dot(n) * w)
            .sum::<f64>()
    }

    /// Area centroid from `½∮ |x|² ν dσ / area`.
    pub fn centroid(&self) -> Point {
        let mut c = Point::zeros();
        for ((x, n), w) in self.nodes.iter().zip(&self.normals).zip(&self.weights) {
            c += n * (0.5 * x.norm_squared() * w);
        }
        c / self.signed_area()
    }

    /// Total turning of the tangent, `2π` for simple positive curves.
    pub fn turning_number(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let a = self.tangents[i];
                let b = self.tangents[(i + 1) % n];
                cross(&a, &b).atan2(a.dot(&b))
            })
            .sum()
    }

    /// Smallest distance between consecutive nodes.
    pub fn min_spacing(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| (self.nodes[(i + 1) % n] - self.nodes[i]).norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| (self.nodes[(i + 1) % n] - self.nodes[i]).norm())
            .fold(0.0, f64::max)
    }

    /// Axis-aligned bounding box `(min, max)` of the nodes.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for x in &self.nodes {
            lo = lo.inf(x);
            hi = hi.sup(x);
        }
        (lo, hi)
    }

    /// Largest distance from `center` to a node.
    pub fn radius_about(&self, center: &Point) -> f64 {
        self.nodes
            .iter()
            .map(|x| (x - center).norm())
            .fold(0.0, f64::max)
    }

    /// Checks the documented discretization invariants.
    pub fn check_invariants(&self) -> Result<()> {
        for (j, n) in self.normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("normal {j} is not unit length")));
            }
        }
        let net: Point = self
            .normals
            .iter()
            .zip(&self.weights)
            .map(|(n, w)| n * *w)
            .sum();
        if net.norm() > 1e-10 * self.perimeter() {
            return Err(Error::invalid(format!(
                "normals do not integrate to zero (|∮ν dσ| = {:.3e})",
                net.norm()
            )));
        }
        Ok(())
    }

    /// Similarity map `x ↦ shift + scale·R(angle)·x`.
    pub fn transform(&self, scale: f64, angle: f64, shift: Point) -> Result<Boundary> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid(format!(
                "scale factor must be positive, got {scale}"
            )));
        }
        let rot = rotation(angle);
        Ok(Boundary {
            nodes: self.nodes.iter().map(|x| shift + rot * x * scale).collect(),
            tangents: self.tangents.iter().map(|t| rot * t).collect(),
            normals: self.normals.iter().map(|n| rot * n).collect(),
            weights: self.weights.iter().map(|w| w * scale).collect(),
            speeds: self.speeds.iter().map(|s| s * scale).collect(),
            curvature: self.curvature.iter().map(|k| k / scale).collect(),
        })
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Cumulative arc length of a curve, invertible to high accuracy.
pub(crate) struct ArcLength<'a> {
    curve: &'a Curve,
    panel_start: Vec<f64>,
    gl: (Vec<f64>, Vec<f64>),
    h: f64,
}

impl<'a> ArcLength<'a> {
    pub fn new(curve: &'a Curve, panels: usize) -> Self {
        let gl = gauss_legendre(10);
        let h = TAU / panels as f64;
        let mut me = Self {
            curve,
            panel_start: Vec::with_capacity(panels + 1),
            gl,
            h,
        };
        let mut acc = 0.0;
        for k in 0..panels {
            me.panel_start.push(acc);
            acc += me.integrate(h * k as f64, h * (k + 1) as f64);
        }
        me.panel_start.push(acc);
        me
    }

    fn integrate(&self, a: f64, b: f64) -> f64 {
        let (xs, ws) = &self.gl;
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        xs.iter()
            .zip(ws)
            .map(|(x, w)| w * self.curve.eval(mid + half * x).speed())
            .sum::<f64>()
            * half
    }

    pub fn total(&self) -> f64 {
        *self.panel_start.last().unwrap()
    }

    /// Arc length from parameter 0 to `t ∈ [0, 2π]`.
    pub fn at(&self, t: f64) -> f64 {
        let k = ((t / self.h) as usize).min(self.panel_start.len() - 2);
        let t0 = self.h * k as f64;
        self.panel_start[k] + self.integrate(t0, t)
    }

    /// Parameter at which the arc length equals `s`.
    pub fn invert(&self, s: f64) -> f64 {
        let k = match self
            .panel_start
            .binary_search_by(|p| p.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.panel_start.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.panel_start.len() - 2),
        };
        let (mut lo, mut hi) = (self.h * k as f64, self.h * (k + 1) as f64);
        let mut t = 0.5 * (lo + hi);
        for _ in 0..60 {
            let f = self.at(t) - s;
            let step = f / self.curve.eval(t).speed();
            if step.abs() < 1e-15 {
                return t - step;
            }
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let next = t - step;
            t = if next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((int - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn arc_length_of_ellipse_quadrant_matches_series() {
        let c = Curve::Ellipse {
            center: [0.0, 0.0],
            a: 2.0,
            b: 1.0,
            angle: 0.0,
        };
        let al = ArcLength::new(&c, 64);
        // Ramanujan II is accurate to ~1e-10 relative at this eccentricity.
        let (a, b) = (2.0f64, 1.0f64);
        let h = ((a - b) / (a + b)).powi(2);
        let ram = PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()));
        assert!((al.total() - ram).abs() < 1e-6 * ram);
        let t = al.invert(0.3 * al.total());
        assert!((al.at(t) - 0.3 * al.total()).abs() < 1e-12);
    }

    #[test]
    fn polygon_tests() {
        let sq = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        assert_eq!(shoelace_area(&sq), 1.0);
        assert!(point_in_polygon(&Point::new(0.5, 0.5), &sq));
        assert!(!point_in_polygon(&Point::new(1.5, 0.5), &sq));
    }
}
