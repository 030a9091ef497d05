//! Target shapes: analytic ellipses and rounded polygons.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cross, shoelace_area, Boundary, Curve, PiecewiseCurve, Point};
use crate::error::{Error, Result};

/// Outline of the letter A (closed counter) before normalization.
const LETTER_A: [(f64, f64); 8] = [
    (-0.5, -0.5),
    (-0.3, -0.5),
    (-0.2, -0.2),
    (0.2, -0.2),
    (0.3, -0.5),
    (0.5, -0.5),
    (0.1, 0.5),
    (-0.1, 0.5),
];

const LETTER_E: [(f64, f64); 12] = [
    (-0.4, -0.5),
    (0.4, -0.5),
    (0.4, -0.3),
    (-0.15, -0.3),
    (-0.15, -0.1),
    (0.3, -0.1),
    (0.3, 0.1),
    (-0.15, 0.1),
    (-0.15, 0.3),
    (0.4, 0.3),
    (0.4, 0.5),
    (-0.4, 0.5),
];

/// Corner rounding as a fraction of the shape diameter.
pub const DEFAULT_ROUNDING: f64 = 0.05;

/// Parametric description of a target shape.
///
/// Polygonal shapes are centered on their area centroid and have their
/// corners replaced by circular arcs of radius `rounding`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeSpec {
    Disk {
        radius: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    Rectangle {
        width: f64,
        height: f64,
        rounding: f64,
    },
    Square {
        side: f64,
        rounding: f64,
    },
    /// Equilateral triangle.
    Triangle {
        side: f64,
        rounding: f64,
    },
    #[serde(rename = "letterA")]
    LetterA {
        diameter: f64,
        rounding: f64,
    },
    #[serde(rename = "letterE")]
    LetterE {
        diameter: f64,
        rounding: f64,
    },
    /// Closed polyline, used verbatim (no recentering).
    Custom {
        vertices: Vec<[f64; 2]>,
        rounding: f64,
    },
}

impl ShapeSpec {
    pub const KINDS: [&'static str; 8] = [
        "disk",
        "ellipse",
        "rectangle",
        "square",
        "triangle",
        "letterA",
        "letterE",
        "custom",
    ];

    /// Unit-diameter default for a named kind.
    pub fn named(kind: &str) -> Result<Self> {
        let r = DEFAULT_ROUNDING;
        Ok(match kind {
            "disk" => ShapeSpec::Disk { radius: 0.5 },
            "ellipse" => ShapeSpec::Ellipse { a: 0.5, b: 0.25 },
            "rectangle" => {
                let d = 5f64.sqrt();
                ShapeSpec::Rectangle {
                    width: 2.0 / d,
                    height: 1.0 / d,
                    rounding: r,
                }
            }
            "square" => ShapeSpec::Square {
                side: 0.5f64.sqrt(),
                rounding: r,
            },
            "triangle" => ShapeSpec::Triangle {
                side: 1.0,
                rounding: r,
            },
            "letterA" => ShapeSpec::LetterA {
                diameter: 1.0,
                rounding: r,
            },
            "letterE" => ShapeSpec::LetterE {
                diameter: 1.0,
                rounding: r,
            },
            other => {
                return Err(Error::invalid(format!(
                    "unknown shape kind '{other}'; valid kinds: {}",
                    Self::KINDS[..7].join(", ")
                )))
            }
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ShapeSpec::Disk { .. } => "disk",
            ShapeSpec::Ellipse { .. } => "ellipse",
            ShapeSpec::Rectangle { .. } => "rectangle",
            ShapeSpec::Square { .. } => "square",
            ShapeSpec::Triangle { .. } => "triangle",
            ShapeSpec::LetterA { .. } => "letterA",
            ShapeSpec::LetterE { .. } => "letterE",
            ShapeSpec::Custom { .. } => "custom",
        }
    }

    /// Whether the shape is a smooth analytic curve (no rounded corners).
    pub fn is_analytic(&self) -> bool {
        matches!(self, ShapeSpec::Disk { .. } | ShapeSpec::Ellipse { .. })
    }

    /// Node count at which the sampled boundary resolves the shape to
    /// roughly machine precision in the layer potentials.
    pub fn recommended_nodes(&self) -> usize {
        match self {
            ShapeSpec::Disk { .. } | ShapeSpec::Ellipse { .. } => 256,
            ShapeSpec::LetterA { .. } | ShapeSpec::LetterE { .. } | ShapeSpec::Custom { .. } => 768,
            _ => 512,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{} parameter '{name}' must be positive, got {v}",
                    self.kind()
                )))
            }
        };
        match *self {
            ShapeSpec::Disk { radius } => positive("radius", radius),
            ShapeSpec::Ellipse { a, b } => {
                positive("a", a)?;
                positive("b", b)
            }
            ShapeSpec::Rectangle {
                width,
                height,
                rounding,
            } => {
                positive("width", width)?;
                positive("height", height)?;
                positive("rounding", rounding)
            }
            ShapeSpec::Square { side, rounding } | ShapeSpec::Triangle { side, rounding } => {
                positive("side", side)?;
                positive("rounding", rounding)
            }
            ShapeSpec::LetterA { diameter, rounding } | ShapeSpec::LetterE { diameter, rounding } => {
                positive("diameter", diameter)?;
                positive("rounding", rounding)
            }
            ShapeSpec::Custom { ref vertices, rounding } => {
                positive("rounding", rounding)?;
                let pts: Vec<Point> = vertices.iter().map(|v| Point::new(v[0], v[1])).collect();
                check_simple(&pts)
            }
        }
    }
}

fn pts(table: &[(f64, f64)]) -> Vec<Point> {
    table.iter().map(|&(x, y)| Point::new(x, y)).collect()
}

fn diameter(poly: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, p) in poly.iter().enumerate() {
        for q in &poly[i + 1..] {
            d = d.max((p - q).norm());
        }
    }
    d
}

fn polygon_centroid(poly: &[Point]) -> Point {
    let n = poly.len();
    let a = shoelace_area(poly);
    let mut c = Point::zeros();
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        c += (p + q) * cross(&p, &q);
    }
    c / (6.0 * a)
}

/// Recenters on the area centroid and rescales to the given diameter.
fn normalize(mut poly: Vec<Point>, target_diameter: f64) -> Vec<Point> {
    let c = polygon_centroid(&poly);
    let s = target_diameter / diameter(&poly);
    for p in &mut poly {
        *p = (*p - c) * s;
    }
    poly
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let orient = |a: Point, b: Point, c: Point| cross(&(b - a), &(c - a));
    let on_segment = |a: Point, b: Point, c: Point| {
        c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
    };
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Rejects closed polylines with fewer than three vertices, repeated
/// consecutive vertices, or crossing edges.
fn check_simple(poly: &[Point]) -> Result<()> {
    let n = poly.len();
    if n < 3 {
        return Err(Error::invalid("a polyline needs at least three vertices"));
    }
    for i in 0..n {
        if (poly[(i + 1) % n] - poly[i]).norm() == 0.0 {
            return Err(Error::invalid(format!("repeated vertex at index {i}")));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return Err(Error::invalid(format!(
                    "polyline is self-intersecting (edges {i} and {j})"
                )));
            }
        }
    }
    if shoelace_area(poly).abs() == 0.0 {
        return Err(Error::invalid("polyline encloses no area"));
    }
    Ok(())
}

/// Reads a plain-text polyline: one `x y` pair per line, implicitly closed.
/// Blank lines and lines starting with `#` are skipped.
pub fn load_polyline(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y)), None) if x.is_finite() && y.is_finite() => out.push([x, y]),
            _ => {
                return Err(Error::format(
                    path,
                    format!("line {}: expected two numbers, got '{line}'", lineno + 1),
                ))
            }
        }
    }
    let poly: Vec<Point> = out.iter().map(|v| Point::new(v[0], v[1])).collect();
    check_simple(&poly)?;
    Ok(out)
}

/// Continuous parametrization of a shape.
pub fn shape_curve(spec: &ShapeSpec) -> Result<Curve> {
    spec.validate()?;
    let rounded = |poly: Vec<Point>, r: f64| -> Result<Curve> {
        Ok(Curve::Piecewise(PiecewiseCurve::rounded_polygon(&poly, r)?))
    };
    match spec {
        ShapeSpec::Disk { radius } => Ok(Curve::Ellipse {
            center: [0.0, 0.0],
            a: *radius,
            b: *radius,
            angle: 0.0,
        }),
        ShapeSpec::Ellipse { a, b } => Ok(Curve::Ellipse {
            center: [0.0, 0.0],
            a: *a,
            b: *b,
            angle: 0.0,
        }),
        ShapeSpec::Rectangle {
            width,
            height,
            rounding,
        } => {
            let (w, h) = (width / 2.0, height / 2.0);
            rounded(
                vec![
                    Point::new(-w, -h),
                    Point::new(w, -h),
                    Point::new(w, h),
                    Point::new(-w, h),
                ],
                *rounding,
            )
        }
        ShapeSpec::Square { side, rounding } => {
            let s = side / 2.0;
            rounded(
                vec![
                    Point::new(-s, -s),
                    Point::new(s, -s),
                    Point::new(s, s),
                    Point::new(-s, s),
                ],
                *rounding,
            )
        }
        ShapeSpec::Triangle { side, rounding } => {
            // Circumradius side/√3, centroid at the origin.
            let r = side / 3f64.sqrt();
            let poly = (0..3)
                .map(|k| {
                    let ang = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::TAU / 3.0;
                    Point::new(r * ang.cos(), r * ang.sin())
                })
                .collect();
            rounded(poly, *rounding)
        }
        ShapeSpec::LetterA { diameter, rounding } => {
            rounded(normalize(pts(&LETTER_A), *diameter), *rounding)
        }
        ShapeSpec::LetterE { diameter, rounding } => {
            rounded(normalize(pts(&LETTER_E), *diameter), *rounding)
        }
        ShapeSpec::Custom { vertices, rounding } => rounded(
            vertices.iter().map(|v| Point::new(v[0], v[1])).collect(),
            *rounding,
        ),
    }
}

/// Samples a shape at `n_nodes` equispaced parameter values.
pub fn make_shape(spec: &ShapeSpec, n_nodes: usize) -> Result<Boundary> {
    Boundary::from_curve(&shape_curve(spec)?, n_nodes)
}
