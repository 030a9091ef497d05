//! Fish bodies, receptors and trajectories around the target.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{ArcLength, Boundary, Curve, Point};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FishKind {
    /// Straight ellipse placed tangentially to the orbit.
    Ellipse,
    /// Ellipse bent along the orbit circle.
    Twisted,
}

impl FishKind {
    /// Semi-axes `(a, b)` of the body.
    pub fn semi_axes(self) -> (f64, f64) {
        match self {
            FishKind::Ellipse => (1.0, 0.2),
            FishKind::Twisted => (1.8, 0.2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FishKind::Ellipse => "ellipse",
            FishKind::Twisted => "twisted",
        }
    }
}

impl std::str::FromStr for FishKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipse" => Ok(FishKind::Ellipse),
            "twisted" => Ok(FishKind::Twisted),
            _ => Err(Error::invalid(format!(
                "unknown fish kind '{s}' (expected 'ellipse' or 'twisted')"
            ))),
        }
    }
}

/// Measurement rig: how the fish moves and how it is discretized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FishSetup {
    pub kind: FishKind,
    pub positions: usize,
    pub orbit_radius: f64,
    /// Angular span of the pose centers; `2π` is full view.
    pub aperture: f64,
    pub body_nodes: usize,
    pub receptors: usize,
}

impl Default for FishSetup {
    fn default() -> Self {
        Self {
            kind: FishKind::Twisted,
            positions: 20,
            orbit_radius: 1.0,
            aperture: TAU,
            body_nodes: 256,
            receptors: 128,
        }
    }
}

impl FishSetup {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.kind.semi_axes();
        if self.positions == 0 {
            return Err(Error::invalid("the trajectory needs at least one position"));
        }
        if !(self.aperture > 0.0) || !self.aperture.is_finite() {
            return Err(Error::invalid(format!(
                "aperture must be positive, got {}",
                self.aperture
            )));
        }
        if !(self.orbit_radius > b) {
            return Err(Error::invalid(format!(
                "orbit radius {} must exceed the body half-width {b}",
                self.orbit_radius
            )));
        }
        if self.kind == FishKind::Twisted && a / self.orbit_radius >= PI {
            return Err(Error::invalid(
                "twisted body would wrap the whole orbit; increase the orbit radius",
            ));
        }
        if self.receptors == 0 {
            return Err(Error::invalid("at least one receptor is required"));
        }
        Ok(())
    }

    /// Polar angles of the pose centers.
    pub fn pose_angles(&self) -> Vec<f64> {
        let s = self.positions as f64;
        if self.aperture >= TAU - 1e-12 {
            (0..self.positions).map(|i| TAU * i as f64 / s).collect()
        } else {
            // Centered on the positive y axis.
            let start = PI / 2.0 - self.aperture / 2.0;
            (0..self.positions)
                .map(|i| start + self.aperture * (i as f64 + 0.5) / s)
                .collect()
        }
    }
}

/// One position of the fish.
#[derive(Debug, Clone)]
pub struct FishPose {
    pub index: usize,
    /// Polar angle of the body center on the orbit.
    pub angle: f64,
    pub curve: Curve,
    pub body: Boundary,
    /// Receptor positions, uniformly spaced in arc length.
    pub receptors: Vec<Point>,
    /// Curve parameters of the receptors.
    pub receptor_params: Vec<f64>,
    pub dipole_position: Point,
    pub dipole_moment: Point,
}

impl FishPose {
    pub fn new(kind: FishKind, index: usize, angle: f64, setup: &FishSetup) -> Result<Self> {
        let (a, b) = kind.semi_axes();
        let r = setup.orbit_radius;
        let (s, c) = angle.sin_cos();
        let tangent = Point::new(-s, c);
        let (curve, dipole_position) = match kind {
            FishKind::Ellipse => (
                Curve::Ellipse {
                    center: [r * c, r * s],
                    a,
                    b,
                    angle: angle + PI / 2.0,
                },
                Point::new(r * c, r * s),
            ),
            FishKind::Twisted => (
                Curve::Twisted {
                    orbit_radius: r,
                    a,
                    b,
                    center_angle: angle,
                },
                // Image of the ellipse center under the bending map; the
                // area centroid of the bent body lies outside it.
                Point::new(r * c, r * s),
            ),
        };
        let body = Boundary::from_curve(&curve, setup.body_nodes)?;
        let arc = ArcLength::new(&curve, setup.body_nodes.max(64));
        let total = arc.total();
        let mut receptor_params = Vec::with_capacity(setup.receptors);
        let mut receptors = Vec::with_capacity(setup.receptors);
        for k in 0..setup.receptors {
            let t = if k == 0 {
                0.0
            } else {
                arc.invert(total * k as f64 / setup.receptors as f64)
            };
            receptor_params.push(t);
            receptors.push(curve.eval(t).x);
        }
        Ok(Self {
            index,
            angle,
            curve,
            body,
            receptors,
            receptor_params,
            dipole_position,
            dipole_moment: tangent,
        })
    }

    pub fn receptor_count(&self) -> usize {
        self.receptors.len()
    }
}

/// Poses equally spaced in angle over the aperture, around the origin.
pub fn fish_trajectory(setup: &FishSetup) -> Result<Vec<FishPose>> {
    setup.validate()?;
    setup
        .pose_angles()
        .into_iter()
        .enumerate()
        .map(|(i, ang)| FishPose::new(setup.kind, i, ang, setup))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_in_polygon;

    #[test]
    fn full_aperture_angles() {
        let setup = FishSetup::default();
        let ang = setup.pose_angles();
        assert_eq!(ang.len(), 20);
        for (s, a) in ang.iter().enumerate() {
            assert!((a - TAU * s as f64 / 20.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_pose_and_half_view() {
        let one = FishSetup {
            positions: 1,
            ..Default::default()
        };
        assert_eq!(fish_trajectory(&one).unwrap().len(), 1);

        let half = FishSetup {
            aperture: PI,
            kind: FishKind::Ellipse,
            ..Default::default()
        };
        for pose in fish_trajectory(&half).unwrap() {
            assert!(pose.dipole_position.y > 0.0);
        }
        let bad = FishSetup {
            aperture: 0.0,
            ..Default::default()
        };
        assert!(fish_trajectory(&bad).is_err());
    }

    #[test]
    fn receptors_evenly_spaced_and_dipole_inside() {
        for kind in [FishKind::Ellipse, FishKind::Twisted] {
            let setup = FishSetup {
                kind,
                positions: 3,
                ..Default::default()
            };
            for pose in fish_trajectory(&setup).unwrap() {
                pose.body.check_invariants().unwrap();
                assert!(point_in_polygon(&pose.dipole_position, pose.body.nodes()));
                let arc = ArcLength::new(&pose.curve, 512);
                let gap = arc.total() / pose.receptor_count() as f64;
                for w in pose.receptor_params.windows(2) {
                    let d = arc.at(w[1]) - arc.at(w[0]);
                    assert!((d - gap).abs() < 1e-8 * gap, "{kind:?} gap {d} vs {gap}");
                }
                // Receptors lie on the body curve.
                for (t, x) in pose.receptor_params.iter().zip(&pose.receptors) {
                    assert!((pose.curve.eval(*t).x - x).norm() < 1e-14);
                }
                // The target region near the origin is outside the body.
                assert!(!point_in_polygon(&Point::zeros(), pose.body.nodes()));
            }
        }
    }
}
