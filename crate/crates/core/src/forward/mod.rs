//! The fish–target transmission problem and the data it produces.
//!
//! For a pose with body `Ω`, dipole `p` and skin thickness `ξ`, the potential
//! outside the body is
//!
//! `u = p + S_Ω[ψ] - ξ D_Ω[ψ] + S_D[φ]`,
//!
//! with `ψ = ∂u/∂ν|₊` on `∂Ω` and `φ` a density on the target boundary `∂D`.
//! The unknowns solve
//!
//! * `(½ - K*_Ω + ξ ∂D_Ω/∂ν)[ψ] - ∂S_D[φ]/∂ν = ∂p/∂ν` on `∂Ω`,
//! * `(λ - K*_D)[φ] - ∂(S_Ω - ξD_Ω)[ψ]/∂ν = ∂p/∂ν` on `∂D`,
//!
//! and `H = p + S_Ω[ψ] - ξD_Ω[ψ]` is the part of `u` not radiated by the
//! target, so that the measured perturbation is `u - H = S_D[φ]`.

mod io;

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Boundary, CurvePoint, FishPose, Point};
use crate::gpt::Contrast;
use crate::potentials::{
    double_layer_exterior_on_curve, double_layer_matrix, double_layer_normal_matrix,
    hypersingular, neumann_poincare, real_times_complex, single_layer_matrix,
    single_layer_normal_matrix, single_layer_on_curve, single_layer_self, Density, DenseLu,
    ShiftedSolver,
};

pub use io::{read_measurements, write_measurements};

/// Value and gradient of the dipole potential `𝐩·∇G(x - z)` at each point.
pub fn dipole_field(moment: &Point, source: &Point, x: &[Point]) -> Result<Vec<(f64, Point)>> {
    x.iter()
        .map(|x| {
            let d = x - source;
            let r2 = d.norm_squared();
            if r2 <= f64::EPSILON * source.norm_squared().max(1.0) {
                return Err(Error::Domain(
                    "dipole field evaluated at its source".into(),
                ));
            }
            let value = moment.dot(&d) / (TAU * r2);
            let grad = crate::potentials::green_hessian(&d) * moment;
            Ok((value, grad))
        })
        .collect()
}

fn dipole_flux(pose: &FishPose, x: &[Point], normals: &[Point]) -> Result<DVector<f64>> {
    let f = dipole_field(&pose.dipole_moment, &pose.dipole_position, x)?;
    Ok(DVector::from_iterator(
        x.len(),
        f.iter().zip(normals).map(|((_, g), n)| g.dot(n)),
    ))
}

/// A target: its boundary and electrical parameters in a unit-conductivity
/// background.
#[derive(Debug, Clone)]
pub struct Target {
    pub boundary: Boundary,
    pub sigma: f64,
    pub epsilon: f64,
}

impl Target {
    pub fn new(boundary: Boundary, sigma: f64, epsilon: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid(format!(
                "target needs σ > 0 and ε ≥ 0, got σ = {sigma}, ε = {epsilon}"
            )));
        }
        Ok(Self {
            boundary,
            sigma,
            epsilon,
        })
    }

    pub fn k(&self, omega: f64) -> Complex64 {
        Complex64::new(self.sigma, self.epsilon * omega)
    }

    /// The contrast at `omega`; fails when the target matches the background.
    pub fn contrast(&self, omega: f64) -> Result<Contrast> {
        Contrast::new(self.sigma, self.epsilon, omega)
    }
}

/// Skin quantities of one pose at one frequency.
#[derive(Debug, Clone)]
pub struct SkinData {
    pub pose: usize,
    pub frequency: usize,
    pub omega: f64,
    pub xi: f64,
    /// `∂u/∂ν|₊` at the body nodes.
    pub psi: Density,
    /// Target density `φ`, absent for the background problem.
    pub phi: Option<Density>,
    /// `u` at the receptors.
    pub u: Vec<Complex64>,
    /// `H` at the receptors.
    pub h: Vec<Complex64>,
}

impl SkinData {
    /// `∮ ψ dσ` relative to `∮ |ψ| dσ`.
    pub fn net_flux(&self, body: &Boundary) -> f64 {
        let w = body.weights();
        let total: Complex64 = self.psi.iter().zip(w).map(|(p, w)| p * w).sum();
        let scale: f64 = self.psi.iter().zip(w).map(|(p, w)| p.norm() * w).sum();
        total.norm() / scale.max(f64::MIN_POSITIVE)
    }

    /// `u - H` at the receptors.
    pub fn perturbation(&self) -> Vec<Complex64> {
        self.u.iter().zip(&self.h).map(|(u, h)| u - h).collect()
    }
}

/// Receptor parameters and curve points of a pose.
fn receptor_points(pose: &FishPose) -> Vec<(f64, CurvePoint)> {
    pose.receptor_params
        .iter()
        .map(|&t| (t, pose.curve.eval(t)))
        .collect()
}

/// Frequency-independent operators of one pose, optionally with a target.
pub struct PoseSolver<'a> {
    pose: &'a FishPose,
    xi: f64,
    body_lu: DenseLu<f64>,
    background: DVector<f64>,
    /// `S_Ω - ξD_Ω|₊` from body nodes to receptors.
    receptor_map: DMatrix<f64>,
    dipole_at_receptors: Vec<f64>,
    coupling: Option<Coupling<'a>>,
}

struct Coupling<'a> {
    target: &'a Target,
    /// `A⁻¹ ∂S_D/∂ν`, body flux induced by a target density.
    induced: DMatrix<f64>,
    reduced: ShiftedSolver,
    rhs: DVector<f64>,
    /// `S_D` from target nodes to receptors.
    target_to_receptors: DMatrix<f64>,
}

/// `½ - K*_Ω + ξ∂D_Ω/∂ν`, the interior Neumann trace of the body layers.
fn body_operator(body: &Boundary, xi: f64) -> Result<DMatrix<f64>> {
    let n = body.len();
    let mut a = -neumann_poincare(body).into_matrix();
    for i in 0..n {
        a[(i, i)] += 0.5;
    }
    if xi != 0.0 {
        a += hypersingular(body, &single_layer_self(body)?).matrix() * xi;
    }
    Ok(a)
}

fn check_xi(xi: f64) -> Result<()> {
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(Error::invalid(format!(
            "skin parameter must be non-negative, got {xi}"
        )));
    }
    Ok(())
}

fn check_separated(pose: &FishPose, target: &Boundary) -> Result<()> {
    let body = &pose.body;
    let gap = body
        .nodes()
        .iter()
        .flat_map(|x| target.nodes().iter().map(move |y| (x - y).norm()))
        .fold(f64::INFINITY, f64::min);
    let spacing = body.max_spacing().max(target.max_spacing());
    let inside = crate::geometry::point_in_polygon(&target.nodes()[0], body.nodes())
        || crate::geometry::point_in_polygon(&body.nodes()[0], target.nodes());
    if inside || gap < 2.0 * spacing {
        return Err(Error::Domain(format!(
            "target is within {gap:.3e} of fish pose {}; the coupled system is unresolved",
            pose.index
        )));
    }
    Ok(())
}

impl<'a> PoseSolver<'a> {
    pub fn new(pose: &'a FishPose, target: Option<&'a Target>, xi: f64) -> Result<Self> {
        check_xi(xi)?;
        let body = &pose.body;
        let n = body.len();
        let mut a = body_operator(body, xi)?;
        // The operator annihilates constants on the adjoint side; adding the
        // mean fixes ∮ψ = 0.
        let len = body.perimeter();
        for i in 0..n {
            for (j, w) in body.weights().iter().enumerate() {
                a[(i, j)] += w / len;
            }
        }
        let body_lu = DenseLu::new(a, "fish body system")?;
        let g = dipole_flux(pose, body.nodes(), body.normals())?;
        let background = body_lu.solve(&g);

        let rec = receptor_points(pose);
        let mut receptor_map = single_layer_on_curve(body, &rec)?;
        if xi != 0.0 {
            receptor_map -= double_layer_exterior_on_curve(body, &rec) * xi;
        }
        let dipole_at_receptors = dipole_field(&pose.dipole_moment, &pose.dipole_position, &pose.receptors)?
            .into_iter()
            .map(|(v, _)| v)
            .collect();

        let coupling = match target {
            None => None,
            Some(t) => {
                let d = &t.boundary;
                check_separated(pose, d)?;
                let c = single_layer_normal_matrix(d, body.nodes(), body.normals())?;
                let induced = body_lu.solve_matrix(&c);
                let mut e = single_layer_normal_matrix(body, d.nodes(), d.normals())?;
                if xi != 0.0 {
                    e -= double_layer_normal_matrix(body, d.nodes(), d.normals())? * xi;
                }
                let z = neumann_poincare(d).into_matrix() + &e * &induced;
                let rhs = dipole_flux(pose, d.nodes(), d.normals())? + &e * &background;
                Some(Coupling {
                    target: t,
                    induced,
                    reduced: ShiftedSolver::new(z)?,
                    rhs,
                    target_to_receptors: single_layer_matrix(d, &pose.receptors)?,
                })
            }
        };
        Ok(Self {
            pose,
            xi,
            body_lu,
            background,
            receptor_map,
            dipole_at_receptors,
            coupling,
        })
    }

    pub fn pose(&self) -> &FishPose {
        self.pose
    }

    /// Body flux of the background problem (no target).
    pub fn background_flux(&self) -> &DVector<f64> {
        &self.background
    }

    fn receptor_h(&self, psi: &Density) -> Vec<Complex64> {
        real_times_complex(&self.receptor_map, psi)
            .iter()
            .zip(&self.dipole_at_receptors)
            .map(|(s, p)| s + p)
            .collect()
    }

    /// The background problem, `U` at the receptors.
    pub fn solve_background(&self, frequency: usize, omega: f64) -> SkinData {
        let psi = self.background.map(|v| Complex64::new(v, 0.0));
        let h = self.receptor_h(&psi);
        SkinData {
            pose: self.pose.index,
            frequency,
            omega,
            xi: self.xi,
            psi,
            phi: None,
            u: h.clone(),
            h,
        }
    }

    /// Full solve at one frequency; without a target this is the background.
    pub fn solve(&self, frequency: usize, omega: f64) -> Result<SkinData> {
        let Some(c) = &self.coupling else {
            return Ok(self.solve_background(frequency, omega));
        };
        let k = c.target.k(omega);
        let nd = c.target.boundary.len();
        let phi = if (k - 1.0).norm() < 1e-14 {
            Density::zeros(nd)
        } else {
            let lambda = (k + 1.0) / (2.0 * (k - 1.0));
            let rhs = c.rhs.map(|v| Complex64::new(v, 0.0));
            c.reduced.solve(lambda, &rhs)?
        };
        let psi = self.background.map(|v| Complex64::new(v, 0.0)) + real_times_complex(&c.induced, &phi);
        let h = self.receptor_h(&psi);
        let q = real_times_complex(&c.target_to_receptors, &phi);
        let u = h.iter().zip(q.iter()).map(|(h, q)| h + q).collect();
        Ok(SkinData {
            pose: self.pose.index,
            frequency,
            omega,
            xi: self.xi,
            psi,
            phi: Some(phi),
            u,
            h,
        })
    }

    /// Solves the full coupled system densely, without the reduction; kept
    /// as an independent check of [`PoseSolver::solve`].
    pub fn solve_dense(&self, omega: f64) -> Result<(Density, Density)> {
        let Some(c) = &self.coupling else {
            return Err(Error::invalid("dense solve needs a target"));
        };
        let body = &self.pose.body;
        let d = &c.target.boundary;
        let (n, m) = (body.len(), d.len());
        let k = c.target.k(omega);
        let mut a = body_operator(body, self.xi)?;
        for i in 0..n {
            for (j, w) in body.weights().iter().enumerate() {
                a[(i, j)] += w / body.perimeter();
            }
        }
        let cm = single_layer_normal_matrix(d, body.nodes(), body.normals())?;
        let mut e = single_layer_normal_matrix(body, d.nodes(), d.normals())?;
        if self.xi != 0.0 {
            e -= double_layer_normal_matrix(body, d.nodes(), d.normals())? * self.xi;
        }
        let kd = neumann_poincare(d).into_matrix();
        let mut big = DMatrix::<Complex64>::zeros(n + m, n + m);
        let re = |v: f64| Complex64::new(v, 0.0);
        for i in 0..n {
            for j in 0..n {
                big[(i, j)] = re(a[(i, j)]);
            }
            for j in 0..m {
                big[(i, n + j)] = re(-cm[(i, j)]);
            }
        }
        for i in 0..m {
            for j in 0..n {
                big[(n + i, j)] = -(k - 1.0) * e[(i, j)];
            }
            for j in 0..m {
                let diag = if i == j { (k + 1.0) * 0.5 } else { re(0.0) };
                big[(n + i, n + j)] = diag - (k - 1.0) * kd[(i, j)];
            }
        }
        let g = dipole_flux(self.pose, body.nodes(), body.normals())?;
        let h = dipole_flux(self.pose, d.nodes(), d.normals())?;
        let rhs = Density::from_fn(n + m, |i, _| {
            if i < n {
                re(g[i])
            } else {
                (k - 1.0) * h[i - n]
            }
        });
        let sol = DenseLu::new(big, "coupled fish-target system")?.solve(&rhs);
        Ok((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
    }

    /// `P_Ω = ½ - K*_Ω + ξ∂D_Ω/∂ν` applied to a body flux.
    pub fn postprocess(&self, flux: &Density) -> Result<Density> {
        postprocess(self.pose, flux, self.xi)
    }

    /// Direct solve with the factored body operator, used for consistency
    /// checks of the mean-free flux.
    pub fn body_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.body_lu.solve(rhs)
    }
}

/// One forward solve.
pub fn solve_forward(
    pose: &FishPose,
    target: Option<&Target>,
    omega: f64,
    xi: f64,
) -> Result<SkinData> {
    PoseSolver::new(pose, target, xi)?.solve(0, omega)
}

/// `P_Ω[flux]` at the body nodes.
pub fn postprocess(pose: &FishPose, flux: &Density, xi: f64) -> Result<Density> {
    check_xi(xi)?;
    let body = &pose.body;
    if flux.len() != body.len() {
        return Err(Error::Dimension {
            context: "postprocessed flux",
            expected: body.len(),
            found: flux.len(),
        });
    }
    Ok(real_times_complex(&body_operator(body, xi)?, flux))
}

/// `H = p + S_Ω[ψ] - ξD_Ω[ψ]` at points away from the body.
pub fn compute_h(pose: &FishPose, sd: &SkinData, x: &[Point]) -> Result<Vec<Complex64>> {
    let body = &pose.body;
    if sd.psi.len() != body.len() {
        return Err(Error::Dimension {
            context: "skin flux",
            expected: body.len(),
            found: sd.psi.len(),
        });
    }
    let mut m = single_layer_matrix(body, x)?;
    if sd.xi != 0.0 {
        m -= double_layer_matrix(body, x)? * sd.xi;
    }
    let p = dipole_field(&pose.dipole_moment, &pose.dipole_position, x)?;
    Ok(real_times_complex(&m, &sd.psi)
        .iter()
        .zip(p)
        .map(|(s, (p, _))| s + p)
        .collect())
}

/// Multi-frequency data `Q_sr = u_s(x_r) - H_s(x_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub frequencies: Vec<f64>,
    /// One `S×R` matrix per frequency.
    pub q: Vec<DMatrix<Complex64>>,
    pub pose_angles: Vec<f64>,
    /// Receptor positions per pose.
    pub receptors: Vec<Vec<[f64; 2]>>,
    /// Assumed target location.
    pub z: [f64; 2],
}

impl MeasurementSet {
    pub fn poses(&self) -> usize {
        self.pose_angles.len()
    }

    pub fn receptors_per_pose(&self) -> usize {
        self.receptors.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, r) = (self.poses(), self.receptors_per_pose());
        if self.q.len() != self.frequencies.len() {
            return Err(Error::Dimension {
                context: "measurement frequencies",
                expected: self.frequencies.len(),
                found: self.q.len(),
            });
        }
        if self.receptors.iter().any(|v| v.len() != r) {
            return Err(Error::invalid("receptor counts differ between poses"));
        }
        for q in &self.q {
            if q.nrows() != s || q.ncols() != r {
                return Err(Error::Dimension {
                    context: "measurement matrix",
                    expected: s * r,
                    found: q.nrows() * q.ncols(),
                });
            }
        }
        Ok(())
    }
}

/// A full simulated acquisition: the data and the skin quantities behind it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub measurements: MeasurementSet,
    /// `skin[s][f]` for pose `s` and frequency `f`.
    pub skin: Vec<Vec<SkinData>>,
    /// Background flux per pose.
    pub background: Vec<DVector<f64>>,
}

/// Simulates every pose at every frequency. Poses run in parallel.
pub fn data_matrix(
    poses: &[FishPose],
    target: Option<&Target>,
    frequencies: &[f64],
    xi: f64,
    z: Point,
) -> Result<Simulation> {
    if poses.is_empty() {
        return Err(Error::invalid("data matrix needs at least one pose"));
    }
    if frequencies.is_empty() {
        return Err(Error::invalid("data matrix needs at least one frequency"));
    }
    let r = poses[0].receptor_count();
    if poses.iter().any(|p| p.receptor_count() != r) {
        return Err(Error::invalid("receptor counts differ between poses"));
    }
    let per_pose: Vec<(Vec<SkinData>, DVector<f64>)> = poses
        .par_iter()
        .map(|pose| {
            let solver = PoseSolver::new(pose, target, xi)?;
            let skin = frequencies
                .iter()
                .enumerate()
                .map(|(f, &w)| solver.solve(f, w))
                .collect::<Result<Vec<_>>>()?;
            Ok((skin, solver.background.clone()))
        })
        .collect::<Result<_>>()?;
    let q = (0..frequencies.len())
        .map(|f| {
            DMatrix::from_fn(poses.len(), r, |s, j| {
                let sd = &per_pose[s].0[f];
                sd.u[j] - sd.h[j]
            })
        })
        .collect();
    let (skin, background) = per_pose.into_iter().unzip();
    Ok(Simulation {
        measurements: MeasurementSet {
            frequencies: frequencies.to_vec(),
            q,
            pose_angles: poses.iter().map(|p| p.angle).collect(),
            receptors: poses
                .iter()
                .map(|p| p.receptors.iter().map(|x| [x.x, x.y]).collect())
                .collect(),
            z: [z.x, z.y],
        },
        skin,
        background,
    })
}
