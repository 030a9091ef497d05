//! Least-squares recovery of contracted GPTs from multistatic data.
//!
//! Around the target center `z`, `H` expands into circular harmonics,
//! `(1/α!) ∂^α H(z) = A_m a_α + B_m b_α` for `|α| = m`, and the data read
//!
//! `Q_sr ≈ Σ_{m+n ≤ K+1} (A_m, B_m) 𝐌_mn 𝐆_nr`, with
//! `𝐆_nr = -(cos nθ, sin nθ)ᵀ / (2πn rⁿ)` in polar coordinates of `x_r - z`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::SkinData;
use crate::geometry::{point_in_polygon, FishPose, Point};
use crate::gpt::CgptMatrix;
use crate::potentials::{green_hessian, trig_interp_weights, Density};

/// Relative singular-value cutoff of the pseudo-inverse.
pub const SVD_CUTOFF: f64 = 1e-10;

/// `(cos mθ, sin mθ) / rᵐ` of `v`.
fn polar_harmonic(v: &Point, m: usize) -> (f64, f64) {
    let r = v.norm();
    let th = v.y.atan2(v.x);
    let s = r.powi(-(m as i32));
    ((m as f64 * th).cos() * s, (m as f64 * th).sin() * s)
}

/// `A_m`, `B_m` for `m = 1..=order` of one pose at one frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCoefficients {
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
}

impl SourceCoefficients {
    pub fn order(&self) -> usize {
        self.a.len()
    }

    /// `∇H(z) = (A₁, B₁)`.
    pub fn gradient(&self) -> (Complex64, Complex64) {
        (self.a[0], self.b[0])
    }
}

fn check_outside(pose: &FishPose, z: &Point) -> Result<()> {
    let body = &pose.body;
    let gap = body
        .nodes()
        .iter()
        .map(|x| (x - z).norm())
        .fold(f64::INFINITY, f64::min);
    if point_in_polygon(z, body.nodes()) || gap < 2.0 * body.max_spacing() {
        return Err(Error::Domain(format!(
            "target center ({:.4}, {:.4}) is inside or on fish pose {}",
            z.x, z.y, pose.index
        )));
    }
    Ok(())
}

/// Harmonic coefficients of `H` about `z` up to `order`, from the dipole
/// and the skin flux in closed form.
pub fn source_coeffs(pose: &FishPose, sd: &SkinData, z: &Point, order: usize) -> Result<SourceCoefficients> {
    if order == 0 {
        return Err(Error::invalid("source coefficient order must be at least 1"));
    }
    check_outside(pose, z)?;
    let body = &pose.body;
    if sd.psi.len() != body.len() {
        return Err(Error::Dimension {
            context: "skin flux",
            expected: body.len(),
            found: sd.psi.len(),
        });
    }
    let p = pose.dipole_moment;
    let zs = z - pose.dipole_position;
    let mut a = Vec::with_capacity(order);
    let mut b = Vec::with_capacity(order);
    for m in 1..=order {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let (c1, s1) = polar_harmonic(&zs, m + 1);
        let mut am = Complex64::new(sign / TAU * (p.x * c1 + p.y * s1), 0.0);
        let mut bm = Complex64::new(sign / TAU * (p.x * s1 - p.y * c1), 0.0);
        for (j, (y, w)) in body.nodes().iter().zip(body.weights()).enumerate() {
            let v = y - z;
            let (cm, sm) = polar_harmonic(&v, m);
            let f = sd.psi[j] * *w;
            am -= f * (cm / (TAU * m as f64));
            bm -= f * (sm / (TAU * m as f64));
            if sd.xi != 0.0 {
                let n = body.normals()[j];
                let (c1, s1) = polar_harmonic(&v, m + 1);
                am -= f * (sd.xi / TAU * (c1 * n.x + s1 * n.y));
                bm -= f * (sd.xi / TAU * (s1 * n.x - c1 * n.y));
            }
        }
        a.push(am);
        b.push(bm);
    }
    Ok(SourceCoefficients { a, b })
}

/// The CGPT blocks `(m, n)`, `m + n ≤ K + 1`, in unknown order.
pub fn block_list(k: usize) -> Vec<(usize, usize)> {
    (1..=k)
        .flat_map(|m| (1..=k + 1 - m).map(move |n| (m, n)))
        .collect()
}

/// Dense map from stacked CGPT entries to stacked data at one frequency.
///
/// Columns run over [`block_list`] with entries `cc, cs, sc, ss` per block;
/// row `s·R + r` is receptor `r` of pose `s`.
#[derive(Debug, Clone)]
pub struct LinearForwardMap {
    pub order: usize,
    pub poses: usize,
    pub receptors: usize,
    pub matrix: DMatrix<Complex64>,
}

/// Builds the map from per-pose source coefficients and receptor positions.
pub fn assemble_operator(
    coeffs: &[SourceCoefficients],
    receptors: &[Vec<Point>],
    z: &Point,
    k: usize,
) -> Result<LinearForwardMap> {
    if k == 0 {
        return Err(Error::invalid("expansion order K must be at least 1"));
    }
    if coeffs.len() != receptors.len() {
        return Err(Error::Dimension {
            context: "source coefficients per pose",
            expected: receptors.len(),
            found: coeffs.len(),
        });
    }
    if coeffs.is_empty() {
        return Err(Error::invalid("the forward map needs at least one pose"));
    }
    let r = receptors[0].len();
    if receptors.iter().any(|v| v.len() != r) {
        return Err(Error::invalid("receptor counts differ between poses"));
    }
    if let Some(c) = coeffs.iter().find(|c| c.order() < k) {
        return Err(Error::invalid(format!(
            "source coefficients of order {} cannot feed K = {k}",
            c.order()
        )));
    }
    let blocks = block_list(k);
    let mut matrix = DMatrix::zeros(coeffs.len() * r, 4 * blocks.len());
    for (s, (c, xs)) in coeffs.iter().zip(receptors).enumerate() {
        for (j, x) in xs.iter().enumerate() {
            let v = x - z;
            if v.norm() <= 1e-12 {
                return Err(Error::Domain(format!(
                    "receptor {j} of pose {s} coincides with the target center"
                )));
            }
            let row = s * r + j;
            for (col, &(m, n)) in blocks.iter().enumerate() {
                let (cn, sn) = polar_harmonic(&v, n);
                let g = [-cn / (TAU * n as f64), -sn / (TAU * n as f64)];
                let sm = [c.a[m - 1], c.b[m - 1]];
                for p in 0..2 {
                    for q in 0..2 {
                        matrix[(row, 4 * col + 2 * p + q)] = sm[p] * g[q];
                    }
                }
            }
        }
    }
    Ok(LinearForwardMap {
        order: k,
        poses: coeffs.len(),
        receptors: r,
        matrix,
    })
}

fn stack(m: &CgptMatrix, k: usize) -> Result<DVector<Complex64>> {
    let blocks = block_list(k);
    let mut v = DVector::zeros(4 * blocks.len());
    for (col, &(a, b)) in blocks.iter().enumerate() {
        if a > m.order() || b > m.order() {
            return Err(Error::invalid(format!(
                "CGPT of order {} lacks block ({a}, {b})",
                m.order()
            )));
        }
        let blk = m.block(a, b);
        for p in 0..2 {
            for q in 0..2 {
                v[4 * col + 2 * p + q] = blk[(p, q)];
            }
        }
    }
    Ok(v)
}

fn unstack(v: &DVector<Complex64>, k: usize) -> CgptMatrix {
    let mut out = CgptMatrix::zeros(k);
    for (col, (a, b)) in block_list(k).into_iter().enumerate() {
        let blk = out.block_mut(a, b);
        for p in 0..2 {
            for q in 0..2 {
                blk[(p, q)] = v[4 * col + 2 * p + q];
            }
        }
    }
    out
}

impl LinearForwardMap {
    pub fn unknowns(&self) -> usize {
        self.matrix.ncols()
    }

    /// Predicted `S×R` data of a CGPT matrix (blocks beyond the map's
    /// truncation are ignored).
    pub fn apply(&self, m: &CgptMatrix) -> Result<DMatrix<Complex64>> {
        let v = &self.matrix * stack(m, self.order)?;
        Ok(DMatrix::from_fn(self.poses, self.receptors, |s, r| {
            v[s * self.receptors + r]
        }))
    }

    pub fn singular_values(&self) -> DVector<f64> {
        self.matrix.clone().svd(false, false).singular_values
    }

    /// Numerical rank under the relative cutoff.
    pub fn rank(&self) -> usize {
        let sv = self.singular_values();
        let top = sv.max();
        sv.iter().filter(|&&s| s > SVD_CUTOFF * top).count()
    }

    /// Pseudo-inverse with the relative cutoff, ready for repeated solves.
    pub fn solver(&self) -> Result<CgptSolver> {
        let svd = self.matrix.clone().svd(true, true);
        let top = svd.singular_values.max();
        if !(top > 0.0) {
            return Err(Error::Singular {
                context: "CGPT forward map is identically zero".into(),
                condition: f64::INFINITY,
            });
        }
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > SVD_CUTOFF * top)
            .count();
        let smallest = svd
            .singular_values
            .iter()
            .copied()
            .filter(|&s| s > SVD_CUTOFF * top)
            .fold(f64::INFINITY, f64::min);
        let pinv = svd
            .pseudo_inverse(SVD_CUTOFF * top)
            .map_err(|e| Error::Singular {
                context: format!("pseudo-inverse: {e}"),
                condition: f64::INFINITY,
            })?;
        Ok(CgptSolver {
            order: self.order,
            poses: self.poses,
            receptors: self.receptors,
            pinv,
            rank,
            amplification: 1.0 / smallest,
        })
    }
}

/// Precomputed pseudo-inverse of a [`LinearForwardMap`].
#[derive(Debug, Clone)]
pub struct CgptSolver {
    order: usize,
    poses: usize,
    receptors: usize,
    pinv: DMatrix<Complex64>,
    pub rank: usize,
    /// Inverse of the smallest retained singular value.
    pub amplification: f64,
}

impl CgptSolver {
    pub fn solve(&self, q: &DMatrix<Complex64>) -> Result<CgptMatrix> {
        if q.shape() != (self.poses, self.receptors) {
            return Err(Error::Dimension {
                context: "data matrix for CGPT recovery",
                expected: self.poses * self.receptors,
                found: q.len(),
            });
        }
        let v = DVector::from_fn(self.poses * self.receptors, |i, _| {
            q[(i / self.receptors, i % self.receptors)]
        });
        Ok(unstack(&(&self.pinv * v), self.order))
    }

    /// Only the first-order block, skipping the higher rows of the product.
    pub fn solve_pt(&self, q: &DMatrix<Complex64>) -> Result<Matrix2<Complex64>> {
        if q.shape() != (self.poses, self.receptors) {
            return Err(Error::Dimension {
                context: "data matrix for CGPT recovery",
                expected: self.poses * self.receptors,
                found: q.len(),
            });
        }
        let mut out = Matrix2::zeros();
        for e in 0..4 {
            let row = self.pinv.row(e);
            let mut acc = Complex64::new(0.0, 0.0);
            for s in 0..self.poses {
                for r in 0..self.receptors {
                    acc += row[s * self.receptors + r] * q[(s, r)];
                }
            }
            out[(e / 2, e % 2)] = acc;
        }
        Ok(out)
    }
}

/// One least-squares recovery per frequency.
pub fn recover_cgpt(q: &[DMatrix<Complex64>], maps: &[LinearForwardMap]) -> Result<Vec<CgptMatrix>> {
    if q.len() != maps.len() {
        return Err(Error::Dimension {
            context: "frequencies in CGPT recovery",
            expected: maps.len(),
            found: q.len(),
        });
    }
    q.iter()
        .zip(maps)
        .map(|(q, l)| l.solver()?.solve(q))
        .collect()
}

/// Builds the per-frequency maps of a simulation from its skin data.
pub fn maps_from_skin(
    poses: &[FishPose],
    skin: &[Vec<SkinData>],
    z: &Point,
    k: usize,
) -> Result<Vec<LinearForwardMap>> {
    let coeffs = skin_coefficients(poses, skin, z, k + 1)?;
    let receptors: Vec<Vec<Point>> = poses.iter().map(|p| p.receptors.clone()).collect();
    coeffs
        .iter()
        .map(|c| assemble_operator(c, &receptors, z, k))
        .collect()
}

/// Source coefficients indexed `[frequency][pose]`.
pub fn skin_coefficients(
    poses: &[FishPose],
    skin: &[Vec<SkinData>],
    z: &Point,
    order: usize,
) -> Result<Vec<Vec<SourceCoefficients>>> {
    if skin.len() != poses.len() {
        return Err(Error::Dimension {
            context: "skin data per pose",
            expected: poses.len(),
            found: skin.len(),
        });
    }
    let nf = skin.first().map_or(0, Vec::len);
    (0..nf)
        .map(|f| {
            poses
                .iter()
                .zip(skin)
                .map(|(p, row)| source_coeffs(p, &row[f], z, order))
                .collect()
        })
        .collect()
}

/// `P_Ω[ψ - ψ_U]` interpolated to the receptors, imaginary part.
pub fn pt_imag_data(pose: &FishPose, sd: &SkinData, background: &DVector<f64>) -> Result<Vec<f64>> {
    let diff: Density = &sd.psi - background.map(|v| Complex64::new(v, 0.0));
    let post = crate::forward::postprocess(pose, &diff, sd.xi)?;
    let n = pose.body.len();
    Ok(pose
        .receptor_params
        .iter()
        .map(|&t| {
            trig_interp_weights(n, t)
                .iter()
                .zip(post.iter())
                .map(|(w, p)| w * p.im)
                .sum()
        })
        .collect())
}

/// Real least-squares map from `Im 𝓜` (entries `11, 12, 21, 22`) to the
/// postprocessed imaginary data, rows ordered pose-major.
pub fn pt_imag_operator(poses: &[FishPose], grad_u: &[Point], z: &Point) -> Result<DMatrix<f64>> {
    if poses.len() != grad_u.len() {
        return Err(Error::Dimension {
            context: "background gradients per pose",
            expected: poses.len(),
            found: grad_u.len(),
        });
    }
    let r = poses.first().map_or(0, FishPose::receptor_count);
    let mut m = DMatrix::zeros(poses.len() * r, 4);
    for (s, (pose, g)) in poses.iter().zip(grad_u).enumerate() {
        for (j, &t) in pose.receptor_params.iter().enumerate() {
            let cp = pose.curve.eval(t);
            let tan = cp.dx / cp.speed();
            let nu = Point::new(tan.y, -tan.x);
            let v = cp.x - z;
            if v.norm() <= 1e-12 {
                return Err(Error::Domain("receptor at the target center".into()));
            }
            let k = -(green_hessian(&v) * nu);
            for p in 0..2 {
                for q in 0..2 {
                    m[(s * r + j, 2 * p + q)] = g[p] * k[q];
                }
            }
        }
    }
    Ok(m)
}

/// Fitted `Im 𝓜` and its asymmetry before symmetrization, relative to its
/// norm.
#[derive(Debug, Clone, Copy)]
pub struct PtImagFit {
    pub pt: Matrix2<f64>,
    pub asymmetry: f64,
}

/// Pseudo-inverse of [`pt_imag_operator`], reusable across data sets.
pub struct PtImagSolver {
    pinv: DMatrix<f64>,
}

impl PtImagSolver {
    pub fn new(op: &DMatrix<f64>) -> Result<Self> {
        let svd = op.clone().svd(true, true);
        let top = svd.singular_values.max();
        let kept = svd.singular_values.iter().filter(|&&s| s > SVD_CUTOFF * top).count();
        if !(top > 0.0) || kept < 4 {
            return Err(Error::Singular {
                context: "background gradient vanishes; Im PT is not identifiable".into(),
                condition: f64::INFINITY,
            });
        }
        let pinv = svd.pseudo_inverse(SVD_CUTOFF * top).map_err(|e| Error::Singular {
            context: format!("pseudo-inverse: {e}"),
            condition: f64::INFINITY,
        })?;
        Ok(Self { pinv })
    }

    pub fn solve(&self, data: &[f64]) -> Result<PtImagFit> {
        if data.len() != self.pinv.ncols() {
            return Err(Error::Dimension {
                context: "postprocessed data",
                expected: self.pinv.ncols(),
                found: data.len(),
            });
        }
        let x = &self.pinv * DVector::from_column_slice(data);
        let raw = Matrix2::new(x[0], x[1], x[2], x[3]);
        let sym = (raw + raw.transpose()) * 0.5;
        let norm = sym.norm();
        let asymmetry = if norm > 0.0 {
            (raw - raw.transpose()).norm() * 0.5 / norm
        } else {
            0.0
        };
        Ok(PtImagFit { pt: sym, asymmetry })
    }
}

/// Least-squares `Im 𝓜` from postprocessed data of every pose.
pub fn recover_pt_imag(
    poses: &[FishPose],
    data: &[Vec<f64>],
    grad_u: &[Point],
    z: &Point,
) -> Result<PtImagFit> {
    let op = pt_imag_operator(poses, grad_u, z)?;
    let flat: Vec<f64> = data.iter().flatten().copied().collect();
    PtImagSolver::new(&op)?.solve(&flat)
}

/// `∇U(z)` of each pose from its background flux.
pub fn background_gradients(
    poses: &[FishPose],
    background: &[DVector<f64>],
    z: &Point,
    xi: f64,
) -> Result<Vec<Point>> {
    poses
        .iter()
        .zip(background)
        .map(|(pose, psi)| {
            let sd = SkinData {
                pose: pose.index,
                frequency: 0,
                omega: 0.0,
                xi,
                psi: psi.map(|v| Complex64::new(v, 0.0)),
                phi: None,
                u: Vec::new(),
                h: Vec::new(),
            };
            let c = source_coeffs(pose, &sd, z, 1)?;
            Ok(Point::new(c.a[0].re, c.b[0].re))
        })
        .collect()
}
