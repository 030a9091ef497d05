//! Laplace layer potentials on discretized closed curves.
//!
//! Conventions: `G(x) = ln|x| / 2π`,
//!
//! * `S[φ](x) = ∫ G(x-y) φ(y) dσ(y)`
//! * `D[φ](x) = ∫ ∂G/∂ν(y) (x-y) φ(y) dσ(y)`, so `D[1] = 1` inside and `0`
//!   outside,
//! * `K*[φ](x) = ∫ ∂G/∂ν(x) (x-y) φ(y) dσ(y)`,
//!
//! with the jump relations `∂S[φ]/∂ν|± = (±½ + K*)[φ]` and
//! `D[φ]|± = (∓½ + K)[φ]`.
//!
//! Smooth kernels use the periodic trapezoidal rule; the on-curve single layer
//! uses Kress's logarithmic splitting.

mod quadrature;
mod solve;

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

pub use quadrature::{
    diff_matrix, double_layer_exterior_on_curve, hypersingular, single_layer_on_curve,
    single_layer_self, trig_interp_weights,
};
pub use solve::{solve_resolvent, DenseLu, Resolvent, ShiftedSolver};

use crate::error::{Error, Result};
use crate::geometry::{Boundary, Point};

/// Complex nodal values of a boundary density.
pub type Density = DVector<Complex64>;

/// Green function of the Laplacian in two or three dimensions, chosen by the
/// length of `x`.
pub fn green(x: &[f64]) -> Result<f64> {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::Domain("Green function evaluated at the origin".into()));
    }
    match x.len() {
        2 => Ok(r.ln() / TAU),
        3 => Ok(-1.0 / (4.0 * PI * r)),
        d => Err(Error::invalid(format!("dimension must be 2 or 3, got {d}"))),
    }
}

pub fn green_grad(x: &Point) -> Point {
    x / (TAU * x.norm_squared())
}

pub fn green_hessian(x: &Point) -> Matrix2<f64> {
    let r2 = x.norm_squared();
    let c = 1.0 / (TAU * r2 * r2);
    Matrix2::new(
        c * (r2 - 2.0 * x.x * x.x),
        -2.0 * c * x.x * x.y,
        -2.0 * c * x.x * x.y,
        c * (r2 - 2.0 * x.y * x.y),
    )
}

/// Dense Nyström matrix mapping densities on `source` to values at `targets`.
///
/// Kernels are real; densities are complex, so application promotes.
#[derive(Debug, Clone)]
pub struct BoundaryOperator {
    matrix: DMatrix<f64>,
}

impl BoundaryOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, phi: &Density) -> Result<Density> {
        if phi.len() != self.ncols() {
            return Err(Error::Dimension {
                context: "boundary operator",
                expected: self.ncols(),
                found: phi.len(),
            });
        }
        Ok(real_times_complex(&self.matrix, phi))
    }
}

pub(crate) fn real_times_complex(m: &DMatrix<f64>, v: &Density) -> Density {
    let re = m * v.map(|z| z.re);
    let im = m * v.map(|z| z.im);
    Density::from_fn(m.nrows(), |i, _| Complex64::new(re[i], im[i]))
}

fn check_off_curve(src: &Boundary, x: &Point) -> Result<()> {
    let tol = 1e-12 * src.perimeter();
    if src.nodes().iter().any(|y| (x - y).norm() <= tol) {
        return Err(Error::Domain(format!(
            "evaluation point ({:.6}, {:.6}) coincides with a source node",
            x.x, x.y
        )));
    }
    Ok(())
}

fn kernel_matrix(
    src: &Boundary,
    targets: &[Point],
    k: impl Fn(usize, &Point, usize) -> f64,
) -> Result<DMatrix<f64>> {
    for x in targets {
        check_off_curve(src, x)?;
    }
    let w = src.weights();
    Ok(DMatrix::from_fn(targets.len(), src.len(), |i, j| {
        k(i, &targets[i], j) * w[j]
    }))
}

/// Trapezoidal single layer at points away from the curve.
pub fn single_layer_matrix(src: &Boundary, targets: &[Point]) -> Result<DMatrix<f64>> {
    let y = src.nodes();
    kernel_matrix(src, targets, |_, x, j| (x - y[j]).norm().ln() / TAU)
}

/// Trapezoidal double layer at points away from the curve.
pub fn double_layer_matrix(src: &Boundary, targets: &[Point]) -> Result<DMatrix<f64>> {
    let (y, nu) = (src.nodes(), src.normals());
    kernel_matrix(src, targets, |_, x, j| {
        let d = y[j] - x;
        d.dot(&nu[j]) / (TAU * d.norm_squared())
    })
}

/// `∂S[φ]/∂n` at off-curve points with prescribed unit directions `dirs`.
pub fn single_layer_normal_matrix(
    src: &Boundary,
    targets: &[Point],
    dirs: &[Point],
) -> Result<DMatrix<f64>> {
    check_len("single layer directions", targets.len(), dirs.len())?;
    let y = src.nodes();
    kernel_matrix(src, targets, |i, x, j| {
        green_grad(&(x - y[j])).dot(&dirs[i])
    })
}

/// `∂D[φ]/∂n` at off-curve points with prescribed unit directions `dirs`.
pub fn double_layer_normal_matrix(
    src: &Boundary,
    targets: &[Point],
    dirs: &[Point],
) -> Result<DMatrix<f64>> {
    check_len("double layer directions", targets.len(), dirs.len())?;
    let (y, nu) = (src.nodes(), src.normals());
    kernel_matrix(src, targets, |i, x, j| {
        // ∂/∂x of -∇G(x-y)·ν(y).
        -(green_hessian(&(x - y[j])) * nu[j]).dot(&dirs[i])
    })
}

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

pub fn single_layer(src: &Boundary, phi: &Density, x: &[Point]) -> Result<Vec<Complex64>> {
    check_len("single layer density", src.len(), phi.len())?;
    Ok(real_times_complex(&single_layer_matrix(src, x)?, phi)
        .iter()
        .copied()
        .collect())
}

pub fn double_layer(src: &Boundary, phi: &Density, x: &[Point]) -> Result<Vec<Complex64>> {
    check_len("double layer density", src.len(), phi.len())?;
    Ok(real_times_complex(&double_layer_matrix(src, x)?, phi)
        .iter()
        .copied()
        .collect())
}

/// Nyström matrix of `K*` with the curvature limit `κ/4π` on the diagonal.
pub fn neumann_poincare(b: &Boundary) -> BoundaryOperator {
    let (x, nu, w, k) = (b.nodes(), b.normals(), b.weights(), b.curvature());
    BoundaryOperator::new(DMatrix::from_fn(b.len(), b.len(), |i, j| {
        if i == j {
            k[i] / (2.0 * TAU) * w[j]
        } else {
            let d = x[i] - x[j];
            d.dot(&nu[i]) / (TAU * d.norm_squared()) * w[j]
        }
    }))
}

/// Nyström matrix of `K`, the adjoint of `K*`.
pub fn double_layer_self(b: &Boundary) -> BoundaryOperator {
    let (x, nu, w, k) = (b.nodes(), b.normals(), b.weights(), b.curvature());
    BoundaryOperator::new(DMatrix::from_fn(b.len(), b.len(), |i, j| {
        if i == j {
            k[i] / (2.0 * TAU) * w[j]
        } else {
            let d = x[j] - x[i];
            d.dot(&nu[j]) / (TAU * d.norm_squared()) * w[j]
        }
    }))
}
