use nalgebra::{ComplexField, DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;

use super::{neumann_poincare, Density};
use crate::error::{Error, Result};
use crate::geometry::Boundary;

/// Condition estimates above this are reported as singular.
const MAX_CONDITION: f64 = 1e12;

/// LU factorization that refuses numerically singular matrices.
pub struct DenseLu<T: ComplexField<RealField = f64>> {
    lu: LU<T, Dyn, Dyn>,
    condition: f64,
}

impl<T: ComplexField<RealField = f64> + Copy> DenseLu<T> {
    pub fn new(a: DMatrix<T>, context: &str) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension {
                context: "dense solve",
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let norm = one_norm(&a);
        let lu = a.lu();
        let n = lu.u().nrows();
        // Cheap lower bound on ‖A⁻¹‖₁ from a few probe vectors.
        let mut inv_norm: f64 = 0.0;
        for probe in 0..3u64 {
            let v = DVector::<T>::from_fn(n, |i, _| {
                let s = match probe {
                    0 => 1.0,
                    1 => if i % 2 == 0 { 1.0 } else { -1.0 },
                    _ => if (i as u64).wrapping_mul(2654435761) % 7 < 3 { 1.0 } else { -1.0 },
                };
                T::from_real(s)
            });
            match lu.solve(&v) {
                Some(x) => inv_norm = inv_norm.max(l1(&x) / n as f64),
                None => inv_norm = f64::INFINITY,
            }
        }
        let condition = norm * inv_norm;
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::Singular {
                context: context.to_string(),
                condition,
            });
        }
        Ok(Self { lu, condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        // Factorization succeeded, so the triangular solves cannot fail.
        self.lu.solve(b).expect("nonsingular factorization")
    }

    pub fn solve_matrix(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.lu.solve(b).expect("nonsingular factorization")
    }
}

fn one_norm<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.clone().modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn l1<T: ComplexField<RealField = f64>>(v: &DVector<T>) -> f64 {
    v.iter().map(|z| z.clone().modulus()).sum()
}

/// Factored `λI - K*` on one boundary, reusable across right-hand sides.
pub struct Resolvent {
    lu: DenseLu<Complex64>,
    op: DMatrix<Complex64>,
}

impl Resolvent {
    pub fn new(b: &Boundary, lambda: Complex64) -> Result<Self> {
        let k = neumann_poincare(b);
        let n = b.len();
        let op = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
            d - k.matrix()[(i, j)]
        });
        let lu = DenseLu::new(op.clone(), "resolvent (λI - K*)")?;
        Ok(Self { lu, op })
    }

    pub fn condition(&self) -> f64 {
        self.lu.condition()
    }

    pub fn solve(&self, rhs: &Density) -> Result<Density> {
        if rhs.len() != self.op.nrows() {
            return Err(Error::Dimension {
                context: "resolvent right-hand side",
                expected: self.op.nrows(),
                found: rhs.len(),
            });
        }
        let x = self.lu.solve(rhs);
        let res = (&self.op * &x - rhs).norm();
        let scale = rhs.norm().max(f64::MIN_POSITIVE);
        if res > 1e-10 * scale {
            return Err(Error::Singular {
                context: format!("resolvent residual {:.2e}", res / scale),
                condition: self.lu.condition(),
            });
        }
        Ok(x)
    }
}

/// Solves `(λI - K*)φ = rhs` on `b`.
pub fn solve_resolvent(b: &Boundary, lambda: Complex64, rhs: &Density) -> Result<Density> {
    Resolvent::new(b, lambda)?.solve(rhs)
}

/// Solves `(λI - Z)x = b` for many shifts `λ` with one real Hessenberg
/// reduction `Z = Q H Qᵀ`; each shift then costs `O(n²)`.
pub struct ShiftedSolver {
    z: DMatrix<f64>,
    q: DMatrix<f64>,
    h: DMatrix<f64>,
}

impl ShiftedSolver {
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        if !z.is_square() {
            return Err(Error::Dimension {
                context: "shifted solver",
                expected: z.nrows(),
                found: z.ncols(),
            });
        }
        let (q, h) = z.clone().hessenberg().unpack();
        Ok(Self { z, q, h })
    }

    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    /// The unreduced matrix `Z`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn solve(&self, lambda: Complex64, b: &Density) -> Result<Density> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::Dimension {
                context: "shifted solver right-hand side",
                expected: n,
                found: b.len(),
            });
        }
        let qt = self.q.transpose();
        let mut y = super::real_times_complex(&qt, b);
        let mut a = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let d = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
            d - self.h[(i, j)]
        });
        let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        // Gaussian elimination with pivoting between adjacent rows.
        for k in 0..n {
            if k + 1 < n && a[(k + 1, k)].norm() > a[(k, k)].norm() {
                a.swap_rows(k, k + 1);
                y.swap_rows(k, k + 1);
            }
            let piv = a[(k, k)];
            if piv.norm() <= 1e-14 * scale {
                return Err(Error::Singular {
                    context: format!("shifted solve at λ = {lambda}"),
                    condition: f64::INFINITY,
                });
            }
            if k + 1 < n {
                let l = a[(k + 1, k)] / piv;
                if l.norm() != 0.0 {
                    for j in k..n {
                        let v = a[(k, j)];
                        a[(k + 1, j)] -= l * v;
                    }
                    let v = y[k];
                    y[k + 1] -= l * v;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            for j in k + 1..n {
                s -= a[(k, j)] * y[j];
            }
            y[k] = s / a[(k, k)];
        }
        let x = super::real_times_complex(&self.q, &y);
        let res = x.map(|v| v * lambda) - super::real_times_complex(&self.z, &x) - b;
        let rel = res.norm() / b.norm().max(f64::MIN_POSITIVE);
        if !rel.is_finite() || rel > 1e-10 {
            return Err(Error::Singular {
                context: format!("shifted solve residual {rel:.2e} at λ = {lambda}"),
                condition: rel / f64::EPSILON,
            });
        }
        Ok(x)
    }
}
