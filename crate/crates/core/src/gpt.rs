//! Generalized polarization tensors and their harmonic contractions.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation, Boundary};
use crate::potentials::{neumann_poincare, Density, Resolvent, ShiftedSolver};

/// Admittivity contrast `k = σ + iεω` of a target in a unit background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub sigma: f64,
    pub epsilon: f64,
    pub omega: f64,
}

impl Contrast {
    pub fn new(sigma: f64, epsilon: f64, omega: f64) -> Result<Self> {
        let c = Self {
            sigma,
            epsilon,
            omega,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!(
                "conductivity must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.epsilon >= 0.0) || !(self.omega >= 0.0) {
            return Err(Error::invalid(
                "permittivity and frequency must be non-negative",
            ));
        }
        if (self.k() - 1.0).norm() < 1e-12 {
            return Err(Error::invalid(
                "contrast k = 1: the target is indistinguishable from the background",
            ));
        }
        Ok(())
    }

    pub fn at_frequency(&self, omega: f64) -> Self {
        Self { omega, ..*self }
    }

    pub fn k(&self) -> Complex64 {
        Complex64::new(self.sigma, self.epsilon * self.omega)
    }

    /// `λ = (k + 1) / (2(k - 1))`.
    pub fn lambda(&self) -> Complex64 {
        let k = self.k();
        (k + 1.0) / (2.0 * (k - 1.0))
    }
}

pub type MultiIndex = (usize, usize);

/// Multi-indices of order `m` in graded lexicographic order:
/// `(m,0), (m-1,1), …, (0,m)`.
pub fn multi_indices(m: usize) -> Vec<MultiIndex> {
    (0..=m).map(|k| (m - k, k)).collect()
}

/// Coefficients of `r^m cos mθ` (`a`) and `r^m sin mθ` (`b`) in the monomials
/// `x^α`, `|α| = m`, ordered as [`multi_indices`].
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoeffs {
    pub order: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl HarmonicCoeffs {
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let mut ca = 0.0;
        let mut cb = 0.0;
        for (i, (p, q)) in multi_indices(self.order).into_iter().enumerate() {
            let mono = x.powi(p as i32) * y.powi(q as i32);
            ca += self.a[i] * mono;
            cb += self.b[i] * mono;
        }
        (ca, cb)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Expands `(x + iy)^m` by the binomial theorem.
pub fn harmonic_coeffs(m: usize) -> Result<HarmonicCoeffs> {
    if m == 0 {
        return Err(Error::invalid("harmonic order must be at least 1"));
    }
    let mut a = Vec::with_capacity(m + 1);
    let mut b = Vec::with_capacity(m + 1);
    for k in 0..=m {
        // i^k cycles through 1, i, -1, -i.
        let (re, im) = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][k % 4];
        let c = binomial(m, k);
        a.push(c * re);
        b.push(c * im);
    }
    Ok(HarmonicCoeffs { order: m, a, b })
}

fn monomial(x: f64, y: f64, (p, q): MultiIndex) -> f64 {
    x.powi(p as i32) * y.powi(q as i32)
}

/// Normal derivative of `x^α` at the nodes of `b`.
fn monomial_flux(b: &Boundary, (p, q): MultiIndex) -> Density {
    Density::from_iterator(
        b.len(),
        b.nodes().iter().zip(b.normals()).map(|(x, n)| {
            let dx = if p > 0 {
                p as f64 * monomial(x.x, x.y, (p - 1, q))
            } else {
                0.0
            };
            let dy = if q > 0 {
                q as f64 * monomial(x.x, x.y, (p, q - 1))
            } else {
                0.0
            };
            Complex64::new(dx * n.x + dy * n.y, 0.0)
        }),
    )
}

fn moment(b: &Boundary, phi: &Density, beta: MultiIndex) -> Complex64 {
    b.nodes()
        .iter()
        .zip(b.weights())
        .zip(phi.iter())
        .map(|((x, w), f)| f * (monomial(x.x, x.y, beta) * w))
        .sum()
}

fn check_order(alpha: MultiIndex) -> Result<()> {
    if alpha.0 + alpha.1 == 0 {
        return Err(Error::invalid("GPT multi-indices must have order at least 1"));
    }
    Ok(())
}

/// `M_αβ = ∫ (λI - K*)⁻¹[∂x^α/∂ν] y^β dσ`.
pub fn gpt(b: &Boundary, lambda: Complex64, alpha: MultiIndex, beta: MultiIndex) -> Result<Complex64> {
    check_order(alpha)?;
    check_order(beta)?;
    let phi = Resolvent::new(b, lambda)?.solve(&monomial_flux(b, alpha))?;
    Ok(moment(b, &phi, beta))
}

/// All GPTs with `1 ≤ |α|, |β| ≤ order`, indexed by the flattened graded
/// lexicographic position of each multi-index.
#[derive(Debug, Clone)]
pub struct GptTable {
    pub order: usize,
    pub values: DMatrix<Complex64>,
}

impl GptTable {
    pub fn index(alpha: MultiIndex) -> usize {
        let m = alpha.0 + alpha.1;
        // Orders 1..m-1 hold 2 + 3 + … + m entries.
        (m * (m + 1)) / 2 - 1 + alpha.1
    }

    pub fn get(&self, alpha: MultiIndex, beta: MultiIndex) -> Complex64 {
        self.values[(Self::index(alpha), Self::index(beta))]
    }
}

pub fn gpt_table(b: &Boundary, lambda: Complex64, order: usize) -> Result<GptTable> {
    if order == 0 {
        return Err(Error::invalid("GPT order must be at least 1"));
    }
    let all: Vec<MultiIndex> = (1..=order).flat_map(multi_indices).collect();
    let res = Resolvent::new(b, lambda)?;
    let mut values = DMatrix::zeros(all.len(), all.len());
    for (i, &alpha) in all.iter().enumerate() {
        let phi = res.solve(&monomial_flux(b, alpha))?;
        for (j, &beta) in all.iter().enumerate() {
            values[(i, j)] = moment(b, &phi, beta);
        }
    }
    Ok(GptTable { order, values })
}

/// Contracted GPT blocks `𝐌_mn = [[cc, cs], [sc, ss]]` for `1 ≤ m, n ≤ order`.
#[derive(Debug, Clone, PartialEq)]
pub struct CgptMatrix {
    order: usize,
    blocks: Vec<Matrix2<Complex64>>,
}

impl CgptMatrix {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            blocks: vec![Matrix2::zeros(); order * order],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Block `𝐌_mn`, indices from 1.
    pub fn block(&self, m: usize, n: usize) -> &Matrix2<Complex64> {
        &self.blocks[(m - 1) * self.order + (n - 1)]
    }

    pub fn block_mut(&mut self, m: usize, n: usize) -> &mut Matrix2<Complex64> {
        &mut self.blocks[(m - 1) * self.order + (n - 1)]
    }

    /// The first-order polarization tensor `𝐌_11`.
    pub fn pt(&self) -> Matrix2<Complex64> {
        *self.block(1, 1)
    }

    /// CGPTs of the target rotated by `angle` about the origin:
    /// `𝐌_mn ↦ R(mθ) 𝐌_mn R(nθ)ᵀ`.
    pub fn rotated(&self, angle: f64) -> Self {
        let mut out = self.clone();
        for m in 1..=self.order {
            for n in 1..=self.order {
                let rm = rotation(m as f64 * angle).map(|v| Complex64::new(v, 0.0));
                let rn = rotation(n as f64 * angle).map(|v| Complex64::new(v, 0.0));
                *out.block_mut(m, n) = rm * self.block(m, n) * rn.transpose();
            }
        }
        out
    }

    /// CGPTs of the target scaled by `delta` about the origin.
    pub fn scaled(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for m in 1..=self.order {
            for n in 1..=self.order {
                *out.block_mut(m, n) = self.block(m, n) * Complex64::new(delta.powi((m + n) as i32), 0.0);
            }
        }
        out
    }

    /// Largest entrywise difference to `other` over the common orders.
    pub fn max_diff(&self, other: &CgptMatrix) -> f64 {
        let k = self.order.min(other.order);
        let mut d: f64 = 0.0;
        for m in 1..=k {
            for n in 1..=k {
                d = d.max((self.block(m, n) - other.block(m, n)).camax());
            }
        }
        d
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(|b| b.camax()).fold(0.0, f64::max)
    }
}

/// Contracts a GPT table with the harmonic coefficients.
pub fn contract(table: &GptTable, order: usize) -> Result<CgptMatrix> {
    if order == 0 || order > table.order {
        return Err(Error::invalid(format!(
            "contraction order {order} outside 1..={}",
            table.order
        )));
    }
    let coeffs: Vec<HarmonicCoeffs> = (1..=order).map(harmonic_coeffs).collect::<Result<_>>()?;
    let mut out = CgptMatrix::zeros(order);
    for m in 1..=order {
        for n in 1..=order {
            let (hm, hn) = (&coeffs[m - 1], &coeffs[n - 1]);
            let mut blk = Matrix2::<Complex64>::zeros();
            for (i, &alpha) in multi_indices(m).iter().enumerate() {
                for (j, &beta) in multi_indices(n).iter().enumerate() {
                    let v = table.get(alpha, beta);
                    blk[(0, 0)] += v * (hm.a[i] * hn.a[j]);
                    blk[(0, 1)] += v * (hm.a[i] * hn.b[j]);
                    blk[(1, 0)] += v * (hm.b[i] * hn.a[j]);
                    blk[(1, 1)] += v * (hm.b[i] * hn.b[j]);
                }
            }
            *out.block_mut(m, n) = blk;
        }
    }
    Ok(out)
}

pub fn cgpt(b: &Boundary, lambda: Complex64, order: usize) -> Result<CgptMatrix> {
    contract(&gpt_table(b, lambda, order)?, order)
}

/// CGPTs at several `λ` sharing one reduction of `K*`.
pub fn cgpt_multi(b: &Boundary, lambdas: &[Complex64], order: usize) -> Result<Vec<CgptMatrix>> {
    if order == 0 {
        return Err(Error::invalid("GPT order must be at least 1"));
    }
    let all: Vec<MultiIndex> = (1..=order).flat_map(multi_indices).collect();
    let solver = ShiftedSolver::new(neumann_poincare(b).into_matrix())?;
    let fluxes: Vec<Density> = all.iter().map(|&a| monomial_flux(b, a)).collect();
    lambdas
        .iter()
        .map(|&lambda| {
            let mut values = DMatrix::zeros(all.len(), all.len());
            for (i, f) in fluxes.iter().enumerate() {
                let phi = solver.solve(lambda, f)?;
                for (j, &beta) in all.iter().enumerate() {
                    values[(i, j)] = moment(b, &phi, beta);
                }
            }
            contract(&GptTable { order, values }, order)
        })
        .collect()
}

/// First-order polarization tensor at one contrast.
pub fn first_order_pt(b: &Boundary, c: &Contrast) -> Result<Matrix2<Complex64>> {
    c.validate()?;
    Ok(cgpt(b, c.lambda(), 1)?.pt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_index_follows_graded_order() {
        let all: Vec<MultiIndex> = (1..=3).flat_map(multi_indices).collect();
        for (i, a) in all.iter().enumerate() {
            assert_eq!(GptTable::index(*a), i);
        }
    }

    #[test]
    fn contrast_rejects_background() {
        assert!(Contrast::new(1.0, 0.0, 3.0).is_err());
        assert!(Contrast::new(1.0, 1.0, 3.0).is_ok());
        assert!(Contrast::new(-2.0, 0.0, 1.0).is_err());
        let c = Contrast::new(2.0, 0.0, 1.0).unwrap();
        assert!((c.lambda() - Complex64::new(1.5, 0.0)).norm() < 1e-15);
    }
}
