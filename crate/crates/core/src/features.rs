//! Classification features: CGPT shape descriptors, invariant under rigid
//! motions and scaling, and singular-value spectra of the first-order PT.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpt::CgptMatrix;

/// Order of the shape descriptors.
pub const DESCRIPTOR_ORDER: usize = 2;

/// `𝓝⁽¹⁾ = (cc - ss) + i(cs + sc)` and `𝓝⁽²⁾ = (cc + ss) + i(cs - sc)`, entry
/// by entry over the blocks of `m`.
pub fn complex_cgpt(m: &CgptMatrix) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let k = m.order();
    if k < 2 {
        return Err(Error::invalid(
            "complex CGPTs need order at least 2 for the translation reduction",
        ));
    }
    let i = Complex64::new(0.0, 1.0);
    let n1 = DMatrix::from_fn(k, k, |a, b| {
        let x = m.block(a + 1, b + 1);
        (x[(0, 0)] - x[(1, 1)]) + i * (x[(0, 1)] + x[(1, 0)])
    });
    let n2 = DMatrix::from_fn(k, k, |a, b| {
        let x = m.block(a + 1, b + 1);
        (x[(0, 0)] + x[(1, 1)]) + i * (x[(0, 1)] - x[(1, 0)])
    });
    Ok((n1, n2))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Lower-triangular `C_mn = binom(m, n) w^{m-n}`, indices from 1.
pub fn binomial_shift(order: usize, w: Complex64) -> DMatrix<Complex64> {
    DMatrix::from_fn(order, order, |a, b| {
        let (m, n) = (a + 1, b + 1);
        if n > m {
            Complex64::new(0.0, 0.0)
        } else {
            w.powu((m - n) as u32) * binomial(m, n)
        }
    })
}

/// Translation-reduced `𝓣⁽¹⁾ = C 𝓝⁽¹⁾ Cᵀ`, `𝓣⁽²⁾ = C̄ 𝓝⁽²⁾ Cᵀ` with
/// `C = C^{-u}`, `u = 𝓝⁽²⁾₁₂ / (2𝓝⁽²⁾₁₁)`.
pub fn translation_reduce(
    n1: &DMatrix<Complex64>,
    n2: &DMatrix<Complex64>,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>, Complex64)> {
    let k = n2.nrows();
    if k < 2 || n1.shape() != (k, k) || n2.ncols() != k {
        return Err(Error::invalid("translation reduction needs square matrices of order ≥ 2"));
    }
    let scale = n2.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if n2[(0, 0)].norm() <= 1e-14 * scale || scale == 0.0 {
        return Err(Error::Domain(
            "first-order complex CGPT vanishes; the target center is undefined".into(),
        ));
    }
    let u = n2[(0, 1)] / (2.0 * n2[(0, 0)]);
    let c = binomial_shift(k, -u);
    let ct = c.transpose();
    let t1 = &c * n1 * &ct;
    let t2 = c.conjugate() * n2 * &ct;
    Ok((t1, t2, u))
}

/// Descriptors `𝓘⁽¹⁾`, `𝓘⁽²⁾` of order 2, with the intermediate quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDescriptors {
    pub shift: Complex64,
    pub t1: DMatrix<Complex64>,
    pub t2: DMatrix<Complex64>,
    pub s1: Matrix2<Complex64>,
    pub s2: Matrix2<Complex64>,
    pub i1: Matrix2<f64>,
    pub i2: Matrix2<f64>,
}

impl ShapeDescriptors {
    /// `𝓘⁽¹⁾` then `𝓘⁽²⁾`, row-major.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(8);
        for m in [&self.i1, &self.i2] {
            for a in 0..2 {
                for b in 0..2 {
                    v.push(m[(a, b)]);
                }
            }
        }
        v
    }
}

/// `𝓢_mn = 𝓣_mn / (𝓣⁽²⁾_mm 𝓣⁽²⁾_nn)^{1/2}` (principal root), `𝓘 = |𝓢|`.
pub fn shape_descriptors(
    t1: &DMatrix<Complex64>,
    t2: &DMatrix<Complex64>,
    shift: Complex64,
) -> Result<ShapeDescriptors> {
    let k = DESCRIPTOR_ORDER;
    if t1.nrows() < k || t2.nrows() < k {
        return Err(Error::invalid("shape descriptors need order-2 CGPTs"));
    }
    let scale = t2.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for m in 0..k {
        if t2[(m, m)].norm() <= 1e-14 * scale || scale == 0.0 {
            return Err(Error::Domain(format!(
                "descriptor normalizer 𝓣⁽²⁾_{0}{0} vanishes",
                m + 1
            )));
        }
    }
    let norm = |t: &DMatrix<Complex64>| {
        Matrix2::from_fn(|a, b| t[(a, b)] / (t2[(a, a)] * t2[(b, b)]).sqrt())
    };
    let s1 = norm(t1);
    let s2 = norm(t2);
    Ok(ShapeDescriptors {
        shift,
        t1: t1.clone(),
        t2: t2.clone(),
        i1: s1.map(|z| z.norm()),
        i2: s2.map(|z| z.norm()),
        s1,
        s2,
    })
}

/// The full descriptor pipeline from a CGPT matrix of order ≥ 2.
pub fn descriptors(m: &CgptMatrix) -> Result<ShapeDescriptors> {
    let (n1, n2) = complex_cgpt(m)?;
    let (t1, t2, u) = translation_reduce(&n1, &n2)?;
    shape_descriptors(&t1, &t2, u)
}

/// Singular values of first-order PTs across frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtSpectrum {
    /// `τ⁽ᶠ⁾`, descending, frequencies ascending.
    pub tau: Vec<[f64; 2]>,
    /// `μ⁽ᶠ⁾ = τ⁽ᶠ⁾ / τ⁽ᶠ⁾` for `f < F`; empty when `F = 1`.
    pub mu: Vec<[f64; 2]>,
}

/// Singular values of a 2×2 complex matrix, descending.
pub fn singular_values(m: &Matrix2<Complex64>) -> [f64; 2] {
    let s = m.singular_values();
    let (a, b) = (s[0], s[1]);
    if a >= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Spectrum of PTs given with their frequencies (any order).
pub fn pt_spectrum(pts: &[(f64, Matrix2<Complex64>)]) -> Result<PtSpectrum> {
    if pts.is_empty() {
        return Err(Error::invalid("PT spectrum needs at least one frequency"));
    }
    let mut sorted: Vec<&(f64, Matrix2<Complex64>)> = pts.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tau: Vec<[f64; 2]> = sorted.iter().map(|(_, m)| singular_values(m)).collect();
    let top = *tau.last().expect("nonempty");
    let mu = if tau.len() < 2 {
        Vec::new()
    } else {
        if top.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Domain(
                "highest-frequency PT is singular; ratios are undefined".into(),
            ));
        }
        tau[..tau.len() - 1]
            .iter()
            .map(|t| [t[0] / top[0], t[1] / top[1]])
            .collect()
    };
    Ok(PtSpectrum { tau, mu })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_matrix_entries() {
        let u = Complex64::new(0.3, -0.2);
        let c = binomial_shift(3, -u);
        assert_eq!(c[(0, 0)], Complex64::new(1.0, 0.0));
        assert!((c[(1, 0)] - (-u) * 2.0).norm() < 1e-15);
        assert!((c[(2, 0)] - u * u * 3.0).norm() < 1e-15);
        assert_eq!(c[(0, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zero_cgpt_gives_zero_complex_cgpt() {
        let (a, b) = complex_cgpt(&CgptMatrix::zeros(2)).unwrap();
        assert!(a.iter().chain(b.iter()).all(|z| z.norm() == 0.0));
        assert!(complex_cgpt(&CgptMatrix::zeros(1)).is_err());
        assert!(translation_reduce(&a, &b).is_err());
    }
}
