use std::f64::consts::{FRAC_PI_4, PI};

use electrosense::geometry::{make_shape, Boundary, Point, ShapeSpec};
use electrosense::gpt::*;
use electrosense::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn disk(r: f64, n: usize) -> Boundary {
    make_shape(&ShapeSpec::Disk { radius: r }, n).unwrap()
}

fn ellipse() -> Boundary {
    make_shape(&ShapeSpec::Ellipse { a: 1.0, b: 0.5 }, 128)
        .unwrap()
        .transform(1.0, 0.2, Point::new(0.1, -0.05))
        .unwrap()
}

#[test]
fn harmonic_coefficient_tables() {
    let h1 = harmonic_coeffs(1).unwrap();
    assert_eq!((h1.a.clone(), h1.b.clone()), (vec![1.0, 0.0], vec![0.0, 1.0]));
    let h2 = harmonic_coeffs(2).unwrap();
    assert_eq!(h2.a, vec![1.0, 0.0, -1.0]);
    assert_eq!(h2.b, vec![0.0, 2.0, 0.0]);
    let h3 = harmonic_coeffs(3).unwrap();
    let (x, y) = (2.0 * (PI / 6.0).cos(), 2.0 * (PI / 6.0).sin());
    assert!(h3.eval(x, y).0.abs() < 1e-12);
    assert!(harmonic_coeffs(0).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for m in 1..=6 {
        let h = harmonic_coeffs(m).unwrap();
        for _ in 0..20 {
            let (r, t) = (rng.random_range(0.1..2.0), rng.random_range(0.0..6.3));
            let (ca, cb) = h.eval(r * f64::cos(t), r * f64::sin(t));
            let rm = r.powi(m as i32);
            assert!((ca - rm * (m as f64 * t).cos()).abs() < 1e-12 * rm.max(1.0));
            assert!((cb - rm * (m as f64 * t).sin()).abs() < 1e-12 * rm.max(1.0));
        }
    }
}

#[test]
fn disk_gpts() {
    let b = disk(1.0, 128);
    let lambda = c(1.5);
    let m = gpt(&b, lambda, (1, 0), (1, 0)).unwrap();
    assert!((m - c(2.0 * PI / 3.0)).norm() < 1e-12);
    assert!(gpt(&b, lambda, (1, 0), (0, 1)).unwrap().norm() < 1e-12);
    assert!(gpt(&b, lambda, (0, 0), (1, 0)).is_err());

    let cg = cgpt(&b, lambda, 2).unwrap();
    let p = cg.block(1, 1);
    assert!((p[(0, 0)] - c(2.0 * PI / 3.0)).norm() < 1e-12);
    assert!((p[(1, 1)] - c(2.0 * PI / 3.0)).norm() < 1e-12);
    assert!(p[(0, 1)].norm() < 1e-12 && p[(1, 0)].norm() < 1e-12);
    assert!(cg.block(1, 2).camax() < 1e-12 && cg.block(2, 1).camax() < 1e-12);
    // Unit disk: M^cc_22 = ∫ 2cos²2θ dθ / λ = 2π/λ.
    let m22 = cg.block(2, 2);
    assert!((m22[(0, 0)] - c(2.0 * PI * 2.0 / 3.0)).norm() < 1e-11);
}

#[test]
fn disk_pt_at_radius() {
    let b = disk(0.3, 128);
    let pt = first_order_pt(&b, &Contrast::new(2.0, 0.0, 1.0).unwrap()).unwrap();
    let expect = 2.0 * PI / 3.0 * 0.09;
    assert!((pt[(0, 0)] - c(expect)).norm() < 1e-12);
    assert!((pt[(1, 1)] - c(expect)).norm() < 1e-12);
    assert!((expect - 0.1885).abs() < 1e-4);
}

#[test]
fn gpt_scaling_law() {
    let b = ellipse();
    let lambda = Complex64::new(0.9, -0.3);
    let base = gpt_table(&b, lambda, 3).unwrap();
    for delta in [0.5, 2.0] {
        let scaled = gpt_table(&b.transform(delta, 0.0, Point::zeros()).unwrap(), lambda, 3).unwrap();
        for (i, a) in (1..=3).flat_map(multi_indices).enumerate() {
            for (j, bb) in (1..=3).flat_map(multi_indices).enumerate() {
                let order = (a.0 + a.1 + bb.0 + bb.1) as i32;
                let expect = base.values[(i, j)] * delta.powi(order);
                let got = scaled.values[(i, j)];
                assert!((got - expect).norm() <= 1e-8 * expect.norm().max(1e-3 * delta.powi(order)));
            }
        }
    }
}

#[test]
fn cgpt_rotation_law() {
    let b = ellipse();
    let lambda = Complex64::new(1.2, 0.4);
    let base = cgpt(&b, lambda, 3).unwrap();
    let theta = FRAC_PI_4;
    let rotated = cgpt(&b.transform(1.0, theta, Point::zeros()).unwrap(), lambda, 3).unwrap();
    let predicted = base.rotated(theta);
    assert!(rotated.max_diff(&predicted) < 1e-9 * base.max_abs());
}

#[test]
fn pt_rotation_translation_and_singular_value_scaling() {
    let b = make_shape(&ShapeSpec::named("rectangle").unwrap(), 512).unwrap();
    let c0 = Contrast::new(5.0, 2.0, 3.0).unwrap();
    let pt = first_order_pt(&b, &c0).unwrap();
    let theta = 0.7;
    let rot = first_order_pt(&b.transform(1.0, theta, Point::zeros()).unwrap(), &c0).unwrap();
    let r = electrosense::geometry::rotation(theta).map(c);
    assert!((rot - r * pt * r.transpose()).camax() < 1e-8 * pt.camax());
    let moved = first_order_pt(&b.transform(1.0, 0.0, Point::new(0.4, -1.1)).unwrap(), &c0).unwrap();
    assert!((moved - pt).camax() < 1e-8 * pt.camax());

    let sv = |m: &nalgebra::Matrix2<Complex64>| m.singular_values();
    let s0 = sv(&pt);
    let s1 = sv(&first_order_pt(&b.transform(0.3, 0.0, Point::zeros()).unwrap(), &c0).unwrap());
    for i in 0..2 {
        assert!((s1[i] - 0.09 * s0[i]).abs() < 1e-8 * s0[i]);
    }
}

#[test]
fn real_contrast_gives_real_symmetric_pt() {
    let b = ellipse();
    let cg = cgpt(&b, c(1.5), 2).unwrap();
    for m in 1..=2 {
        for n in 1..=2 {
            assert!(cg.block(m, n).iter().all(|z| z.im.abs() < 1e-10));
        }
    }
    let p = cg.pt();
    assert!((p[(0, 1)] - p[(1, 0)]).norm() < 1e-8);
    let pt = first_order_pt(&b, &Contrast::new(3.0, 0.0, 7.0).unwrap()).unwrap();
    assert!(pt.iter().all(|z| z.im.abs() <= 1e-10));
}

#[test]
fn triangle_pt_is_isotropic() {
    let b = make_shape(&ShapeSpec::named("triangle").unwrap(), 512).unwrap();
    let pt = first_order_pt(&b, &Contrast::new(2.0, 1.0, 4.0).unwrap()).unwrap();
    let d = pt[(0, 0)].norm();
    assert!(pt[(0, 1)].norm() <= 1e-6 * d && pt[(1, 0)].norm() <= 1e-6 * d);
    assert!((pt[(0, 0)] - pt[(1, 1)]).norm() <= 1e-6 * d);
}

#[test]
fn cgpt_scaling_helper_matches_recomputation() {
    let b = ellipse();
    let lambda = Complex64::new(0.7, 0.2);
    let base = cgpt(&b, lambda, 2).unwrap();
    let direct = cgpt(&b.transform(0.3, 0.0, Point::zeros()).unwrap(), lambda, 2).unwrap();
    assert!(direct.max_diff(&base.scaled(0.3)) < 1e-10 * base.max_abs());
}

#[test]
fn multi_frequency_cgpts_match_single_solves() {
    let b = make_shape(&ShapeSpec::named("letterA").unwrap(), 768).unwrap();
    let lambdas: Vec<Complex64> = (1..=3)
        .map(|w| Contrast::new(2.0, 1.0, w as f64).unwrap().lambda())
        .collect();
    let multi = cgpt_multi(&b, &lambdas, 2).unwrap();
    for (l, m) in lambdas.iter().zip(&multi) {
        let single = cgpt(&b, *l, 2).unwrap();
        assert!(m.max_diff(&single) <= 1e-11 * single.max_abs());
    }
}
