use std::f64::consts::TAU;

use electrosense::forward::*;
use electrosense::geometry::{
    fish_trajectory, make_shape, FishKind, FishPose, FishSetup, Point, ShapeSpec,
};
use electrosense::potentials::{single_layer_matrix, single_layer_normal_matrix, Resolvent};
use electrosense::Complex64;

fn setup(kind: FishKind, positions: usize) -> FishSetup {
    FishSetup {
        kind,
        positions,
        ..FishSetup::default()
    }
}

fn ellipse_target(delta: f64, sigma: f64, epsilon: f64) -> Target {
    let b = make_shape(&ShapeSpec::named("ellipse").unwrap(), 256)
        .unwrap()
        .transform(delta, 0.4, Point::zeros())
        .unwrap();
    Target::new(b, sigma, epsilon).unwrap()
}

fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn dipole_values_and_gradient() {
    let z = Point::new(0.3, -0.2);
    let f = dipole_field(&Point::new(1.0, 0.0), &z, &[z + Point::new(1.0, 0.0)]).unwrap();
    assert!((f[0].0 - 1.0 / TAU).abs() < 1e-15);
    let f = dipole_field(&Point::new(0.0, 1.0), &z, &[z + Point::new(1.0, 0.0)]).unwrap();
    assert!(f[0].0.abs() < 1e-15);
    assert!(dipole_field(&Point::new(1.0, 0.0), &z, &[z]).is_err());

    let p = Point::new(0.6, -0.8);
    let x = Point::new(1.1, 0.7);
    let h = 1e-7;
    let val = |x: Point| dipole_field(&p, &z, &[x]).unwrap()[0].0;
    let grad = dipole_field(&p, &z, &[x]).unwrap()[0].1;
    for (i, e) in [Point::new(h, 0.0), Point::new(0.0, h)].iter().enumerate() {
        let fd = (val(x + e) - val(x - e)) / (2.0 * h);
        assert!((fd - grad[i]).abs() < 1e-6);
    }
}

#[test]
fn no_contrast_means_no_perturbation() {
    let poses = fish_trajectory(&setup(FishKind::Twisted, 3)).unwrap();
    let t = ellipse_target(0.3, 1.0, 0.0);
    let sim = data_matrix(&poses, Some(&t), &[1.0, 2.0], 0.0, Point::zeros()).unwrap();
    for q in &sim.measurements.q {
        assert!(q.iter().all(|z| z.norm() <= 1e-10));
    }
    let bg = solve_forward(&poses[0], None, 1.0, 0.0).unwrap();
    assert!(max_abs(&bg.perturbation()) <= 1e-10);
    assert!(bg.phi.is_none());
}

#[test]
fn skin_flux_is_neutral() {
    let poses = fish_trajectory(&setup(FishKind::Ellipse, 2)).unwrap();
    let t = ellipse_target(0.3, 2.0, 1.0);
    for pose in &poses {
        for xi in [0.0, 0.1] {
            let sd = solve_forward(pose, Some(&t), 3.0, xi).unwrap();
            assert!(sd.net_flux(&pose.body) <= 1e-8, "net flux {}", sd.net_flux(&pose.body));
        }
    }
}

#[test]
fn reduced_solve_matches_dense_coupled_system() {
    let poses = fish_trajectory(&setup(FishKind::Twisted, 2)).unwrap();
    let t = ellipse_target(0.3, 5.0, 2.0);
    for xi in [0.0, 0.1] {
        let solver = PoseSolver::new(&poses[1], Some(&t), xi).unwrap();
        for omega in [1.0, 7.0] {
            let sd = solver.solve(0, omega).unwrap();
            let (psi, phi) = solver.solve_dense(omega).unwrap();
            let phi_red = sd.phi.unwrap();
            assert!((&psi - &sd.psi).norm() <= 1e-10 * psi.norm());
            assert!((&phi - &phi_red).norm() <= 1e-10 * phi.norm());
        }
    }
}

#[test]
fn perturbation_scales_as_delta_squared() {
    let poses = fish_trajectory(&setup(FishKind::Twisted, 4)).unwrap();
    let deltas = [0.05, 0.1, 0.2];
    let norms: Vec<f64> = deltas
        .iter()
        .map(|&d| {
            let t = ellipse_target(d, 2.0, 1.0);
            let sim = data_matrix(&poses, Some(&t), &[2.0], 0.0, Point::zeros()).unwrap();
            sim.measurements.q[0].norm()
        })
        .collect();
    let slope = (norms[2] / norms[0]).ln() / (deltas[2] / deltas[0]).ln();
    assert!((slope - 2.0).abs() <= 0.1, "slope {slope}");
}

#[test]
fn perturbation_is_the_target_single_layer_of_the_resolvent() {
    let poses = fish_trajectory(&setup(FishKind::Ellipse, 2)).unwrap();
    let t = ellipse_target(0.3, 3.0, 1.0);
    let d = &t.boundary;
    for xi in [0.0, 0.1] {
        let pose = &poses[0];
        let omega = 2.0;
        let sd = solve_forward(pose, Some(&t), omega, xi).unwrap();
        // ∂H/∂ν on ∂D from the skin flux, by finite differences of compute_h.
        let h = 1e-5;
        let dh: Vec<Complex64> = d
            .nodes()
            .iter()
            .zip(d.normals())
            .map(|(x, n)| {
                let v = compute_h(pose, &sd, &[x + n * h, x - n * h]).unwrap();
                (v[0] - v[1]) / (2.0 * h)
            })
            .collect();
        let rhs = electrosense::potentials::Density::from_vec(dh);
        let phi = Resolvent::new(d, t.contrast(omega).unwrap().lambda())
            .unwrap()
            .solve(&rhs)
            .unwrap();
        let s = single_layer_matrix(d, &pose.receptors).unwrap();
        let expect: Vec<Complex64> = (0..pose.receptors.len())
            .map(|r| (0..d.len()).map(|j| phi[j] * s[(r, j)]).sum())
            .collect();
        let got = sd.perturbation();
        let scale = max_abs(&expect);
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).norm() <= 1e-8 * scale.max(1e-12) + 1e-9 * scale);
        }
    }
}

#[test]
fn h_reduces_to_dipole_plus_single_layer_without_skin() {
    let poses = fish_trajectory(&setup(FishKind::Twisted, 1)).unwrap();
    let t = ellipse_target(0.3, 2.0, 0.0);
    let pose = &poses[0];
    let sd = solve_forward(pose, Some(&t), 1.0, 0.0).unwrap();
    let x = [Point::new(0.05, 0.02), Point::new(-0.1, 0.3)];
    let h = compute_h(pose, &sd, &x).unwrap();
    let s = single_layer_matrix(&pose.body, &x).unwrap();
    let p = dipole_field(&pose.dipole_moment, &pose.dipole_position, &x).unwrap();
    for i in 0..2 {
        let sl: Complex64 = (0..pose.body.len()).map(|j| sd.psi[j] * s[(i, j)]).sum();
        assert!((h[i] - sl - p[i].0).norm() < 1e-14);
    }
}

#[test]
fn real_contrast_gives_real_data() {
    let poses = fish_trajectory(&setup(FishKind::Twisted, 3)).unwrap();
    let t = ellipse_target(0.3, 5.0, 0.0);
    let sim = data_matrix(&poses, Some(&t), &[1.0, 4.0], 0.0, Point::zeros()).unwrap();
    for row in &sim.skin {
        for sd in row {
            assert!(sd.psi.iter().all(|z| z.im.abs() <= 1e-10));
            assert!(sd.u.iter().all(|z| z.im.abs() <= 1e-10));
        }
    }
}

#[test]
fn rigid_rotation_of_rig_and_target_leaves_data_unchanged() {
    let s = setup(FishKind::Twisted, 3);
    let t = ellipse_target(0.3, 2.0, 1.0);
    let theta = 0.9;
    let rotated_target = Target::new(t.boundary.transform(1.0, theta, Point::zeros()).unwrap(), 2.0, 1.0).unwrap();
    let poses: Vec<FishPose> = fish_trajectory(&s).unwrap();
    let turned: Vec<FishPose> = s
        .pose_angles()
        .iter()
        .enumerate()
        .map(|(i, a)| FishPose::new(s.kind, i, a + theta, &s).unwrap())
        .collect();
    let a = data_matrix(&poses, Some(&t), &[3.0], 0.0, Point::zeros()).unwrap();
    let b = data_matrix(&turned, Some(&rotated_target), &[3.0], 0.0, Point::zeros()).unwrap();
    let (qa, qb) = (&a.measurements.q[0], &b.measurements.q[0]);
    let scale = qa.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!((qa - qb).iter().all(|z| z.norm() <= 1e-8 * scale));
}

#[test]
fn skin_jump_is_robin_type() {
    let s = FishSetup {
        body_nodes: 1024,
        ..setup(FishKind::Ellipse, 1)
    };
    let pose = &fish_trajectory(&s).unwrap()[0];
    let t = ellipse_target(0.3, 2.0, 1.0);
    let xi = 0.1;
    let sd = solve_forward(pose, Some(&t), 2.0, xi).unwrap();
    let phi = sd.phi.clone().unwrap();
    let u = |x: &[Point]| -> Vec<Complex64> {
        let h = compute_h(pose, &sd, x).unwrap();
        let st = single_layer_matrix(&t.boundary, x).unwrap();
        (0..x.len())
            .map(|i| h[i] + (0..phi.len()).map(|j| phi[j] * st[(i, j)]).sum::<Complex64>())
            .collect()
    };
    let body = &pose.body;
    let psi_max = sd.psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let h = 0.01;
    for j in [100, 300, 700] {
        let (x, n) = (body.nodes()[j], body.normals()[j]);
        let v = u(&[x + n * h, x - n * h]);
        // u(x+hν) - u(x-hν) = ξψ + h(∂u/∂ν|₊ + ∂u/∂ν|₋) + O(h²), with a
        // vanishing inner flux.
        let jump = v[0] - v[1] - sd.psi[j] * h;
        assert!((jump - sd.psi[j] * xi).norm() <= 2e-3 * psi_max, "node {j}: {jump} vs {}", sd.psi[j] * xi);
    }
}

#[test]
fn postprocessing_isolates_the_target_field() {
    let poses = fish_trajectory(&setup(FishKind::Twisted, 1)).unwrap();
    let pose = &poses[0];
    let t = ellipse_target(0.3, 2.0, 1.0);
    let solver = PoseSolver::new(pose, Some(&t), 0.0).unwrap();
    let sd = solver.solve(0, 4.0).unwrap();
    let bg = solver.background_flux().map(|v| Complex64::new(v, 0.0));
    let p = solver.postprocess(&(&sd.psi - &bg)).unwrap();
    let dn = single_layer_normal_matrix(&t.boundary, pose.body.nodes(), pose.body.normals()).unwrap();
    let phi = sd.phi.unwrap();
    let expect = electrosense::potentials::Density::from_fn(pose.body.len(), |i, _| {
        (0..phi.len()).map(|j| phi[j] * dn[(i, j)]).sum()
    });
    assert!((&p - &expect).norm() <= 1e-10 * expect.norm());
    let zero = postprocess(pose, &electrosense::potentials::Density::zeros(pose.body.len()), 0.0).unwrap();
    assert!(zero.iter().all(|z| z.norm() == 0.0));
}

#[test]
fn data_matrix_shapes_and_errors() {
    let poses = fish_trajectory(&setup(FishKind::Twisted, 2)).unwrap();
    let t = ellipse_target(0.3, 2.0, 1.0);
    let freqs: Vec<f64> = (1..=10).map(f64::from).collect();
    let sim = data_matrix(&poses, Some(&t), &freqs, 0.0, Point::zeros()).unwrap();
    assert_eq!(sim.measurements.q.len(), 10);
    assert!(sim.measurements.q.iter().all(|q| q.shape() == (2, 128)));
    assert!(data_matrix(&[], Some(&t), &freqs, 0.0, Point::zeros()).is_err());
    assert!(data_matrix(&poses, Some(&t), &[], 0.0, Point::zeros()).is_err());
    assert!(solve_forward(&poses[0], Some(&t), 1.0, -0.1).is_err());

    let near = Target::new(
        make_shape(&ShapeSpec::Disk { radius: 0.3 }, 128)
            .unwrap()
            .transform(1.0, 0.0, poses[0].dipole_position)
            .unwrap(),
        2.0,
        0.0,
    )
    .unwrap();
    assert!(solve_forward(&poses[0], Some(&near), 1.0, 0.0).is_err());
}

#[test]
fn measurement_bundle_round_trip() {
    let poses = fish_trajectory(&setup(FishKind::Twisted, 2)).unwrap();
    let t = ellipse_target(0.3, 2.0, 1.0);
    let sim = data_matrix(&poses, Some(&t), &[1.0, 2.0, 3.0], 0.0, Point::new(0.0, 0.0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let extra = serde_json::json!({"note": "test"});
    write_measurements(dir.path(), &sim.measurements, extra.clone()).unwrap();
    assert!(dir.path().join("q_f03.csv").exists());
    let (back, e) = read_measurements(dir.path()).unwrap();
    assert_eq!(back, sim.measurements);
    assert_eq!(e, extra);
    std::fs::write(dir.path().join("q_f01.csv"), "1+2j\n").unwrap();
    assert!(read_measurements(dir.path()).is_err());
}
