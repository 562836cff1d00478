mod common;

use std::f64::consts::FRAC_1_SQRT_2;

use common::*;
use nalgebra::{DMatrix, Matrix2, Vector3};
use pkmkit::config::reference;
use pkmkit::jacobian::{build, homogenize, JacobianMode, Tolerances};
use pkmkit::kinematics::{inverse_kinematics, Branch, WorkingMode};
use pkmkit::kinetostatics::{
    amplification, isotropy_locus_check, profile_of, singular_values, transmission_bounds, Factor,
};
use pkmkit::model::{MechanismGeometry, Pose, Variant};
use pkmkit::par::Parallelism;
use pkmkit::workspace::{max_square, scan, square_box, GridAxis, ScanSettings, SquareOrientation};
use proptest::prelude::*;

/// Homogenized J at a random reachable, nonsingular configuration.
fn random_j(g: &MechanismGeometry, seed: u64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut r = rng(seed);
    loop {
        let (pose, sols) = random_reachable(g, &mut r);
        let joints = &sols[0].1;
        if condition(g, &pose, joints) > 1e3 || serial_margin(g, &pose, joints) < 1e-3 {
            continue;
        }
        let mut jp = build(g, &pose, joints, JacobianMode::Consistent, &Tolerances::default()).unwrap();
        if g.variant != Variant::Planar2T {
            jp = homogenize(&jp, g.tool.as_ref().unwrap().characteristic_length()).unwrap();
        }
        return (jp.j.clone().unwrap(), jp.a, jp.b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn singular_values_match_gram_eigenvalues(k in 0usize..3, seed in any::<u64>()) {
        let (j, _, _) = random_j(&references()[k], seed);
        let sv = singular_values(&j);
        let mut eig: Vec<f64> = (j.transpose() * &j)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        prop_assert!(sv.windows(2).all(|w| w[0] >= w[1]));
        for (s, e) in sv.iter().zip(&eig) {
            prop_assert!((s - e).abs() <= 1e-10 * sv[0].max(1.0), "{sv:?} vs {eig:?}");
        }
    }

    #[test]
    fn velocity_and_force_factors_are_reciprocal(k in 0usize..3, seed in any::<u64>()) {
        let (j, a, b) = random_j(&references()[k], seed);
        // J^-1 = B^-1 A, formed without inverting J.
        let inv = b.clone().lu().solve(&a).unwrap();
        let s_inv = singular_values(&inv);
        let s = singular_values(&j);
        let n = s.len();
        prop_assert!((s[n - 1] * s_inv[0] - 1.0).abs() <= 1e-9);
        prop_assert!((s[0] * s_inv[n - 1] - 1.0).abs() <= 1e-9);
        let prof = profile_of(&j).unwrap();
        for (sv, ff) in prof.singular_values.iter().zip(&prof.force_factors) {
            prop_assert!((sv.value() * ff.value() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn planar_factors_invariant_under_frame_rotation(seed in any::<u64>(), t1 in -3.2f64..3.2, t2 in -3.2f64..3.2) {
        let (j, _, _) = random_j(&reference::g0(), seed);
        let rot = |t: f64| {
            let m = Matrix2::new(t.cos(), -t.sin(), t.sin(), t.cos());
            DMatrix::from_iterator(2, 2, m.iter().copied())
        };
        let turned = rot(t1) * &j * rot(t2);
        let a = singular_values(&j);
        let b = singular_values(&turned);
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-12 * a[0].max(1.0), "{a:?} vs {b:?}");
        }
    }
}

fn g0_jp(x: f64, y: f64) -> pkmkit::jacobian::JacobianPair {
    let g0 = reference::g0();
    let pose = Pose::planar(x, y);
    let ik = inverse_kinematics(&g0, &pose, &WorkingMode::uniform(2, Branch::Minus)).unwrap();
    build(&g0, &pose, &ik.joints, JacobianMode::Consistent, &Tolerances::default()).unwrap()
}

#[test]
fn isotropic_and_homogenized_references() {
    let p = amplification(&g0_jp(0.0, 0.0), None).unwrap();
    assert_eq!(p.singular_values, vec![Factor::Finite(1.0); 2]);
    assert_eq!(p.condition_number, Factor::Finite(1.0));
    assert!(p.isotropy_defect.value() <= 1e-10);

    let g1 = reference::g1();
    let pose = Pose::with_beta(0.0, 0.0, 0.0);
    let ik = inverse_kinematics(&g1, &pose, &WorkingMode::uniform(3, Branch::Minus)).unwrap();
    let jp = build(&g1, &pose, &ik.joints, JacobianMode::Consistent, &Tolerances::default()).unwrap();
    let p = amplification(&jp, Some(0.5)).unwrap();
    for s in &p.singular_values {
        assert!((s.value() - 1.0).abs() <= 1e-12);
    }
    assert!(amplification(&jp, None).is_err(), "mixed units need a length");
}

#[test]
fn near_and_on_parallel_locus() {
    let near = amplification(&g0_jp(FRAC_1_SQRT_2 - 1e-6, FRAC_1_SQRT_2 - 1e-6), None).unwrap();
    assert!(near.condition_number.value() > 1e5);
    let on = amplification(&g0_jp(FRAC_1_SQRT_2, FRAC_1_SQRT_2), None).unwrap();
    assert!(on.condition_number.is_infinite());
    assert!(on.sigma_max().is_infinite());
    assert!(on.force_factors.iter().any(|f| f.value() <= 1e-10));
}

#[test]
fn isotropy_requires_orthogonal_rails() {
    let rep = isotropy_locus_check(&reference::g0());
    assert_eq!(rep.e1_dot_e2, 0.0);
    assert_eq!(rep.isotropic_pose, Some([0.0, 0.0]));
    assert!(rep.configurations.iter().any(|c| c.condition == Factor::Finite(1.0)));

    let mut skew = reference::g0();
    skew.translation_legs[1].rail_axis = Vector3::new(0.5, 0.75f64.sqrt(), 0.0);
    let rep = isotropy_locus_check(&skew);
    assert!((rep.e1_dot_e2.abs() - 0.5).abs() < 1e-12);
    assert!(rep.message.contains("no isotropic configuration exists"));

    let off = amplification(&g0_jp(0.3, 0.2), None).unwrap();
    assert!(off.condition_number.value() > 1.0);
}

fn settings() -> ScanSettings {
    ScanSettings::new(WorkingMode::uniform(2, Branch::Minus), 2.0)
}

#[test]
fn transmission_verdicts() {
    let g0 = reference::g0();
    let point = vec![GridAxis::new("x", 0.0, 0.0, 3).unwrap(), GridAxis::new("y", 0.0, 0.0, 3).unwrap()];
    let v = transmission_bounds(&g0, &point, 1.001, &settings(), Parallelism::Sequential).unwrap();
    assert!(v.holds && v.samples == 1);

    let s = FRAC_1_SQRT_2;
    let across = square_box(s - 0.1, s + 0.1, 21).unwrap();
    for psi in [2.0, 1e3, 1e9] {
        let v = transmission_bounds(&g0, &across, psi, &settings(), Parallelism::Sequential).unwrap();
        assert!(!v.holds, "psi {psi}");
    }

    let map = scan(&g0, &square_box(-1.5, 1.5, 101).unwrap(), &settings(), Parallelism::Auto).unwrap();
    let sq = max_square(&map, SquareOrientation::AxisAligned, 2.0).unwrap();
    let nodes = max_square_nodes(&map, &sq);
    let v = transmission_bounds(&g0, &nodes, 2.0, &settings(), Parallelism::Sequential).unwrap();
    assert!(v.holds, "{:?}", v.first_violation);

    let outside = square_box(2.5, 3.0, 3).unwrap();
    let err = transmission_bounds(&g0, &outside, 2.0, &settings(), Parallelism::Sequential).unwrap_err();
    assert!(err.to_string().contains("2.5"), "{err}");
}

/// Map nodes covered by the square, as a grid box.
fn max_square_nodes(map: &pkmkit::workspace::WorkspaceMap, sq: &pkmkit::workspace::SquareWorkspace) -> Vec<GridAxis> {
    let ax = &map.axes[0];
    let step = ax.step();
    let lo = |c: f64| ax.lo + ((c - sq.half_side - ax.lo) / step).ceil() * step;
    let hi = |c: f64| ax.lo + ((c + sq.half_side - ax.lo) / step).floor() * step;
    let count = |c: f64| ((hi(c) - lo(c)) / step).round() as usize + 1;
    vec![
        GridAxis::new("x", lo(sq.center[0]), hi(sq.center[0]), count(sq.center[0]).max(3)).unwrap(),
        GridAxis::new("y", lo(sq.center[1]), hi(sq.center[1]), count(sq.center[1]).max(3)).unwrap(),
    ]
}
