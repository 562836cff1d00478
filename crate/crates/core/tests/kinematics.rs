mod common;

use common::*;
use nalgebra::Vector3;
use pkmkit::config::reference;
use pkmkit::kinematics::{
    forward_kinematics, forward_kinematics_planar, inverse_kinematics, AssemblySelector, Branch,
    WorkingMode,
};
use pkmkit::model::{
    attachment_points, closure_residual, JointVector, MechanismGeometry, Pose, Variant,
};
use proptest::prelude::*;
use rand::Rng;

fn geometry(k: usize) -> MechanismGeometry {
    references()[k].clone()
}

/// Roots of |p + d - a0 - rho e|^2 = L^2 solved as a plain quadratic in rho.
fn quadratic_roots(g: &MechanismGeometry, leg: usize, b: Vector3<f64>) -> [f64; 2] {
    let l = g.legs().nth(leg).unwrap();
    let w = b - l.rail_origin;
    let bq = -2.0 * w.dot(&l.rail_axis);
    let c = w.norm_squared() - l.leg_length * l.leg_length;
    let disc = (bq * bq - 4.0 * c).max(0.0).sqrt();
    [(-bq - disc) / 2.0, (-bq + disc) / 2.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fk_of_ik_reproduces_pose(k in 0usize..3, seed in any::<u64>()) {
        let g = geometry(k);
        let (pose, sols) = random_reachable(&g, &mut rng(seed));
        for (mode, joints) in sols {
            let best = Branch::both()
                .into_iter()
                .filter_map(|b| forward_kinematics(&g, &joints, &AssemblySelector::planar(b)).ok())
                .flatten()
                .map(|s| norm(&pose_delta(&s.pose, &pose)))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(best <= 1e-8, "mode {mode}: {best:e}");
        }
    }

    #[test]
    fn kinematics_outputs_close(k in 0usize..3, seed in any::<u64>()) {
        let g = geometry(k);
        let (_, sols) = random_reachable(&g, &mut rng(seed));
        for (_, joints) in sols {
            for b in Branch::both() {
                let Ok(fk) = forward_kinematics(&g, &joints, &AssemblySelector::planar(b)) else {
                    continue;
                };
                for s in fk {
                    let r = closure_residual(&g, &s.pose, &joints).unwrap();
                    prop_assert!(r.iter().all(|v| v.abs() < 1e-9), "{r:?}");
                }
            }
        }
    }

    #[test]
    fn ik_matches_quadratic_oracle(k in 0usize..3, seed in any::<u64>()) {
        let g = geometry(k);
        let (pose, sols) = random_reachable(&g, &mut rng(seed));
        for (mode, joints) in sols {
            let pts = attachment_points(&g, &pose, &joints).unwrap();
            for (i, (_, b)) in pts.iter().enumerate() {
                let roots = quadratic_roots(&g, i, *b);
                let expect = match mode.0[i] {
                    Branch::Minus => roots[0],
                    Branch::Plus => roots[1],
                };
                prop_assert!((joints.rho[i] - expect).abs() < 1e-9, "leg {}: {} vs {}", i + 1, joints.rho[i], expect);
            }
        }
    }

    #[test]
    fn attachment_points_affine_in_rho(k in 0usize..3, seed in any::<u64>(), d in prop::collection::vec(-0.5f64..0.5, 4)) {
        let g = geometry(k);
        let (pose, sols) = random_reachable(&g, &mut rng(seed));
        let joints = &sols[0].1;
        let shifted = JointVector::new(joints.rho.iter().zip(&d).map(|(r, s)| r + s).collect());
        let before = attachment_points(&g, &pose, joints).unwrap();
        let after = attachment_points(&g, &pose, &shifted).unwrap();
        for (i, leg) in g.legs().enumerate() {
            let moved = after[i].0 - before[i].0;
            prop_assert!((moved - leg.rail_axis * d[i]).amax() <= 1e-15);
            prop_assert_eq!(after[i].1, before[i].1);
        }
    }

    #[test]
    fn residual_invariant_under_translation(k in 0usize..3, seed in any::<u64>(), tx in -2.0f64..2.0, ty in -2.0f64..2.0) {
        let g = geometry(k);
        let mut r = rng(seed);
        let pose = random_pose(g.variant, &mut r);
        let joints = JointVector::new((0..g.leg_count()).map(|_| r.random_range(-1.5..1.5)).collect());
        let t = Vector3::new(tx, ty, 0.0);
        let mut moved = g.clone();
        for leg in moved.translation_legs.iter_mut().chain(moved.orientation_legs.iter_mut()) {
            leg.rail_origin += t;
        }
        let moved_pose = Pose { x: pose.x + tx, y: pose.y + ty, ..pose.clone() };
        let a = closure_residual(&g, &pose, &joints).unwrap();
        let b = closure_residual(&moved, &moved_pose, &joints).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0), "{u} vs {v}");
        }
    }
}

#[test]
fn planar_branches_close_and_merge_only_when_tangent() {
    let g0 = reference::g0();
    let mut r = rng(11);
    for _ in 0..500 {
        let joints = JointVector::new(vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]);
        let (Ok(p), Ok(m)) = (
            forward_kinematics_planar(&g0, &joints, Branch::Plus),
            forward_kinematics_planar(&g0, &joints, Branch::Minus),
        ) else {
            continue;
        };
        for s in [&p, &m] {
            assert!(s.residual_norm < 1e-9);
        }
        assert!(!p.branches_merged);
        assert!(p.pose.distance(&m.pose) > 0.0);
    }
    // Feet (sqrt 2, 0) and (0, -sqrt 2) are 2 apart: tangent unit circles.
    let joints = JointVector::new(vec![2.0f64.sqrt(), -(2.0f64.sqrt())]);
    let p = forward_kinematics_planar(&g0, &joints, Branch::Plus).unwrap();
    let m = forward_kinematics_planar(&g0, &joints, Branch::Minus).unwrap();
    assert!(p.branches_merged && m.branches_merged);
    assert!(p.pose.distance(&m.pose) < 1e-6);
}

#[test]
fn spatial_roots_reverify_closure() {
    let g2 = reference::g2();
    let mut r = rng(12);
    for _ in 0..30 {
        let (_, sols) = random_reachable(&g2, &mut r);
        for (_, joints) in sols.iter().take(2) {
            for b in Branch::both() {
                let Ok(fk) = forward_kinematics(&g2, joints, &AssemblySelector::planar(b)) else {
                    continue;
                };
                for s in fk {
                    let res = closure_residual(&g2, &s.pose, joints).unwrap();
                    assert!(res[2].abs() <= 1e-10 && res[3].abs() <= 1e-10, "{res:?}");
                }
            }
        }
    }
}

#[test]
fn every_mode_of_reference_pose_round_trips() {
    for g in references() {
        let pose = match g.variant {
            Variant::Planar2T => Pose::planar(0.1, -0.2),
            Variant::Spatial2T1R => Pose::with_beta(0.1, -0.2, 0.3),
            Variant::Spatial2T2R => Pose::with_beta_gamma(0.1, -0.2, 0.3, -0.4),
        };
        for mode in WorkingMode::all(g.leg_count()) {
            let Ok(ik) = inverse_kinematics(&g, &pose, &mode) else {
                continue;
            };
            let found = Branch::both().into_iter().any(|b| {
                forward_kinematics(&g, &ik.joints, &AssemblySelector::planar(b))
                    .map(|v| v.iter().any(|s| norm(&pose_delta(&s.pose, &pose)) < 1e-8))
                    .unwrap_or(false)
            });
            assert!(found, "{} mode {mode}", g.variant);
        }
    }
}
