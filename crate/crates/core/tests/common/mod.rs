//! Helpers shared by the integration tests. Oracles here are written
//! independently of the library internals.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, Vector3};
use pkmkit::config::reference;
use pkmkit::jacobian::{build, JacobianMode, Tolerances};
use pkmkit::kinematics::{forward_kinematics_near, inverse_kinematics, WorkingMode};
use pkmkit::kinetostatics::amplification;
use pkmkit::model::{angle_diff, JointVector, MechanismGeometry, Pose, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn references() -> [MechanismGeometry; 3] {
    [reference::g0(), reference::g1(), reference::g2()]
}

pub fn random_pose(variant: Variant, r: &mut impl Rng) -> Pose {
    let x = r.random_range(-1.0..1.0);
    let y = r.random_range(-1.0..1.0);
    match variant {
        Variant::Planar2T => Pose::planar(x, y),
        Variant::Spatial2T1R => Pose::with_beta(x, y, r.random_range(-PI..PI)),
        Variant::Spatial2T2R => {
            Pose::with_beta_gamma(x, y, r.random_range(-PI..PI), r.random_range(-PI..PI))
        }
    }
}

/// A random pose reached by at least one working mode, with those modes
/// and their joint vectors.
pub fn random_reachable(
    geom: &MechanismGeometry,
    r: &mut impl Rng,
) -> (Pose, Vec<(WorkingMode, JointVector)>) {
    loop {
        let pose = random_pose(geom.variant, r);
        let sols: Vec<_> = WorkingMode::all(geom.leg_count())
            .into_iter()
            .filter_map(|m| inverse_kinematics(geom, &pose, &m).ok().map(|ik| (m, ik.joints)))
            .collect();
        if !sols.is_empty() {
            return (pose, sols);
        }
    }
}

/// Rodrigues rotation about a unit axis.
pub fn rodrigues(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = Matrix3::new(0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Pose difference with angles wrapped.
pub fn pose_delta(a: &Pose, b: &Pose) -> Vec<f64> {
    let mut d = vec![a.x - b.x, a.y - b.y];
    if let (Some(p), Some(q)) = (a.beta, b.beta) {
        d.push(angle_diff(p, q));
    }
    if let (Some(p), Some(q)) = (a.gamma, b.gamma) {
        d.push(angle_diff(p, q));
    }
    d
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Condition number of the (homogenized) Jacobian at a configuration.
pub fn condition(geom: &MechanismGeometry, pose: &Pose, joints: &JointVector) -> f64 {
    let Ok(jp) = build(geom, pose, joints, JacobianMode::Consistent, &Tolerances::default()) else {
        return f64::INFINITY;
    };
    let c = geom.tool.as_ref().map(|t| t.characteristic_length());
    amplification(&jp, if geom.variant == Variant::Planar2T { None } else { c })
        .map(|a| a.condition_number.value())
        .unwrap_or(f64::INFINITY)
}

/// Smallest |rod . rail| / L over the legs.
pub fn serial_margin(geom: &MechanismGeometry, pose: &Pose, joints: &JointVector) -> f64 {
    let pts = pkmkit::model::attachment_points(geom, pose, joints).unwrap();
    geom.legs()
        .zip(&pts)
        .map(|(l, (a, b))| (b - a).dot(&l.rail_axis).abs() / l.leg_length)
        .fold(f64::INFINITY, f64::min)
}

/// Relative error between J rho_dot and central differences of FK along
/// rho_dot (step h), following the branch of `pose`.
pub fn fd_relative_error(
    geom: &MechanismGeometry,
    pose: &Pose,
    joints: &JointVector,
    rho_dot: &[f64],
    h: f64,
) -> f64 {
    let jp = build(geom, pose, joints, JacobianMode::Consistent, &Tolerances::default()).unwrap();
    let j = jp.j.expect("nonsingular");
    let analytic = &j * DMatrix::from_column_slice(rho_dot.len(), 1, rho_dot);
    let shifted = |s: f64| {
        let rho: Vec<f64> = joints.rho.iter().zip(rho_dot).map(|(r, d)| r + s * h * d).collect();
        forward_kinematics_near(geom, &JointVector::new(rho), pose).unwrap().pose
    };
    let fd: Vec<f64> = pose_delta(&shifted(1.0), &shifted(-1.0))
        .iter()
        .map(|d| d / (2.0 * h))
        .collect();
    let diff: Vec<f64> = fd.iter().zip(analytic.iter()).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic.as_slice()).max(1e-300)
}

pub fn random_unit(n: usize, r: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let l = norm(&v);
        if l > 0.1 && l <= 1.0 {
            return v.iter().map(|x| x / l).collect();
        }
    }
}
