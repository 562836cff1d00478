//! Parallel (A) and serial (B) Jacobian matrices.
//!
//! Differentiating each closure equation ||b_i - a_i||^2 = L_i^2 and
//! eliminating the passive joint rates gives one row of A t = B rho_dot per
//! leg:
//!
//! * translation leg: `(b_i - a_i)^T p_dot = (b_i - a_i)^T e_i rho_dot_i`
//! * orientation leg: the same, plus `-(b_k - a_k)^T (w x (p - b_k))` terms
//!   for each tool rotation axis `w`.
//!
//! A is block lower-triangular (translation rows carry zeros in the angular
//! columns) and B is diagonal.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::carried_gamma_axis;
use crate::model::{
    attachment_points, closure_residual, JointVector, MechanismGeometry, Pose, Variant, Vec3,
};

/// Largest closure residual accepted by the Jacobian builders.
pub const ASSEMBLY_TOL: f64 = 1e-6;
/// Angle below which two lines are reported as colinear or coplanar.
pub const WITNESS_ANGLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Threshold on |det A| / prod(row norms of A).
    pub parallel: f64,
    /// Threshold on |(b_i - a_i)^T e_i| / L_i.
    pub serial: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            parallel: 1e-8,
            serial: 1e-8,
        }
    }
}

/// Which second rotation axis enters the 2T2R angular columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Carried axis Rot(j, beta) i; matches the implemented tool rotation.
    #[default]
    Consistent,
    /// Fixed axis i, as the matrix is usually displayed.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianPair {
    pub variant: Variant,
    /// Parallel Jacobian.
    pub a: DMatrix<f64>,
    /// Serial Jacobian (diagonal).
    pub b: DMatrix<f64>,
    /// A^-1 B, absent when A is parallel-singular.
    pub j: Option<DMatrix<f64>>,
    /// Determinant of the leg block of A (stacked axis excluded).
    pub det_a: f64,
    /// Product of the leg transmission dot products.
    pub det_b: f64,
    /// det A over the product of the row norms of A, before any scaling.
    pub normalized_det_a: f64,
    pub literal_mode: bool,
    /// A unit row/column for the stacked z axis is appended.
    pub stacked: bool,
    /// Characteristic length already applied to the angular rows of J.
    pub char_len: Option<f64>,
    pub tol_parallel: f64,
}

impl JacobianPair {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Rows of J (and columns of A) holding angular rates.
    pub fn rotational_rows(&self) -> Range<usize> {
        2..self.variant.task_dim()
    }

    pub fn has_rotational_rows(&self) -> bool {
        !self.rotational_rows().is_empty()
    }

    /// True when every task coordinate shares the same unit.
    pub fn is_homogeneous(&self) -> bool {
        !self.has_rotational_rows() || self.char_len.is_some()
    }
}

/// Leg-wise geometric quantities shared by the builders and `classify`.
struct LegVectors {
    rod: Vec3,
    /// p - b_i
    link: Vec3,
    rail: Vec3,
    length: f64,
}

fn leg_vectors(geom: &MechanismGeometry, pose: &Pose, joints: &JointVector) -> Result<Vec<LegVectors>> {
    let points = attachment_points(geom, pose, joints)?;
    let p = pose.position();
    Ok(points
        .iter()
        .zip(geom.legs())
        .map(|((a, b), leg)| LegVectors {
            rod: b - a,
            link: p - b,
            rail: leg.rail_axis,
            length: leg.leg_length,
        })
        .collect())
}

fn check_assembly(geom: &MechanismGeometry, pose: &Pose, joints: &JointVector) -> Result<()> {
    let residual = closure_residual(geom, pose, joints)?;
    let worst = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if worst > ASSEMBLY_TOL {
        return Err(Error::InconsistentAssembly {
            residual: worst,
            limit: ASSEMBLY_TOL,
        });
    }
    Ok(())
}

/// Angular axes (beta[, gamma]) used in the A matrix columns.
fn angular_axes(geom: &MechanismGeometry, pose: &Pose, mode: JacobianMode) -> Vec<Vec3> {
    let Some(tool) = geom.tool.as_ref() else {
        return vec![];
    };
    let mut axes = vec![tool.beta_axis];
    if geom.variant == Variant::Spatial2T2R {
        axes.push(match mode {
            JacobianMode::Consistent => carried_gamma_axis(pose.beta.unwrap_or(0.0), tool),
            JacobianMode::Literal => tool.gamma_axis,
        });
    }
    axes
}

/// Builds A, B and J for any variant.
pub fn build(
    geom: &MechanismGeometry,
    pose: &Pose,
    joints: &JointVector,
    mode: JacobianMode,
    tol: &Tolerances,
) -> Result<JacobianPair> {
    check_assembly(geom, pose, joints)?;
    let legs = leg_vectors(geom, pose, joints)?;
    let axes = angular_axes(geom, pose, mode);
    let n = geom.variant.task_dim();

    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for (i, leg) in legs.iter().enumerate() {
        a[(i, 0)] = leg.rod.x;
        a[(i, 1)] = leg.rod.y;
        if i >= 2 {
            for (c, w) in axes.iter().enumerate() {
                a[(i, 2 + c)] = -leg.rod.dot(&w.cross(&leg.link));
            }
        }
        b[(i, i)] = leg.rod.dot(&leg.rail);
    }

    let det_a = a.clone().lu().determinant();
    let det_b = (0..n).map(|i| b[(i, i)]).product::<f64>();
    let row_norms: f64 = a.row_iter().map(|r| r.norm()).product();
    let normalized_det_a = if row_norms > 0.0 { det_a / row_norms } else { 0.0 };

    let j = if normalized_det_a.abs() >= tol.parallel {
        a.clone().lu().solve(&b)
    } else {
        None
    };

    let mut jp = JacobianPair {
        variant: geom.variant,
        a,
        b,
        j,
        det_a,
        det_b,
        normalized_det_a,
        literal_mode: mode == JacobianMode::Literal,
        stacked: false,
        char_len: None,
        tol_parallel: tol.parallel,
    };
    if pose.z.is_some() {
        append_stacked_axis(&mut jp);
    }
    Ok(jp)
}

fn append_stacked_axis(jp: &mut JacobianPair) {
    let grow = |m: &DMatrix<f64>| {
        let n = m.nrows();
        let mut out = m.clone().resize(n + 1, n + 1, 0.0);
        out[(n, n)] = 1.0;
        out
    };
    jp.a = grow(&jp.a);
    jp.b = grow(&jp.b);
    jp.j = jp.j.as_ref().map(grow);
    jp.stacked = true;
}

fn require_variant(geom: &MechanismGeometry, v: Variant) -> Result<()> {
    if geom.variant != v {
        return Err(Error::config(format!(
            "expected a {v} geometry, got {}",
            geom.variant
        )));
    }
    Ok(())
}

/// 2x2 matrices of the planar mechanism; J maps rho_dot to (x_dot, y_dot).
pub fn build_planar(
    geom: &MechanismGeometry,
    pose: &Pose,
    joints: &JointVector,
) -> Result<JacobianPair> {
    require_variant(geom, Variant::Planar2T)?;
    build(geom, pose, joints, JacobianMode::Consistent, &Tolerances::default())
}

/// 3x3 matrices; J maps rho_dot to (x_dot, y_dot, beta_dot).
pub fn build_2t1r(
    geom: &MechanismGeometry,
    pose: &Pose,
    joints: &JointVector,
) -> Result<JacobianPair> {
    require_variant(geom, Variant::Spatial2T1R)?;
    build(geom, pose, joints, JacobianMode::Consistent, &Tolerances::default())
}

/// 4x4 matrices; J maps rho_dot to (x_dot, y_dot, beta_dot, gamma_dot).
pub fn build_2t2r(
    geom: &MechanismGeometry,
    pose: &Pose,
    joints: &JointVector,
    literal: bool,
) -> Result<JacobianPair> {
    require_variant(geom, Variant::Spatial2T2R)?;
    let mode = if literal {
        JacobianMode::Literal
    } else {
        JacobianMode::Consistent
    };
    build(geom, pose, joints, mode, &Tolerances::default())
}

/// Task velocity t = J rho_dot.
pub fn solve_velocity(jp: &JacobianPair, rho_dot: &[f64]) -> Result<Vec<f64>> {
    if rho_dot.len() != jp.dim() {
        return Err(Error::config(format!(
            "joint rate vector has {} entries, expected {}",
            rho_dot.len(),
            jp.dim()
        )));
    }
    let j = jp.j.as_ref().ok_or_else(|| {
        Error::Uncontrollable(format!(
            "parallel singularity (normalized det A = {:e}); the tool cannot resist any effort",
            jp.normalized_det_a
        ))
    })?;
    let rate = nalgebra::DVector::from_column_slice(rho_dot);
    Ok((j * rate).iter().copied().collect())
}

/// Rescales the angular rows of J so angular rates read as
/// `char_len * rate` (m/s). The matching columns of A are divided by
/// `char_len`; B is unchanged.
pub fn homogenize(jp: &JacobianPair, char_len: f64) -> Result<JacobianPair> {
    if !(char_len > 0.0) || !char_len.is_finite() {
        return Err(Error::config(format!(
            "characteristic length must be positive, got {char_len}"
        )));
    }
    if !jp.has_rotational_rows() {
        return Err(Error::config(
            "homogenization needs a variant with rotational task coordinates",
        ));
    }
    let mut out = jp.clone();
    for r in jp.rotational_rows() {
        out.a.column_mut(r).scale_mut(1.0 / char_len);
        if let Some(j) = out.j.as_mut() {
            j.row_mut(r).scale_mut(char_len);
        }
        out.det_a /= char_len;
    }
    out.char_len = Some(jp.char_len.unwrap_or(1.0) * char_len);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub serial_singular: Vec<bool>,
    pub parallel_singular: bool,
    pub normalized_det_a: f64,
    pub geometric_witnesses: Vec<String>,
}

impl SingularityReport {
    pub fn any(&self) -> bool {
        self.parallel_singular || self.serial_singular.iter().any(|&s| s)
    }
}

/// Angle between two lines (direction sign ignored), in [0, pi/2].
fn line_angle(u: &Vec3, v: &Vec3) -> f64 {
    let c = u.cross(v).norm();
    let d = u.dot(v).abs();
    c.atan2(d)
}

/// Flags serial and parallel singularities and, independently of det A,
/// evaluates the geometric conditions behind them.
pub fn classify(
    jp: &JacobianPair,
    geom: &MechanismGeometry,
    pose: &Pose,
    joints: &JointVector,
    tol: &Tolerances,
) -> Result<SingularityReport> {
    let legs = leg_vectors(geom, pose, joints)?;
    let mut witnesses = Vec::new();

    let serial_singular: Vec<bool> = legs
        .iter()
        .map(|l| l.rod.dot(&l.rail).abs() / l.length < tol.serial)
        .collect();
    for (i, &s) in serial_singular.iter().enumerate() {
        if s {
            witnesses.push(format!("a{n} - b{n} ⊥ e{n} (leg {n} rod perpendicular to its rail)", n = i + 1));
        }
    }

    let planar = |v: &Vec3| Vec3::new(v.x, v.y, 0.0);
    if line_angle(&planar(&legs[0].rod), &planar(&legs[1].rod)) < WITNESS_ANGLE_TOL {
        witnesses.push("lines (A1B1) and (A2B2) are colinear".into());
    }

    let axes = angular_axes(
        geom,
        pose,
        if jp.literal_mode {
            JacobianMode::Literal
        } else {
            JacobianMode::Consistent
        },
    );
    for (k, leg) in legs.iter().enumerate().skip(2) {
        let n = k + 1;
        let scale = leg.rod.norm() * leg.link.norm();
        if scale == 0.0 || line_angle(&leg.rod, &leg.link) < WITNESS_ANGLE_TOL {
            witnesses.push(format!("lines (A{n}B{n}) and (B{n}P) are colinear"));
        } else if geom.variant == Variant::Spatial2T1R
            && (axes[0].dot(&leg.link.cross(&leg.rod)) / scale).abs() < WITNESS_ANGLE_TOL
        {
            witnesses.push(format!(
                "rod {n}, tool link (B{n}P) and the beta axis are coplanar"
            ));
        }
    }
    if geom.variant == Variant::Spatial2T2R {
        // Moments of the rod lines about P, seen through the two rotation
        // axes; dependent moments mean the tool can turn with locked legs.
        let m: Vec<Vec3> = legs[2..].iter().map(|l| l.link.cross(&l.rod)).collect();
        let det = m[0].dot(&axes[0]) * m[1].dot(&axes[1]) - m[0].dot(&axes[1]) * m[1].dot(&axes[0]);
        let scale: f64 = legs[2..].iter().map(|l| l.rod.norm() * l.link.norm()).product();
        if scale == 0.0 || (det / scale).abs() < WITNESS_ANGLE_TOL {
            witnesses.push("lines (A3B3), (A4B4) and (CP) are coplanar".into());
        }
    }

    Ok(SingularityReport {
        serial_singular,
        parallel_singular: jp.normalized_det_a.abs() < tol.parallel,
        normalized_det_a: jp.normalized_det_a,
        geometric_witnesses: witnesses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::reference;
    use crate::model::LegGeometry;
    use nalgebra::dmatrix;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn planar_isotropic_reference() {
        let g0 = reference::g0();
        let jp = build_planar(&g0, &Pose::planar(0.0, 0.0), &vec![-1.0, -1.0].into()).unwrap();
        assert_eq!(jp.a, DMatrix::identity(2, 2));
        assert_eq!(jp.b, DMatrix::identity(2, 2));
        assert_eq!(jp.j.unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn planar_parallel_singular_example() {
        let g0 = reference::g0();
        let pose = Pose::planar(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
        let joints: JointVector = vec![0.0, 0.0].into();
        let jp = build_planar(&g0, &pose, &joints).unwrap();
        assert_eq!(jp.a.row(0), jp.a.row(1));
        assert_eq!(jp.det_a, 0.0);
        assert!(jp.j.is_none());
        let rep = classify(&jp, &g0, &pose, &joints, &Tolerances::default()).unwrap();
        assert!(rep.parallel_singular);
        assert!(rep.normalized_det_a.abs() < 1e-12);
        assert!(rep
            .geometric_witnesses
            .iter()
            .any(|w| w.contains("(A1B1) and (A2B2) are colinear")));
        assert!(matches!(
            solve_velocity(&jp, &[1.0, 0.0]),
            Err(Error::Uncontrollable(_))
        ));
    }

    #[test]
    fn planar_serial_singular_example() {
        let g0 = reference::g0();
        let pose = Pose::planar(0.3, 1.0);
        let joints: JointVector = vec![0.3, 1.0 - 0.91f64.sqrt()].into();
        let jp = build_planar(&g0, &pose, &joints).unwrap();
        assert_eq!(jp.b[(0, 0)], 0.0);
        assert_eq!(jp.det_b, 0.0);
        let rep = classify(&jp, &g0, &pose, &joints, &Tolerances::default()).unwrap();
        assert_eq!(rep.serial_singular, vec![true, false]);
        assert!(!rep.parallel_singular);
        assert!(rep.geometric_witnesses.iter().any(|w| w.contains("a1 - b1 ⊥ e1")));
    }

    #[test]
    fn g1_reference_matrices() {
        let g1 = reference::g1();
        let pose = Pose::with_beta(0.0, 0.0, 0.0);
        let joints: JointVector = vec![-1.0; 3].into();
        let jp = build_2t1r(&g1, &pose, &joints).unwrap();
        assert_eq!(jp.a, DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1.0, -0.5]));
        assert_eq!(jp.b, DMatrix::identity(3, 3));
        let j = jp.j.clone().unwrap();
        assert!(max_abs(&(j - DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1.0, -2.0]))) < 1e-15);
        let t = solve_velocity(&jp, &[0.0, 0.0, 1.0]).unwrap();
        assert!((t[2] + 2.0).abs() < 1e-15 && t[0] == 0.0 && t[1] == 0.0);
        assert_eq!(solve_velocity(&jp, &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn g2_reference_matrices_both_modes() {
        let g2 = reference::g2();
        let pose = Pose::with_beta_gamma(0.0, 0.0, 0.0, 0.0);
        let joints: JointVector = vec![-1.0; 4].into();
        let consistent = build_2t2r(&g2, &pose, &joints, false).unwrap();
        let literal = build_2t2r(&g2, &pose, &joints, true).unwrap();
        let diag_a = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1.0, -0.5, 0.5]);
        assert_eq!(consistent.a, diag_a);
        assert_eq!(literal.a, diag_a);
        assert_eq!(consistent.b, DMatrix::identity(4, 4));
        let want = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1.0, -2.0, 2.0]);
        assert!(max_abs(&(consistent.j.unwrap() - &want)) < 1e-15);
        assert!(literal.literal_mode);
    }

    #[test]
    fn literal_and_consistent_differ_only_when_beta_nonzero() {
        let g2 = reference::g2();
        let mode = crate::kinematics::WorkingMode::uniform(4, crate::kinematics::Branch::Minus);
        for (beta, same) in [(0.0, true), (0.3, false)] {
            let pose = Pose::with_beta_gamma(0.05, -0.1, beta, 0.2);
            let ik = crate::kinematics::inverse_kinematics(&g2, &pose, &mode).unwrap();
            let c = build_2t2r(&g2, &pose, &ik.joints, false).unwrap();
            let l = build_2t2r(&g2, &pose, &ik.joints, true).unwrap();
            assert_eq!(c.a == l.a, same, "beta = {beta}");
            assert_eq!(c.b, l.b);
        }
    }

    #[test]
    fn tool_link_colinear_with_rod_is_parallel_singular() {
        let mut g = reference::g1();
        g.orientation_legs[0] = LegGeometry::new(Vec3::zeros(), Vec3::z(), 1.0, (-2.0, 2.0));
        g.tool.as_mut().unwrap().anchor_offsets[0] = Vec3::new(0.0, 0.0, 0.5);
        let pose = Pose::with_beta(0.0, 0.0, 0.0);
        let joints: JointVector = vec![-1.0, -1.0, -0.5].into();
        let jp = build_2t1r(&g, &pose, &joints).unwrap();
        assert_eq!(jp.a[(2, 2)], 0.0);
        let rep = classify(&jp, &g, &pose, &joints, &Tolerances::default()).unwrap();
        assert!(rep.parallel_singular);
        assert!(rep
            .geometric_witnesses
            .iter()
            .any(|w| w == "lines (A3B3) and (B3P) are colinear"));

        // Same geometry, tool turned flat: rod 3 horizontal, perpendicular to e3.
        let pose = Pose::with_beta(0.5, 0.0, std::f64::consts::FRAC_PI_2);
        let joints: JointVector = vec![-0.5, -(0.75f64.sqrt()), 0.0].into();
        let jp = build_2t1r(&g, &pose, &joints).unwrap();
        let rep = classify(&jp, &g, &pose, &joints, &Tolerances::default()).unwrap();
        assert_eq!(rep.serial_singular, vec![false, false, true]);
        assert!(rep.geometric_witnesses.iter().any(|w| w.contains("a3 - b3 ⊥ e3")));
    }

    #[test]
    fn coplanar_orientation_legs_are_parallel_singular() {
        // Leg 4 mirrored onto the x axis: rods 3, 4 and the tool line through
        // P all lie in the plane y = 0.
        let mut g = reference::g2();
        g.orientation_legs[1] = LegGeometry::new(Vec3::new(-0.5, 0.0, 0.0), Vec3::z(), 1.0, (-2.0, 2.0));
        g.tool.as_mut().unwrap().anchor_offsets[1] = Vec3::new(-0.5, 0.0, 0.0);
        let pose = Pose::with_beta_gamma(0.0, 0.0, 0.0, 0.0);
        let joints: JointVector = vec![-1.0; 4].into();
        let jp = build_2t2r(&g, &pose, &joints, false).unwrap();
        let block = jp.a.view((2, 2), (2, 2)).into_owned();
        assert_eq!(block, dmatrix![-0.5, 0.0; 0.5, 0.0]);
        assert_eq!(jp.det_a, 0.0);
        let rep = classify(&jp, &g, &pose, &joints, &Tolerances::default()).unwrap();
        assert!(rep.parallel_singular);
        assert!(rep
            .geometric_witnesses
            .iter()
            .any(|w| w.contains("(CP) are coplanar")));
    }

    #[test]
    fn homogenize_examples() {
        let g1 = reference::g1();
        let jp = build_2t1r(&g1, &Pose::with_beta(0.0, 0.0, 0.0), &vec![-1.0; 3].into()).unwrap();
        let h = homogenize(&jp, 0.5).unwrap();
        let want = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1.0, -1.0]);
        assert!(max_abs(&(h.j.clone().unwrap() - want)) < 1e-15);
        assert_eq!(h.a[(2, 2)], -1.0);
        assert_eq!(h.char_len, Some(0.5));

        let same = homogenize(&jp, 1.0).unwrap();
        assert_eq!(same.j, jp.j);

        let back = homogenize(&homogenize(&jp, 0.37).unwrap(), 1.0 / 0.37).unwrap();
        assert!(max_abs(&(back.j.unwrap() - jp.j.clone().unwrap())) < 1e-12);

        assert!(matches!(homogenize(&jp, 0.0), Err(Error::Config(_))));
        let g0 = reference::g0();
        let planar = build_planar(&g0, &Pose::planar(0.0, 0.0), &vec![-1.0, -1.0].into()).unwrap();
        assert!(homogenize(&planar, 0.5).is_err());
    }

    #[test]
    fn invalid_assembly_is_rejected() {
        let g0 = reference::g0();
        let err = build_planar(&g0, &Pose::planar(0.0, 0.0), &vec![0.0, 0.0].into());
        assert!(matches!(err, Err(Error::InconsistentAssembly { .. })));
        assert!(build_2t1r(&g0, &Pose::planar(0.0, 0.0), &vec![-1.0, -1.0].into()).is_err());
    }

    #[test]
    fn stacked_axis_adds_unit_entry() {
        let mut g = reference::g0();
        g.stacked_z = Some(crate::model::StackedAxis {
            axis: Vec3::z(),
            rho_min: -1.0,
            rho_max: 1.0,
        });
        let joints = JointVector {
            rho: vec![-1.0, -1.0],
            stacked: Some(0.2),
        };
        let jp = build_planar(&g, &Pose::planar(0.0, 0.0).with_z(0.2), &joints).unwrap();
        assert_eq!(jp.dim(), 3);
        assert_eq!(jp.j.unwrap(), DMatrix::identity(3, 3));
        assert_eq!(jp.det_b, 1.0);
        assert!(jp.stacked);
    }
}
