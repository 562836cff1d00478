//! Domain types for the modular mechanism family and the loop-closure
//! evaluation every other module builds on.
//!
//! A mechanism always has two translation legs (prismatic rail followed by a
//! parallelogram, abstracted to a rod of fixed length) carrying a platform
//! that only translates in the z = 0 plane. The 2T1R and 2T2R variants add
//! one or two prismatic/universal/universal legs that orient a tool body
//! hinged on the platform.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::kinematics::tool_rotation;

pub type Vec3 = Vector3<f64>;

/// Tolerance on the unit norm of direction vectors and on axis orthogonality.
pub const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Planar2T,
    Spatial2T1R,
    Spatial2T2R,
}

impl Variant {
    pub fn orientation_legs(self) -> usize {
        match self {
            Variant::Planar2T => 0,
            Variant::Spatial2T1R => 1,
            Variant::Spatial2T2R => 2,
        }
    }

    pub fn leg_count(self) -> usize {
        2 + self.orientation_legs()
    }

    /// Number of task coordinates driven by the legs (stacked axis excluded).
    pub fn task_dim(self) -> usize {
        self.leg_count()
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Planar2T => "planar_2t",
            Variant::Spatial2T1R => "spatial_2t1r",
            Variant::Spatial2T2R => "spatial_2t2r",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One actuated prismatic rail with its fixed-length rod.
#[derive(Debug, Clone, PartialEq)]
pub struct LegGeometry {
    /// Position of the foot point A_i when the joint reads zero.
    pub rail_origin: Vec3,
    /// Unit direction of travel of the foot point.
    pub rail_axis: Vec3,
    pub leg_length: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl LegGeometry {
    pub fn new(rail_origin: Vec3, rail_axis: Vec3, leg_length: f64, limits: (f64, f64)) -> Self {
        LegGeometry {
            rail_origin,
            rail_axis,
            leg_length,
            rho_min: limits.0,
            rho_max: limits.1,
        }
    }

    /// Foot point a_i = a_i0 + rho e_i.
    pub fn foot(&self, rho: f64) -> Vec3 {
        self.rail_origin + self.rail_axis * rho
    }

    pub fn within_limits(&self, rho: f64) -> bool {
        rho >= self.rho_min && rho <= self.rho_max
    }

    fn validate(&self, path: &str) -> Result<()> {
        check_unit(&self.rail_axis, &format!("{path}.rail_axis"))?;
        if !(self.leg_length > 0.0) || !self.leg_length.is_finite() {
            return Err(Error::config(format!(
                "{path}.leg_length: must be positive, got {}",
                self.leg_length
            )));
        }
        if !(self.rho_min < self.rho_max) {
            return Err(Error::config(format!(
                "{path}: rho_min ({}) must be below rho_max ({})",
                self.rho_min, self.rho_max
            )));
        }
        if !vec_finite(&self.rail_origin) {
            return Err(Error::config(format!("{path}.rail_origin: non-finite")));
        }
        Ok(())
    }
}

/// Tool body hinged on the platform at P.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolBody {
    /// Vector from P to the attachment B_k of each orientation leg, in the
    /// tool frame.
    pub anchor_offsets: Vec<Vec3>,
    /// Platform-fixed first rotation axis (beta).
    pub beta_axis: Vec3,
    /// Tool-carried second rotation axis (gamma), expressed at beta = 0.
    pub gamma_axis: Vec3,
    pub characteristic_length: Option<f64>,
}

impl ToolBody {
    /// Length used to express angular rates in meters per second. Defaults to
    /// the length of the first tool link.
    pub fn characteristic_length(&self) -> f64 {
        self.characteristic_length
            .unwrap_or_else(|| self.anchor_offsets.first().map_or(1.0, |r| r.norm()))
    }

    fn validate(&self, legs: usize) -> Result<()> {
        check_unit(&self.beta_axis, "tool.beta_axis")?;
        check_unit(&self.gamma_axis, "tool.gamma_axis")?;
        if self.beta_axis.dot(&self.gamma_axis).abs() > UNIT_TOL {
            return Err(Error::config(
                "tool: beta_axis and gamma_axis must be orthogonal",
            ));
        }
        if self.anchor_offsets.len() != legs {
            return Err(Error::config(format!(
                "tool.anchor_offsets: expected {legs} entries (one per orientation leg), got {}",
                self.anchor_offsets.len()
            )));
        }
        for (k, r) in self.anchor_offsets.iter().enumerate() {
            if r.norm() == 0.0 || !vec_finite(r) {
                return Err(Error::config(format!(
                    "tool.anchor_offsets[{k}]: must be a nonzero finite vector"
                )));
            }
        }
        if let Some(c) = self.characteristic_length {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::config(format!(
                    "tool.characteristic_length: must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Serial prismatic axis stacked orthogonally under the planar mechanism
/// (hybrid three-axis machine). Its transmission is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedAxis {
    pub axis: Vec3,
    pub rho_min: f64,
    pub rho_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismGeometry {
    pub variant: Variant,
    pub translation_legs: [LegGeometry; 2],
    pub orientation_legs: Vec<LegGeometry>,
    pub tool: Option<ToolBody>,
    /// Constant vectors d_i from P to the platform attachment B_i.
    pub platform_offsets: [Vec3; 2],
    pub stacked_z: Option<StackedAxis>,
}

impl MechanismGeometry {
    /// Builds a validated geometry. Structural violations are errors; soft
    /// design rules are reported by [`MechanismGeometry::warnings`].
    pub fn new(
        variant: Variant,
        translation_legs: [LegGeometry; 2],
        orientation_legs: Vec<LegGeometry>,
        tool: Option<ToolBody>,
        platform_offsets: [Vec3; 2],
        stacked_z: Option<StackedAxis>,
    ) -> Result<Self> {
        let geom = MechanismGeometry {
            variant,
            translation_legs,
            orientation_legs,
            tool,
            platform_offsets,
            stacked_z,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, leg) in self.translation_legs.iter().enumerate() {
            leg.validate(&format!("translation_legs[{i}]"))?;
            if leg.rail_axis.z.abs() > UNIT_TOL {
                return Err(Error::config(format!(
                    "translation_legs[{i}].rail_axis: must lie in the z = 0 plane"
                )));
            }
        }
        let expected = self.variant.orientation_legs();
        if self.orientation_legs.len() != expected {
            return Err(Error::config(format!(
                "orientation_legs: variant {} needs {expected} legs, got {}",
                self.variant,
                self.orientation_legs.len()
            )));
        }
        for (k, leg) in self.orientation_legs.iter().enumerate() {
            leg.validate(&format!("orientation_legs[{k}]"))?;
        }
        match (&self.tool, expected) {
            (None, 0) => {}
            (Some(tool), n) if n > 0 => tool.validate(n)?,
            (None, _) => return Err(Error::config("tool: required for spatial variants")),
            (Some(_), _) => {
                return Err(Error::config("tool: not allowed for the planar variant"))
            }
        }
        for (i, d) in self.platform_offsets.iter().enumerate() {
            if !vec_finite(d) {
                return Err(Error::config(format!("platform_offsets[{i}]: non-finite")));
            }
        }
        if let Some(z) = &self.stacked_z {
            check_unit(&z.axis, "stacked_z.axis")?;
            if !(z.rho_min < z.rho_max) {
                return Err(Error::config("stacked_z: rho_min must be below rho_max"));
            }
        }
        Ok(())
    }

    /// Non-fatal design remarks (orientation rails not orthogonal to the
    /// translation rails, translation rails not orthogonal to each other).
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let [l1, l2] = &self.translation_legs;
        let e12 = l1.rail_axis.dot(&l2.rail_axis);
        if e12.abs() > UNIT_TOL {
            out.push(format!(
                "translation rails are not orthogonal (e1.e2 = {e12:.9}); no isotropic configuration exists"
            ));
        }
        for (k, leg) in self.orientation_legs.iter().enumerate() {
            for (i, t) in self.translation_legs.iter().enumerate() {
                let c = leg.rail_axis.dot(&t.rail_axis);
                if c.abs() > UNIT_TOL {
                    out.push(format!(
                        "orientation leg {} rail is not orthogonal to translation rail {} (dot = {c:.9})",
                        k + 3,
                        i + 1
                    ));
                }
            }
        }
        out
    }

    pub fn leg_count(&self) -> usize {
        2 + self.orientation_legs.len()
    }

    /// Leg by zero-based index: 0, 1 translation; 2, 3 orientation.
    pub fn leg(&self, index: usize) -> &LegGeometry {
        if index < 2 {
            &self.translation_legs[index]
        } else {
            &self.orientation_legs[index - 2]
        }
    }

    pub fn legs(&self) -> impl Iterator<Item = &LegGeometry> {
        self.translation_legs.iter().chain(self.orientation_legs.iter())
    }

    /// Checks that pose and joints carry exactly the coordinates this
    /// variant uses.
    pub fn check_pose(&self, pose: &Pose) -> Result<()> {
        let (need_beta, need_gamma) = match self.variant {
            Variant::Planar2T => (false, false),
            Variant::Spatial2T1R => (true, false),
            Variant::Spatial2T2R => (true, true),
        };
        if pose.beta.is_some() != need_beta || pose.gamma.is_some() != need_gamma {
            return Err(Error::config(format!(
                "pose coordinates do not match variant {}",
                self.variant
            )));
        }
        if pose.z.is_some() && self.stacked_z.is_none() {
            return Err(Error::config("pose has z but no stacked axis is configured"));
        }
        if !pose.task_vector().iter().all(|v| v.is_finite()) {
            return Err(Error::config("pose has non-finite coordinates"));
        }
        Ok(())
    }

    pub fn check_joints(&self, joints: &JointVector) -> Result<()> {
        if joints.rho.len() != self.leg_count() {
            return Err(Error::config(format!(
                "joint vector has {} entries, variant {} needs {}",
                joints.rho.len(),
                self.variant,
                self.leg_count()
            )));
        }
        if joints.stacked.is_some() && self.stacked_z.is_none() {
            return Err(Error::config(
                "joint vector has a stacked entry but no stacked axis is configured",
            ));
        }
        if !joints.rho.iter().all(|r| r.is_finite()) {
            return Err(Error::config("joint vector has non-finite entries"));
        }
        Ok(())
    }

    /// Platform/tool attachment B_i for a leg, given the tool rotation.
    pub(crate) fn attachment(&self, index: usize, p: &Vec3, rot: &nalgebra::Matrix3<f64>) -> Vec3 {
        if index < 2 {
            p + self.platform_offsets[index]
        } else {
            let tool = self.tool.as_ref().expect("validated spatial geometry has a tool");
            p + rot * tool.anchor_offsets[index - 2]
        }
    }

    pub(crate) fn rotation_of(&self, pose: &Pose) -> nalgebra::Matrix3<f64> {
        match &self.tool {
            Some(tool) => tool_rotation(pose.beta.unwrap_or(0.0), pose.gamma, tool),
            None => nalgebra::Matrix3::identity(),
        }
    }
}

/// Task-space coordinates of the tool center point and tool orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub z: Option<f64>,
}

impl Pose {
    pub fn planar(x: f64, y: f64) -> Self {
        Pose {
            x,
            y,
            beta: None,
            gamma: None,
            z: None,
        }
    }

    pub fn with_beta(x: f64, y: f64, beta: f64) -> Self {
        Pose {
            beta: Some(normalize_angle(beta)),
            ..Pose::planar(x, y)
        }
    }

    pub fn with_beta_gamma(x: f64, y: f64, beta: f64, gamma: f64) -> Self {
        Pose {
            beta: Some(normalize_angle(beta)),
            gamma: Some(normalize_angle(gamma)),
            ..Pose::planar(x, y)
        }
    }

    /// Builds a pose from task coordinates (x, y[, beta[, gamma]]).
    pub fn from_task(variant: Variant, t: &[f64]) -> Result<Self> {
        if t.len() != variant.task_dim() {
            return Err(Error::config(format!(
                "variant {variant} needs {} task coordinates, got {}",
                variant.task_dim(),
                t.len()
            )));
        }
        Ok(match variant {
            Variant::Planar2T => Pose::planar(t[0], t[1]),
            Variant::Spatial2T1R => Pose::with_beta(t[0], t[1], t[2]),
            Variant::Spatial2T2R => Pose::with_beta_gamma(t[0], t[1], t[2], t[3]),
        })
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z = Some(z);
        self
    }

    /// (x, y[, beta[, gamma]]); the stacked z coordinate is not included.
    pub fn task_vector(&self) -> Vec<f64> {
        let mut t = vec![self.x, self.y];
        t.extend(self.beta);
        t.extend(self.gamma);
        t
    }

    /// P embedded at z = 0.
    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, 0.0)
    }

    /// Largest coordinate difference, angles compared modulo 2 pi.
    pub fn distance(&self, other: &Pose) -> f64 {
        let mut d = (self.x - other.x).abs().max((self.y - other.y).abs());
        for (a, b) in [(self.beta, other.beta), (self.gamma, other.gamma)] {
            match (a, b) {
                (Some(a), Some(b)) => d = d.max(angle_diff(a, b).abs()),
                (None, None) => {}
                _ => return f64::INFINITY,
            }
        }
        match (self.z, other.z) {
            (Some(a), Some(b)) => d.max((a - b).abs()),
            (None, None) => d,
            _ => f64::INFINITY,
        }
    }
}

/// Actuated prismatic coordinates, one per leg, plus the stacked axis when
/// it is in use.
#[derive(Debug, Clone, PartialEq)]
pub struct JointVector {
    pub rho: Vec<f64>,
    pub stacked: Option<f64>,
}

impl JointVector {
    pub fn new(rho: Vec<f64>) -> Self {
        JointVector { rho, stacked: None }
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(rho: Vec<f64>) -> Self {
        JointVector::new(rho)
    }
}

/// Passive joint angles recovered from the rod directions.
///
/// Translation legs: `theta` is the angle of b_i - a_i from +x in the plane.
/// Orientation legs: `(theta, alpha)` are the elevation above the z = 0 plane
/// and the azimuth about z of the rod direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PassiveAngles {
    pub translation: [f64; 2],
    pub orientation: Vec<(f64, f64)>,
}

impl PassiveAngles {
    /// Unit rod direction rebuilt from the angles of leg `index`.
    pub fn rod_direction(&self, index: usize) -> Vec3 {
        if index < 2 {
            let t = self.translation[index];
            Vec3::new(t.cos(), t.sin(), 0.0)
        } else {
            let (theta, alpha) = self.orientation[index - 2];
            Vec3::new(
                theta.cos() * alpha.cos(),
                theta.cos() * alpha.sin(),
                theta.sin(),
            )
        }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Signed difference a - b wrapped into (-pi, pi].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// Foot and attachment points (a_i, b_i) for every leg.
pub fn attachment_points(
    geom: &MechanismGeometry,
    pose: &Pose,
    joints: &JointVector,
) -> Result<Vec<(Vec3, Vec3)>> {
    geom.check_pose(pose)?;
    geom.check_joints(joints)?;
    Ok(attachment_points_unchecked(geom, pose, &joints.rho))
}

pub(crate) fn attachment_points_unchecked(
    geom: &MechanismGeometry,
    pose: &Pose,
    rho: &[f64],
) -> Vec<(Vec3, Vec3)> {
    let p = pose.position();
    let rot = geom.rotation_of(pose);
    geom.legs()
        .zip(rho)
        .enumerate()
        .map(|(i, (leg, &r))| (leg.foot(r), geom.attachment(i, &p, &rot)))
        .collect()
}

/// ||b_i - a_i||^2 - L_i^2 for every leg. All zero iff the pair is a valid
/// assembly.
pub fn closure_residual(
    geom: &MechanismGeometry,
    pose: &Pose,
    joints: &JointVector,
) -> Result<Vec<f64>> {
    let points = attachment_points(geom, pose, joints)?;
    Ok(points
        .iter()
        .zip(geom.legs())
        .map(|((a, b), leg)| (b - a).norm_squared() - leg.leg_length * leg.leg_length)
        .collect())
}

pub fn residual_norm(residual: &[f64]) -> f64 {
    residual.iter().map(|r| r * r).sum::<f64>().sqrt()
}

pub fn passive_angles(
    geom: &MechanismGeometry,
    pose: &Pose,
    joints: &JointVector,
) -> Result<PassiveAngles> {
    let points = attachment_points(geom, pose, joints)?;
    let mut translation = [0.0; 2];
    let mut orientation = Vec::new();
    for (i, (a, b)) in points.iter().enumerate() {
        let rod = b - a;
        if i < 2 {
            translation[i] = rod.y.atan2(rod.x);
        } else {
            let elevation = rod.z.atan2(rod.x.hypot(rod.y));
            let azimuth = rod.y.atan2(rod.x);
            orientation.push((elevation, azimuth));
        }
    }
    Ok(PassiveAngles {
        translation,
        orientation,
    })
}

fn check_unit(v: &Vec3, path: &str) -> Result<()> {
    let n = v.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::config(format!(
            "{path}: must have unit norm, got |v| = {n}"
        )));
    }
    Ok(())
}

fn vec_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}
