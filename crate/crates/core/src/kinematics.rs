//! Inverse and forward kinematics of the three variants.
//!
//! Every leg obeys ||b_i - a_i0 - rho_i e_i|| = L_i. The inverse problem is a
//! quadratic per leg; the forward problem is decoupled: the two translation
//! legs fix P (intersection of two circles), then the orientation legs fix
//! the tool angles.

use nalgebra::{Matrix2, Matrix3, Rotation3, Unit, Vector2};

use crate::error::{Error, Result};
use crate::jacobian::Tolerances;
use crate::model::{
    angle_diff, closure_residual, normalize_angle, passive_angles, residual_norm,
    JointVector, MechanismGeometry, PassiveAngles, Pose, ToolBody, Variant, Vec3,
};

/// Seed grid per angle for the 2T2R orientation solver.
pub const NEWTON_SEED_GRID: usize = 33;
pub const NEWTON_MAX_ITER: usize = 50;
/// Convergence threshold on the Euclidean norm of the two closure residuals.
pub const NEWTON_TOL: f64 = 1e-10;
/// Roots closer than this (largest wrapped angle difference) are merged.
pub const ROOT_DEDUP_TOL: f64 = 1e-6;

const MAX_HALVINGS: usize = 40;
const POLISH_STEPS: usize = 4;
// A seed whose residual has not halved over this many steps is abandoned.
// Largest angle change per Newton step.
const MAX_STEP: f64 = 1.0;
const STALL_WINDOW: usize = 8;
const STALL_RATIO: f64 = 0.5;
const MIN_SEARCH_LAMBDA: f64 = 1.0 / 8.0;
const STALL_FLOOR: f64 = 1e-6;
// Full Newton steps this close to a known root stay in its basin.
const CAPTURE_RESIDUAL: f64 = 1e-5;
const CAPTURE_RADIUS: f64 = 1e-4;

/// Root selector of a quadratic or trigonometric closure equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    Minus,
    Plus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn both() -> [Branch; 2] {
        [Branch::Plus, Branch::Minus]
    }

    /// Accepts `+`, `-`, `+1`, `-1`, `1`.
    pub fn parse(s: &str) -> Result<Branch> {
        match s.trim() {
            "+" | "+1" | "1" | "plus" => Ok(Branch::Plus),
            "-" | "-1" | "minus" => Ok(Branch::Minus),
            other => Err(Error::config(format!(
                "branch selector must be +1 or -1, got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Plus => "+1",
            Branch::Minus => "-1",
        })
    }
}

/// One inverse-kinematics branch per leg.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorkingMode(pub Vec<Branch>);

impl WorkingMode {
    pub fn uniform(legs: usize, branch: Branch) -> Self {
        WorkingMode(vec![branch; legs])
    }

    /// All 2^legs modes, `Minus` first on every leg.
    pub fn all(legs: usize) -> Vec<WorkingMode> {
        (0..1usize << legs)
            .map(|bits| {
                WorkingMode(
                    (0..legs)
                        .map(|i| {
                            if bits >> (legs - 1 - i) & 1 == 1 {
                                Branch::Plus
                            } else {
                                Branch::Minus
                            }
                        })
                        .collect(),
                )
            })
            .collect()
    }

    /// Comma separated signs, e.g. `-1,-1,+1`.
    pub fn parse(s: &str) -> Result<Self> {
        s.split(',').map(Branch::parse).collect::<Result<Vec<_>>>().map(WorkingMode)
    }
}

impl std::fmt::Display for WorkingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|b| b.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub joints: JointVector,
    /// One-based indices of legs whose rod is within the serial tolerance of
    /// being perpendicular to its rail.
    pub near_serial: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssemblySolution {
    pub pose: Pose,
    pub passive: PassiveAngles,
    pub residual_norm: f64,
    pub assembly: Branch,
    /// Trigonometric root used for the 2T1R tool angle.
    pub orientation_branch: Option<Branch>,
    /// The two planar assembly branches coincide here (tangent circles):
    /// the configuration is parallel-singular.
    pub branches_merged: bool,
}

/// Selects forward-kinematics branches. `orientation` applies to the 2T1R
/// variant only; `None` returns every orientation root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblySelector {
    pub planar: Branch,
    pub orientation: Option<Branch>,
}

impl AssemblySelector {
    pub fn planar(planar: Branch) -> Self {
        AssemblySelector {
            planar,
            orientation: None,
        }
    }
}

fn axis_rotation(axis: &Vec3, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Unit::new_unchecked(*axis), angle).into_inner()
}

/// Tool rotation: Rot(j, beta) for 2T1R, Rot(j, beta) Rot(i, gamma) for 2T2R.
/// The first axis is platform-fixed, the second is carried by the tool, as
/// in a universal joint.
pub fn tool_rotation(beta: f64, gamma: Option<f64>, tool: &ToolBody) -> Matrix3<f64> {
    let rb = axis_rotation(&tool.beta_axis, beta);
    match gamma {
        Some(g) => rb * axis_rotation(&tool.gamma_axis, g),
        None => rb,
    }
}

/// Second rotation axis after the first rotation, Rot(j, beta) i.
pub fn carried_gamma_axis(beta: f64, tool: &ToolBody) -> Vec3 {
    axis_rotation(&tool.beta_axis, beta) * tool.gamma_axis
}

pub fn inverse_kinematics(
    geom: &MechanismGeometry,
    pose: &Pose,
    mode: &WorkingMode,
) -> Result<IkSolution> {
    inverse_kinematics_with(geom, pose, mode, &Tolerances::default())
}

pub fn inverse_kinematics_with(
    geom: &MechanismGeometry,
    pose: &Pose,
    mode: &WorkingMode,
    tol: &Tolerances,
) -> Result<IkSolution> {
    geom.check_pose(pose)?;
    if mode.0.len() != geom.leg_count() {
        return Err(Error::config(format!(
            "working mode has {} entries, variant {} needs {}",
            mode.0.len(),
            geom.variant,
            geom.leg_count()
        )));
    }
    let p = pose.position();
    let rot = geom.rotation_of(pose);

    // Reachability of every leg first, joint limits second, so that the
    // reported failure does not depend on the working mode.
    let mut roots = Vec::with_capacity(geom.leg_count());
    for (i, leg) in geom.legs().enumerate() {
        let b = geom.attachment(i, &p, &rot);
        let w = b - leg.rail_origin;
        let along = leg.rail_axis.dot(&w);
        let l2 = leg.leg_length * leg.leg_length;
        let mut disc = l2 - w.norm_squared() + along * along;
        if disc < 0.0 {
            let roundoff = 64.0 * f64::EPSILON * (l2 + w.norm_squared());
            if disc < -roundoff {
                let gap = (w.norm_squared() - along * along).sqrt() - leg.leg_length;
                return Err(Error::Unreachable {
                    leg: i + 1,
                    detail: format!("attachment is {gap:.6e} m beyond the rod length"),
                });
            }
            disc = 0.0;
        }
        roots.push((along, disc.sqrt()));
    }

    let mut rho = Vec::with_capacity(roots.len());
    let mut near_serial = Vec::new();
    for (i, ((along, root), branch)) in roots.into_iter().zip(&mode.0).enumerate() {
        let leg = geom.leg(i);
        let r = along + branch.sign() * root;
        if !leg.within_limits(r) {
            return Err(Error::JointLimit {
                leg: i + 1,
                rho: r,
                min: leg.rho_min,
                max: leg.rho_max,
            });
        }
        if root / leg.leg_length < tol.serial {
            near_serial.push(i + 1);
        }
        rho.push(r);
    }

    let stacked = match pose.z {
        Some(z) => Some(stacked_z_apply(geom, pose, z)?.z.expect("z was set")),
        None => None,
    };
    Ok(IkSolution {
        joints: JointVector { rho, stacked },
        near_serial,
    })
}

/// Applies the stacked serial axis: z = rho_z.
pub fn stacked_z_apply(geom: &MechanismGeometry, pose: &Pose, rho_z: f64) -> Result<Pose> {
    let axis = geom
        .stacked_z
        .as_ref()
        .ok_or_else(|| Error::config("no stacked axis configured"))?;
    if !(rho_z >= axis.rho_min && rho_z <= axis.rho_max) {
        return Err(Error::JointLimit {
            leg: geom.leg_count() + 1,
            rho: rho_z,
            min: axis.rho_min,
            max: axis.rho_max,
        });
    }
    Ok(Pose {
        z: Some(rho_z),
        ..*pose
    })
}

fn check_joint_limits(geom: &MechanismGeometry, joints: &JointVector) -> Result<()> {
    geom.check_joints(joints)?;
    for (i, (leg, &r)) in geom.legs().zip(&joints.rho).enumerate() {
        if !leg.within_limits(r) {
            return Err(Error::JointLimit {
                leg: i + 1,
                rho: r,
                min: leg.rho_min,
                max: leg.rho_max,
            });
        }
    }
    Ok(())
}

struct PlanarPoint {
    x: f64,
    y: f64,
    merged: bool,
}

/// Intersection of the circles traced by P around each translation foot.
fn planar_point(geom: &MechanismGeometry, rho: &[f64], branch: Branch) -> Result<PlanarPoint> {
    let mut centers = [Vector2::zeros(); 2];
    let mut radii = [0.0; 2];
    for i in 0..2 {
        let leg = &geom.translation_legs[i];
        let c = leg.foot(rho[i]) - geom.platform_offsets[i];
        let r2 = leg.leg_length * leg.leg_length - c.z * c.z;
        if r2 < 0.0 {
            return Err(Error::NoAssembly(format!(
                "leg {} foot is farther than its rod length from the platform plane",
                i + 1
            )));
        }
        centers[i] = Vector2::new(c.x, c.y);
        radii[i] = r2.sqrt();
    }
    let [r1, r2] = radii;
    let scale = r1.max(r2).max(1.0);
    let delta = centers[1] - centers[0];
    let d = delta.norm();
    let tol = 1e-12 * scale;
    if d < tol {
        if (r1 - r2).abs() < tol {
            return Err(Error::AssemblyIndeterminate(
                "the two leg circles coincide; P can slide along them".into(),
            ));
        }
        return Err(Error::NoAssembly("concentric leg circles".into()));
    }
    if d > r1 + r2 + tol {
        return Err(Error::NoAssembly("leg circles are disjoint".into()));
    }
    if d < (r1 - r2).abs() - tol {
        return Err(Error::NoAssembly("one leg circle lies inside the other".into()));
    }
    let along = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let h = (r1 * r1 - along * along).max(0.0).sqrt();
    let u = delta / d;
    let perp = Vector2::new(-u.y, u.x);
    let p = centers[0] + u * along + perp * (branch.sign() * h);
    Ok(PlanarPoint {
        x: p.x,
        y: p.y,
        merged: h < 1e-8 * scale,
    })
}

fn finish(
    geom: &MechanismGeometry,
    joints: &JointVector,
    mut pose: Pose,
    assembly: Branch,
    orientation_branch: Option<Branch>,
    merged: bool,
) -> Result<AssemblySolution> {
    if let Some(z) = joints.stacked {
        pose = stacked_z_apply(geom, &pose, z)?;
    }
    let residual = closure_residual(geom, &pose, joints)?;
    Ok(AssemblySolution {
        passive: passive_angles(geom, &pose, joints)?,
        residual_norm: residual_norm(&residual),
        pose,
        assembly,
        orientation_branch,
        branches_merged: merged,
    })
}

/// Planar stage: P from legs 1 and 2.
///
/// For the planar variant this is the complete forward kinematics. For the
/// spatial variants only the first two joints are used and the returned
/// solution describes the translation sub-chain.
pub fn forward_kinematics_planar(
    geom: &MechanismGeometry,
    joints: &JointVector,
    assembly: Branch,
) -> Result<AssemblySolution> {
    check_joint_limits(geom, joints)?;
    let pt = planar_point(geom, &joints.rho, assembly)?;
    let sub = MechanismGeometry {
        variant: Variant::Planar2T,
        orientation_legs: vec![],
        tool: None,
        ..geom.clone()
    };
    let sub_joints = JointVector {
        rho: joints.rho[..2].to_vec(),
        stacked: joints.stacked,
    };
    finish(
        &sub,
        &sub_joints,
        Pose::planar(pt.x, pt.y),
        assembly,
        None,
        pt.merged,
    )
}

/// Full forward kinematics. Returns every orientation root for the
/// selected planar branch, sorted by task coordinates.
pub fn forward_kinematics(
    geom: &MechanismGeometry,
    joints: &JointVector,
    selector: &AssemblySelector,
) -> Result<Vec<AssemblySolution>> {
    check_joint_limits(geom, joints)?;
    let pt = planar_point(geom, &joints.rho, selector.planar)?;
    let branch = selector.planar;
    match geom.variant {
        Variant::Planar2T => Ok(vec![finish(
            geom,
            joints,
            Pose::planar(pt.x, pt.y),
            branch,
            None,
            pt.merged,
        )?]),
        Variant::Spatial2T1R => {
            let roots = beta_roots(geom, &joints.rho, pt.x, pt.y)?;
            roots
                .into_iter()
                .filter(|(b, _)| selector.orientation.is_none_or(|s| s == *b))
                .map(|(b, beta)| {
                    finish(
                        geom,
                        joints,
                        Pose::with_beta(pt.x, pt.y, beta),
                        branch,
                        Some(b),
                        pt.merged,
                    )
                })
                .collect()
        }
        Variant::Spatial2T2R => {
            let roots = orientation_roots_2t2r(geom, &joints.rho, pt.x, pt.y)?;
            roots
                .into_iter()
                .map(|(beta, gamma)| {
                    finish(
                        geom,
                        joints,
                        Pose::with_beta_gamma(pt.x, pt.y, beta, gamma),
                        branch,
                        None,
                        pt.merged,
                    )
                })
                .collect()
        }
    }
}

/// Forward kinematics on the branch closest to a reference pose: the
/// planar branch whose P is nearest, then the orientation root nearest to
/// the reference angles (2T2R: Newton seeded at the reference first).
pub fn forward_kinematics_near(
    geom: &MechanismGeometry,
    joints: &JointVector,
    reference: &Pose,
) -> Result<AssemblySolution> {
    check_joint_limits(geom, joints)?;
    let mut best: Option<(f64, Branch, PlanarPoint)> = None;
    let mut first_err = None;
    for b in Branch::both() {
        match planar_point(geom, &joints.rho, b) {
            Ok(pt) => {
                let d = (pt.x - reference.x).hypot(pt.y - reference.y);
                if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                    best = Some((d, b, pt));
                }
            }
            Err(e) => first_err = first_err.or(Some(e)),
        }
    }
    let (_, branch, pt) = match best {
        Some(b) => b,
        None => return Err(first_err.expect("an error was recorded")),
    };
    let pose = match geom.variant {
        Variant::Planar2T => Pose::planar(pt.x, pt.y),
        Variant::Spatial2T1R => {
            let target = reference.beta.unwrap_or(0.0);
            let roots = beta_roots(geom, &joints.rho, pt.x, pt.y)?;
            let (ob, beta) = roots
                .into_iter()
                .min_by(|a, b| {
                    angle_diff(a.1, target)
                        .abs()
                        .total_cmp(&angle_diff(b.1, target).abs())
                })
                .expect("beta_roots returns at least one root");
            return finish(
                geom,
                joints,
                Pose::with_beta(pt.x, pt.y, beta),
                branch,
                Some(ob),
                pt.merged,
            );
        }
        Variant::Spatial2T2R => {
            let seed = (reference.beta.unwrap_or(0.0), reference.gamma.unwrap_or(0.0));
            let problem = OrientationProblem::new(geom, &joints.rho, pt.x, pt.y);
            let (beta, gamma) = match problem.newton(seed) {
                Some(root) => root,
                None => {
                    let roots = orientation_roots_2t2r(geom, &joints.rho, pt.x, pt.y)?;
                    roots
                        .into_iter()
                        .min_by(|a, b| {
                            angular_distance(*a, seed).total_cmp(&angular_distance(*b, seed))
                        })
                        .expect("at least one root")
                }
            };
            Pose::with_beta_gamma(pt.x, pt.y, beta, gamma)
        }
    };
    finish(geom, joints, pose, branch, None, pt.merged)
}

/// Closed-form roots of ||p + Rot(j, beta) r - a_3|| = L_3, tagged with the
/// sign of the half-angle term.
fn beta_roots(geom: &MechanismGeometry, rho: &[f64], x: f64, y: f64) -> Result<Vec<(Branch, f64)>> {
    let tool = geom.tool.as_ref().expect("spatial geometry has a tool");
    let leg = &geom.orientation_legs[0];
    let r = tool.anchor_offsets[0];
    let j = tool.beta_axis;
    let q = Vec3::new(x, y, 0.0) - leg.foot(rho[2]);
    let jr = j.dot(&r);
    let jq = j.dot(&q);
    // P cos(beta) + Q sin(beta) = S
    let pc = q.dot(&r) - jr * jq;
    let qs = q.dot(&j.cross(&r));
    let s = 0.5 * (leg.leg_length * leg.leg_length - q.norm_squared() - r.norm_squared()) - jr * jq;
    let m = pc.hypot(qs);
    let scale = leg.leg_length * r.norm() + q.norm_squared() + r.norm_squared();
    if m < 1e-14 * scale {
        if s.abs() < 1e-12 * scale {
            return Err(Error::AssemblyIndeterminate(
                "tool angle does not affect leg 3 closure".into(),
            ));
        }
        return Err(Error::NoAssembly("leg 3 cannot close at any tool angle".into()));
    }
    if s.abs() > m * (1.0 + 1e-12) {
        return Err(Error::NoAssembly("leg 3 cannot close at any tool angle".into()));
    }
    let phase = qs.atan2(pc);
    let half = (m * m - s * s).max(0.0).sqrt().atan2(s);
    if half < ROOT_DEDUP_TOL {
        return Ok(vec![(Branch::Plus, normalize_angle(phase + half))]);
    }
    Ok(vec![
        (Branch::Plus, normalize_angle(phase + half)),
        (Branch::Minus, normalize_angle(phase - half)),
    ])
}

fn angular_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    angle_diff(a.0, b.0).abs().max(angle_diff(a.1, b.1).abs())
}

/// Closure equations of the two orientation legs as functions of
/// (beta, gamma), with P and the foot points fixed.
pub(crate) struct OrientationProblem<'a> {
    tool: &'a ToolBody,
    p: Vec3,
    feet: [Vec3; 2],
    lengths: [f64; 2],
    // f_k = c_k + 2 sum_ab m_k[a][b] phi_a(beta) phi_b(gamma), phi = (1, cos, sin)
    c: [f64; 2],
    m: [[[f64; 3]; 3]; 2],
}

/// Decomposition v(t) = v0 + v1 cos t + v2 sin t of a vector rotated about `axis`.
fn rotation_terms(axis: &Vec3, v: &Vec3, sign: f64) -> [Vec3; 3] {
    let along = axis * axis.dot(v);
    [along, v - along, axis.cross(v) * sign]
}

impl<'a> OrientationProblem<'a> {
    pub(crate) fn new(geom: &'a MechanismGeometry, rho: &[f64], x: f64, y: f64) -> Self {
        let legs = &geom.orientation_legs;
        let tool = geom.tool.as_ref().expect("spatial geometry has a tool");
        let p = Vec3::new(x, y, 0.0);
        let feet = [legs[0].foot(rho[2]), legs[1].foot(rho[3])];
        let lengths = [legs[0].leg_length, legs[1].leg_length];
        let mut c = [0.0; 2];
        let mut m = [[[0.0; 3]; 3]; 2];
        for k in 0..2 {
            let u = p - feet[k];
            let r = tool.anchor_offsets[k];
            c[k] = u.norm_squared() + r.norm_squared() - lengths[k] * lengths[k];
            // u . Rot(j, b) Rot(i, g) r = (Rot(j, -b) u) . (Rot(i, g) r)
            let v = rotation_terms(&tool.beta_axis, &u, -1.0);
            let w = rotation_terms(&tool.gamma_axis, &r, 1.0);
            for a in 0..3 {
                for b in 0..3 {
                    m[k][a][b] = v[a].dot(&w[b]);
                }
            }
        }
        OrientationProblem { tool, p, feet, lengths, c, m }
    }

    pub(crate) fn residual(&self, beta: f64, gamma: f64) -> Vector2<f64> {
        let rot = tool_rotation(beta, Some(gamma), self.tool);
        Vector2::from_fn(|k, _| {
            let b = self.p + rot * self.tool.anchor_offsets[k];
            (b - self.feet[k]).norm_squared() - self.lengths[k] * self.lengths[k]
        })
    }

    fn residual_and_jacobian(&self, beta: f64, gamma: f64) -> (Vector2<f64>, Matrix2<f64>) {
        let t = AngleTerms::new(beta, gamma);
        (self.fast_residual(&t), self.jacobian(&t))
    }

    fn fast_residual(&self, t: &AngleTerms) -> Vector2<f64> {
        Vector2::from_fn(|k, _| {
            let m = &self.m[k];
            let mut val = 0.0;
            for a in 0..3 {
                val += t.pb[a] * (m[a][0] + m[a][1] * t.pg[1] + m[a][2] * t.pg[2]);
            }
            self.c[k] + 2.0 * val
        })
    }

    fn jacobian(&self, t: &AngleTerms) -> Matrix2<f64> {
        let mut jac = Matrix2::zeros();
        for k in 0..2 {
            let m = &self.m[k];
            let (mut d_beta, mut d_gamma) = (0.0, 0.0);
            for a in 0..3 {
                let row_g = m[a][0] + m[a][1] * t.pg[1] + m[a][2] * t.pg[2];
                let row_dg = m[a][1] * t.dg[1] + m[a][2] * t.dg[2];
                d_beta += t.db[a] * row_g;
                d_gamma += t.pb[a] * row_dg;
            }
            jac[(k, 0)] = 2.0 * d_beta;
            jac[(k, 1)] = 2.0 * d_gamma;
        }
        jac
    }

    /// Damped Newton from one seed. Returns the wrapped root on convergence.
    pub(crate) fn newton(&self, seed: (f64, f64)) -> Option<(f64, f64)> {
        match self.newton_from(seed, &[]) {
            SeedOutcome::Root(r) => Some(r),
            _ => None,
        }
    }

    /// Damped Newton that gives up early on a stalled iterate, or once the
    /// iterate is captured by the basin of a root in `known`.
    fn newton_from(&self, seed: (f64, f64), known: &[(f64, f64)]) -> SeedOutcome {
        let (mut beta, mut gamma) = seed;
        let (mut f, mut jac) = self.residual_and_jacobian(beta, gamma);
        let mut norm = f.norm();
        let mut converged = norm < NEWTON_TOL;
        let mut polish = 0;
        let mut checkpoint = norm;
        for it in 0..NEWTON_MAX_ITER + POLISH_STEPS {
            if converged {
                if polish == POLISH_STEPS || norm == 0.0 {
                    break;
                }
                polish += 1;
            } else if it > 0 && it % STALL_WINDOW == 0 {
                if norm > STALL_RATIO * checkpoint {
                    return SeedOutcome::Failed;
                }
                checkpoint = norm;
            }
            let mut step = match jac.try_inverse() {
                Some(inv) => inv * f,
                None => break,
            };
            let len = step.amax();
            if len > MAX_STEP {
                step *= MAX_STEP / len;
            }
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                if lambda < MIN_SEARCH_LAMBDA && norm > STALL_FLOOR {
                    // Sliding into a local minimum of the residual.
                    return SeedOutcome::Failed;
                }
                let (nb, ng) = (beta - lambda * step[0], gamma - lambda * step[1]);
                let terms = AngleTerms::new(nb, ng);
                let nf = self.fast_residual(&terms);
                let nn = nf.norm();
                if nn < norm {
                    beta = nb;
                    gamma = ng;
                    f = nf;
                    jac = self.jacobian(&terms);
                    norm = nn;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
            converged = converged || norm < NEWTON_TOL;
            if !converged && lambda == 1.0 && norm < CAPTURE_RESIDUAL {
                let here = (beta, gamma);
                if known.iter().any(|r| angular_distance(*r, here) < CAPTURE_RADIUS) {
                    return SeedOutcome::Known;
                }
            }
        }
        if converged {
            SeedOutcome::Root((normalize_angle(beta), normalize_angle(gamma)))
        } else {
            SeedOutcome::Failed
        }
    }
}

/// (1, cos, sin) of both angles and the derivatives of that basis.
struct AngleTerms {
    pb: [f64; 3],
    db: [f64; 3],
    pg: [f64; 3],
    dg: [f64; 3],
}

impl AngleTerms {
    fn new(beta: f64, gamma: f64) -> Self {
        let (sb, cb) = beta.sin_cos();
        let (sg, cg) = gamma.sin_cos();
        AngleTerms {
            pb: [1.0, cb, sb],
            db: [0.0, -sb, cb],
            pg: [1.0, cg, sg],
            dg: [0.0, -sg, cg],
        }
    }
}

enum SeedOutcome {
    Root((f64, f64)),
    Known,
    Failed,
}

/// All (beta, gamma) roots of the 2T2R orientation closure for a fixed P.
fn orientation_roots_2t2r(
    geom: &MechanismGeometry,
    rho: &[f64],
    x: f64,
    y: f64,
) -> Result<Vec<(f64, f64)>> {
    let problem = OrientationProblem::new(geom, rho, x, y);
    let tool = problem.tool;
    for k in 0..2 {
        // b_k lies on the sphere of radius |r_k| around P; it must meet the
        // sphere of radius L_k around the foot.
        let dist = (problem.p - problem.feet[k]).norm();
        let r = tool.anchor_offsets[k].norm();
        let l = problem.lengths[k];
        if l > dist + r + 1e-12 || l < (dist - r).abs() - 1e-12 {
            return Err(Error::NoAssembly(format!(
                "leg {} cannot reach the tool at any orientation",
                k + 3
            )));
        }
    }
    let n = NEWTON_SEED_GRID;
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let seed = |k: usize| -std::f64::consts::PI + step * (k + 1) as f64;
    let mut roots: Vec<(f64, f64)> = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if let SeedOutcome::Root(root) = problem.newton_from((seed(a), seed(b)), &roots) {
                if roots
                    .iter()
                    .all(|r| angular_distance(*r, root) >= ROOT_DEDUP_TOL)
                {
                    roots.push(root);
                }
            }
        }
    }
    if roots.is_empty() {
        return Err(Error::NewtonNoConvergence);
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(roots)
}

/// Residual norm of the 2T2R orientation closure; exposed for brute-force
/// checks of the root finder.
pub fn orientation_residual_norm(
    geom: &MechanismGeometry,
    joints: &JointVector,
    x: f64,
    y: f64,
    beta: f64,
    gamma: f64,
) -> Result<f64> {
    if geom.variant != Variant::Spatial2T2R {
        return Err(Error::config("orientation residual is defined for 2T2R only"));
    }
    geom.check_joints(joints)?;
    Ok(OrientationProblem::new(geom, &joints.rho, x, y)
        .residual(beta, gamma)
        .norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::reference;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rotation_examples() {
        let tool = reference::g2().tool.unwrap();
        assert_eq!(tool_rotation(0.0, Some(0.0), &tool), Matrix3::identity());
        let rr = tool_rotation(FRAC_PI_2, None, &tool) * Vec3::new(0.5, 0.0, 0.0);
        assert!((rr - Vec3::new(0.0, 0.0, -0.5)).norm() < 1e-15);
        let rr = tool_rotation(0.0, Some(FRAC_PI_2), &tool) * Vec3::new(0.0, 0.5, 0.0);
        assert!((rr - Vec3::new(0.0, 0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn ik_examples() {
        let g0 = reference::g0();
        let mm = WorkingMode::uniform(2, Branch::Minus);
        let sol = inverse_kinematics(&g0, &Pose::planar(0.5, 0.2), &mm).unwrap();
        assert!(close(sol.joints.rho[0], 0.5 - 0.96f64.sqrt(), 1e-15));
        assert!(close(sol.joints.rho[1], 0.2 - 0.75f64.sqrt(), 1e-15));
        assert!(close(sol.joints.rho[0], -0.479796, 1e-6));
        assert!(close(sol.joints.rho[1], -0.666025, 1e-6));

        let sol = inverse_kinematics(&g0, &Pose::planar(0.0, 0.0), &mm).unwrap();
        assert_eq!(sol.joints.rho, vec![-1.0, -1.0]);

        let g1 = reference::g1();
        let sol = inverse_kinematics(
            &g1,
            &Pose::with_beta(0.0, 0.0, 0.0),
            &WorkingMode::uniform(3, Branch::Minus),
        )
        .unwrap();
        assert_eq!(sol.joints.rho, vec![-1.0, -1.0, -1.0]);
    }

    #[test]
    fn ik_unreachable_names_leg_two() {
        let g0 = reference::g0();
        for mode in WorkingMode::all(2) {
            match inverse_kinematics(&g0, &Pose::planar(3.0, 0.0), &mode) {
                Err(Error::Unreachable { leg, .. }) => assert_eq!(leg, 2),
                other => panic!("expected unreachable, got {other:?}"),
            }
        }
    }

    #[test]
    fn ik_joint_limit_and_serial_warning() {
        let mut g0 = reference::g0();
        g0.translation_legs[0].rho_max = 1.5;
        let err = inverse_kinematics(
            &g0,
            &Pose::planar(0.8, 0.0),
            &WorkingMode(vec![Branch::Plus, Branch::Minus]),
        );
        assert!(matches!(err, Err(Error::JointLimit { leg: 1, .. })));

        // Rod 1 vertical: perpendicular to its rail.
        let sol = inverse_kinematics(
            &g0,
            &Pose::planar(0.3, 1.0),
            &WorkingMode::uniform(2, Branch::Minus),
        )
        .unwrap();
        assert_eq!(sol.near_serial, vec![1]);
        assert_eq!(sol.joints.rho[0], 0.3);
    }

    #[test]
    fn planar_fk_two_branches() {
        let g0 = reference::g0();
        let joints: JointVector = vec![-1.0, -1.0].into();
        let plus = forward_kinematics_planar(&g0, &joints, Branch::Plus).unwrap();
        let minus = forward_kinematics_planar(&g0, &joints, Branch::Minus).unwrap();
        assert!(plus.pose.distance(&Pose::planar(0.0, 0.0)) < 1e-15);
        assert!(minus.pose.distance(&Pose::planar(-1.0, -1.0)) < 1e-15);
        for sol in [&plus, &minus] {
            assert!(sol.residual_norm < 1e-9);
            assert!(!sol.branches_merged);
            let back = WorkingMode::all(2)
                .iter()
                .filter_map(|m| inverse_kinematics(&g0, &sol.pose, m).ok())
                .any(|ik| {
                    ik.joints
                        .rho
                        .iter()
                        .zip(&joints.rho)
                        // (-1, -1) is serial-singular: rho is sqrt-sensitive there.
                        .all(|(a, b)| close(*a, *b, 1e-7))
                });
            assert!(back);
        }
    }

    #[test]
    fn planar_fk_coincident_circles_is_indeterminate() {
        let g0 = reference::g0();
        let err = forward_kinematics_planar(&g0, &vec![0.0, 0.0].into(), Branch::Plus);
        assert!(matches!(err, Err(Error::AssemblyIndeterminate(_))));
        assert!(err.unwrap_err().to_string().contains("assembly indeterminate"));
    }

    #[test]
    fn planar_fk_disjoint_and_tangent() {
        let g0 = reference::g0();
        let err = forward_kinematics_planar(&g0, &vec![2.0, 2.0].into(), Branch::Plus);
        assert!(matches!(err, Err(Error::NoAssembly(_))));
        // Centers (sqrt 2, 0) and (0, -sqrt 2) are 2 apart: tangent circles.
        let s = 2f64.sqrt();
        let joints: JointVector = vec![s, -s].into();
        let plus = forward_kinematics_planar(&g0, &joints, Branch::Plus).unwrap();
        let minus = forward_kinematics_planar(&g0, &joints, Branch::Minus).unwrap();
        assert!(plus.branches_merged && minus.branches_merged);
        assert!(plus.pose.distance(&minus.pose) < 1e-7);
        assert!(plus.residual_norm < 1e-9);
    }

    #[test]
    fn fk_2t1r_reference_root() {
        let g1 = reference::g1();
        let sols = forward_kinematics(
            &g1,
            &vec![-1.0; 3].into(),
            &AssemblySelector::planar(Branch::Plus),
        )
        .unwrap();
        assert_eq!(sols.len(), 2);
        assert!(sols.iter().any(|s| s.pose.beta.unwrap().abs() < 1e-12));
        for s in &sols {
            assert!(s.residual_norm < 1e-9);
        }
        let only = forward_kinematics(
            &g1,
            &vec![-1.0; 3].into(),
            &AssemblySelector {
                planar: Branch::Plus,
                orientation: Some(sols[0].orientation_branch.unwrap()),
            },
        )
        .unwrap();
        assert_eq!(only.len(), 1);
        assert_eq!(only[0], sols[0]);
    }

    #[test]
    fn fk_2t2r_reference_root() {
        let g2 = reference::g2();
        let joints: JointVector = vec![-1.0; 4].into();
        let sols = forward_kinematics(&g2, &joints, &AssemblySelector::planar(Branch::Plus))
            .unwrap();
        assert!(sols
            .iter()
            .any(|s| s.pose.beta.unwrap().abs() < 1e-9 && s.pose.gamma.unwrap().abs() < 1e-9));
        for s in &sols {
            let r = orientation_residual_norm(
                &g2,
                &joints,
                s.pose.x,
                s.pose.y,
                s.pose.beta.unwrap(),
                s.pose.gamma.unwrap(),
            )
            .unwrap();
            assert!(r < 1e-10);
        }
        // Roots are distinct.
        for (i, a) in sols.iter().enumerate() {
            for b in &sols[i + 1..] {
                assert!(a.pose.distance(&b.pose) >= ROOT_DEDUP_TOL);
            }
        }
    }

    #[test]
    fn fk_near_tracks_reference() {
        let g2 = reference::g2();
        let pose = Pose::with_beta_gamma(0.1, -0.05, 0.2, -0.15);
        let ik = inverse_kinematics(&g2, &pose, &WorkingMode::uniform(4, Branch::Minus)).unwrap();
        let sol = forward_kinematics_near(&g2, &ik.joints, &pose).unwrap();
        assert!(sol.pose.distance(&pose) < 1e-10);
    }

    #[test]
    fn stacked_axis_is_identity_transmission() {
        let mut g = reference::g0();
        g.stacked_z = Some(crate::model::StackedAxis {
            axis: Vec3::z(),
            rho_min: -0.5,
            rho_max: 0.5,
        });
        let p = Pose::planar(0.1, 0.1);
        assert_eq!(stacked_z_apply(&g, &p, 0.0).unwrap().z, Some(0.0));
        assert_eq!(stacked_z_apply(&g, &p, 0.25).unwrap().z, Some(0.25));
        assert!(matches!(
            stacked_z_apply(&g, &p, 0.75),
            Err(Error::JointLimit { leg: 3, .. })
        ));
        assert!(stacked_z_apply(&reference::g0(), &p, 0.0).is_err());

        let ik = inverse_kinematics(&g, &p.with_z(0.25), &WorkingMode::uniform(2, Branch::Minus))
            .unwrap();
        assert_eq!(ik.joints.stacked, Some(0.25));
        let fk = forward_kinematics_near(&g, &ik.joints, &p).unwrap();
        assert_eq!(fk.pose.z, Some(0.25));
    }

    #[test]
    fn working_mode_parsing_and_enumeration() {
        assert_eq!(
            WorkingMode::parse("-1,+1").unwrap(),
            WorkingMode(vec![Branch::Minus, Branch::Plus])
        );
        assert!(WorkingMode::parse("0,1").is_err());
        let all = WorkingMode::all(3);
        assert_eq!(all.len(), 8);
        assert_eq!(all[0], WorkingMode::uniform(3, Branch::Minus));
        assert_eq!(all[7], WorkingMode::uniform(3, Branch::Plus));
    }

    #[test]
    fn wrapped_roots_stay_in_range() {
        let g1 = reference::g1();
        // Tool turned half a revolution: the root must come back as pi.
        let pose = Pose::with_beta(0.0, 0.0, PI);
        let ik = inverse_kinematics(&g1, &pose, &WorkingMode::uniform(3, Branch::Minus)).unwrap();
        let sols =
            forward_kinematics(&g1, &ik.joints, &AssemblySelector::planar(Branch::Plus)).unwrap();
        assert!(sols.iter().any(|s| s.pose.distance(&pose) < 1e-12));
        assert!(sols.iter().all(|s| s.pose.beta.unwrap() > -PI));
    }
}
