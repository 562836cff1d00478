//! Velocity and force amplification factors, condition number and
//! isotropy measures derived from J.

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::jacobian::{build, homogenize, JacobianMode, JacobianPair, Tolerances};
use crate::kinematics::{inverse_kinematics_with, Branch, WorkingMode};
use crate::model::{MechanismGeometry, Pose, Variant, Vec3};
use crate::par::Parallelism;
use crate::workspace::{self, GridAxis, ScanSettings};

/// Singular values below this fraction of the largest one count as zero.
const RANK_TOL: f64 = 1e-14;

/// A nonnegative factor that may be unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    Finite(f64),
    Infinite,
}

impl Factor {
    pub fn is_infinite(self) -> bool {
        matches!(self, Factor::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Factor::Finite(v) => Some(v),
            Factor::Infinite => None,
        }
    }

    /// Numeric value, `f64::INFINITY` for the unbounded case.
    pub fn value(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    fn reciprocal(v: f64, zero: f64) -> Factor {
        if v <= zero {
            Factor::Infinite
        } else {
            Factor::Finite(1.0 / v)
        }
    }
}

impl std::fmt::Display for Factor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Factor::Finite(v) => write!(f, "{v:.9}"),
            Factor::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Factor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Factor::Finite(v) => s.serialize_f64(*v),
            Factor::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Factor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Factor::Finite(v)),
            Raw::Text(t) if t == "inf" => Ok(Factor::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got \"{t}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationProfile {
    /// Velocity amplification factors, descending.
    pub singular_values: Vec<Factor>,
    /// Force amplification factors, reciprocal of the velocity factors
    /// (same order).
    pub force_factors: Vec<Factor>,
    pub condition_number: Factor,
    /// max |J^T J - I|.
    pub isotropy_defect: Factor,
    pub char_len: Option<f64>,
}

impl AmplificationProfile {
    pub fn sigma_max(&self) -> Factor {
        self.singular_values[0]
    }

    pub fn sigma_min(&self) -> Factor {
        *self.singular_values.last().expect("nonempty")
    }

    /// All velocity factors inside [1/psi, psi].
    pub fn within(&self, psi: f64) -> bool {
        self.singular_values
            .iter()
            .all(|s| matches!(s, Factor::Finite(v) if *v >= 1.0 / psi && *v <= psi))
    }
}

/// Singular values, descending. Closed form for 2x2.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = if m.shape() == (2, 2) {
        let m2 = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let v = svd2(&m2);
        vec![v[0], v[1]]
    } else {
        m.clone().svd(false, false).singular_values.iter().copied().collect()
    };
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Singular values of a 2x2 matrix from the half-sum/half-difference form.
fn svd2(m: &Matrix2<f64>) -> Vector2<f64> {
    let e = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let f = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let g = 0.5 * (m[(1, 0)] + m[(0, 1)]);
    let h = 0.5 * (m[(1, 0)] - m[(0, 1)]);
    let q = e.hypot(h);
    let r = f.hypot(g);
    Vector2::new(q + r, (q - r).abs())
}

/// Profile of a matrix assumed to be dimensionally homogeneous.
pub fn profile_of(j: &DMatrix<f64>) -> Result<AmplificationProfile> {
    if !j.is_square() {
        return Err(Error::config(format!(
            "amplification needs a square matrix, got {}x{}",
            j.nrows(),
            j.ncols()
        )));
    }
    if !(2..=5).contains(&j.nrows()) {
        return Err(Error::config(format!(
            "amplification supports 2x2 to 5x5 matrices, got {}x{}",
            j.nrows(),
            j.ncols()
        )));
    }
    let s = singular_values(j);
    let zero = RANK_TOL * s[0];
    let n = j.nrows();
    let jtj = j.transpose() * j;
    let defect = (&jtj - DMatrix::identity(n, n))
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let smin = s[n - 1];
    Ok(AmplificationProfile {
        force_factors: s.iter().map(|&v| Factor::reciprocal(v, zero)).collect(),
        singular_values: s.iter().map(|&v| Factor::Finite(v)).collect(),
        condition_number: if smin > zero {
            Factor::Finite(s[0] / smin)
        } else {
            Factor::Infinite
        },
        isotropy_defect: Factor::Finite(defect),
        char_len: None,
    })
}

/// Amplification factors of a Jacobian pair.
///
/// Angular task rows need a characteristic length, given here or applied
/// earlier with [`homogenize`]. At a parallel singularity J does not exist;
/// the factors are then taken from the inverse map B^-1 A, whose vanishing
/// singular values are unbounded velocity factors (and vanishing force
/// factors).
pub fn amplification(jp: &JacobianPair, char_len: Option<f64>) -> Result<AmplificationProfile> {
    let scaled;
    let jp = match char_len {
        Some(c) if jp.has_rotational_rows() => {
            scaled = homogenize(jp, c)?;
            &scaled
        }
        Some(c) if !(c > 0.0) => {
            return Err(Error::config(format!(
                "characteristic length must be positive, got {c}"
            )))
        }
        _ => jp,
    };
    if !jp.is_homogeneous() {
        return Err(Error::Units(
            "J mixes translational and angular rates; give a characteristic length".into(),
        ));
    }
    let mut profile = match &jp.j {
        Some(j) => profile_of(j)?,
        None => inverse_profile(jp),
    };
    profile.char_len = jp.char_len;
    Ok(profile)
}

fn inverse_profile(jp: &JacobianPair) -> AmplificationProfile {
    let n = jp.dim();
    let b_inv = DMatrix::from_fn(n, n, |r, c| {
        if r == c && jp.b[(r, r)] != 0.0 {
            1.0 / jp.b[(r, r)]
        } else {
            0.0
        }
    });
    let k = b_inv * &jp.a;
    let mut s = singular_values(&k);
    s.reverse(); // ascending inverse values, descending velocity factors
    let zero = RANK_TOL * s.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    AmplificationProfile {
        singular_values: s.iter().map(|&v| Factor::reciprocal(v, zero)).collect(),
        force_factors: s
            .iter()
            .map(|&v| Factor::Finite(if v <= zero { 0.0 } else { v }))
            .collect(),
        condition_number: Factor::Infinite,
        isotropy_defect: Factor::Infinite,
        char_len: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropicConfiguration {
    pub mode: Vec<i8>,
    pub joints: Vec<f64>,
    pub condition: Factor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub e1_dot_e2: f64,
    /// (x, y) where both rods align with their rails.
    pub isotropic_pose: Option<[f64; 2]>,
    /// Working modes reaching the isotropic pose within joint limits.
    pub configurations: Vec<IsotropicConfiguration>,
    pub message: String,
}

/// Looks for the configuration where both translation rods are aligned
/// with their rails. Such a configuration exists only for orthogonal rails.
pub fn isotropy_locus_check(geom: &MechanismGeometry) -> IsotropyReport {
    let sub = geom.planar_subgeometry();
    let [l1, l2] = &sub.translation_legs;
    let e12 = l1.rail_axis.dot(&l2.rail_axis);
    let none = |message: String| IsotropyReport {
        e1_dot_e2: e12,
        isotropic_pose: None,
        configurations: vec![],
        message,
    };
    if e12.abs() >= 1e-12 {
        return none(format!(
            "e1·e2 = {e12:.9}; no isotropic configuration exists"
        ));
    }
    // P on both rail lines, shifted by the platform offsets.
    let c: Vec<Vec3> = (0..2)
        .map(|i| sub.translation_legs[i].rail_origin - sub.platform_offsets[i])
        .collect();
    if c.iter().any(|v| v.z.abs() > 1e-12) {
        return none(format!(
            "e1·e2 = {e12:.3e}, but a rail line is out of the platform plane; no isotropic configuration exists"
        ));
    }
    let (e1, e2) = (l1.rail_axis, l2.rail_axis);
    // c1 + t1 e1 = c2 + t2 e2
    let m = Matrix2::new(e1.x, -e2.x, e1.y, -e2.y);
    let rhs = Vector2::new(c[1].x - c[0].x, c[1].y - c[0].y);
    let t = m.try_inverse().expect("orthogonal rails") * rhs;
    let p = c[0] + e1 * t[0];
    let pose = Pose::planar(p.x, p.y);

    let mut configurations = Vec::new();
    for mode in WorkingMode::all(2) {
        let Ok(ik) = inverse_kinematics_with(&sub, &pose, &mode, &Tolerances::default()) else {
            continue;
        };
        let condition = build(&sub, &pose, &ik.joints, JacobianMode::Consistent, &Tolerances::default())
            .and_then(|jp| amplification(&jp, None))
            .map(|a| a.condition_number)
            .unwrap_or(Factor::Infinite);
        configurations.push(IsotropicConfiguration {
            mode: mode.0.iter().map(|b| b.sign() as i8).collect(),
            joints: ik.joints.rho,
            condition,
        });
    }
    let fmt = |v: f64| format!("{}", round_for_display(v));
    let message = if configurations.is_empty() {
        format!(
            "e1·e2 = 0, isotropic pose ({}, {}) is outside the joint limits",
            fmt(p.x),
            fmt(p.y)
        )
    } else {
        format!("e1·e2 = 0, isotropic pose ({}, {})", fmt(p.x), fmt(p.y))
    };
    IsotropyReport {
        e1_dot_e2: e12,
        isotropic_pose: Some([p.x, p.y]),
        configurations,
        message,
    }
}

fn round_for_display(v: f64) -> f64 {
    let r = (v * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionVerdict {
    pub holds: bool,
    pub psi: f64,
    pub samples: usize,
    /// First sampled pose violating the bound, if any.
    pub first_violation: Option<Vec<f64>>,
}

/// Checks that every sampled pose of `region` has all velocity factors in
/// [1/psi, psi] with no singularity flag. Poses that cannot be reached are
/// an error naming the first one.
pub fn transmission_bounds(
    geom: &MechanismGeometry,
    region: &[GridAxis],
    psi: f64,
    settings: &ScanSettings,
    par: Parallelism,
) -> Result<TransmissionVerdict> {
    if !(psi > 1.0) {
        return Err(Error::config(format!("psi must exceed 1, got {psi}")));
    }
    let map = workspace::scan(geom, region, settings, par)?;
    if let Some(cell) = map.cells.iter().find(|c| !c.reachable) {
        let pose = Pose::from_task(geom.variant, &cell.pose)?;
        let err = inverse_kinematics_with(geom, &pose, &settings.mode, &settings.tol)
            .err()
            .unwrap_or_else(|| Error::EmptyWorkspace("unreachable pose".into()));
        return Err(match err {
            Error::Unreachable { leg, detail } => Error::Unreachable {
                leg,
                detail: format!("region pose {:?}: {detail}", cell.pose),
            },
            other => other,
        });
    }
    let first = map.cells.iter().find(|c| !c.admissible(psi));
    Ok(TransmissionVerdict {
        holds: first.is_none(),
        psi,
        samples: map.cells.len(),
        first_violation: first.map(|c| c.pose.clone()),
    })
}

impl MechanismGeometry {
    /// The translation sub-chain as a planar geometry.
    pub fn planar_subgeometry(&self) -> MechanismGeometry {
        MechanismGeometry {
            variant: Variant::Planar2T,
            orientation_legs: vec![],
            tool: None,
            stacked_z: None,
            ..self.clone()
        }
    }
}

/// Default working mode: every rod pointing along its rail's positive
/// direction from the foot (the isotropic branch of the reference designs).
pub fn default_mode(geom: &MechanismGeometry) -> WorkingMode {
    WorkingMode::uniform(geom.leg_count(), Branch::Minus)
}
