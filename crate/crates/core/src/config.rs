//! JSON geometry files.
//!
//! Vectors are 3-element arrays, keys are lower_snake_case and unknown keys
//! are rejected. Parse errors carry the JSON path of the offending value.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{LegGeometry, MechanismGeometry, StackedAxis, ToolBody, Variant, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantFile {
    #[serde(rename = "planar_2t")]
    Planar2T,
    #[serde(rename = "spatial_2t1r")]
    Spatial2T1R,
    #[serde(rename = "spatial_2t2r")]
    Spatial2T2R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegFile {
    pub rail_origin: [f64; 3],
    pub rail_axis: [f64; 3],
    pub leg_length: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolFile {
    pub anchor_offsets: Vec<[f64; 3]>,
    pub beta_axis: [f64; 3],
    pub gamma_axis: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characteristic_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackedFile {
    pub axis: [f64; 3],
    pub rho_min: f64,
    pub rho_max: f64,
}

/// On-disk form of a [`MechanismGeometry`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub variant: VariantFile,
    pub translation_legs: Vec<LegFile>,
    #[serde(default)]
    pub orientation_legs: Vec<LegFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<ToolFile>,
    #[serde(default = "zero_offsets")]
    pub platform_offsets: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stacked_z: Option<StackedFile>,
}

fn zero_offsets() -> Vec<[f64; 3]> {
    vec![[0.0; 3]; 2]
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl From<&LegFile> for LegGeometry {
    fn from(l: &LegFile) -> Self {
        LegGeometry::new(
            v3(l.rail_origin),
            v3(l.rail_axis),
            l.leg_length,
            (l.rho_min, l.rho_max),
        )
    }
}

impl From<&LegGeometry> for LegFile {
    fn from(l: &LegGeometry) -> Self {
        LegFile {
            rail_origin: arr(&l.rail_origin),
            rail_axis: arr(&l.rail_axis),
            leg_length: l.leg_length,
            rho_min: l.rho_min,
            rho_max: l.rho_max,
        }
    }
}

impl GeometryFile {
    pub fn into_geometry(&self) -> Result<MechanismGeometry> {
        let variant = match self.variant {
            VariantFile::Planar2T => Variant::Planar2T,
            VariantFile::Spatial2T1R => Variant::Spatial2T1R,
            VariantFile::Spatial2T2R => Variant::Spatial2T2R,
        };
        let translation_legs: [LegGeometry; 2] = match self.translation_legs.as_slice() {
            [a, b] => [a.into(), b.into()],
            other => {
                return Err(Error::config(format!(
                    "translation_legs: exactly 2 legs required, got {}",
                    other.len()
                )))
            }
        };
        let platform_offsets = match self.platform_offsets.as_slice() {
            [a, b] => [v3(*a), v3(*b)],
            other => {
                return Err(Error::config(format!(
                    "platform_offsets: exactly 2 vectors required, got {}",
                    other.len()
                )))
            }
        };
        let tool = self.tool.as_ref().map(|t| ToolBody {
            anchor_offsets: t.anchor_offsets.iter().copied().map(v3).collect(),
            beta_axis: v3(t.beta_axis),
            gamma_axis: v3(t.gamma_axis),
            characteristic_length: t.characteristic_length,
        });
        let stacked_z = self.stacked_z.as_ref().map(|s| StackedAxis {
            axis: v3(s.axis),
            rho_min: s.rho_min,
            rho_max: s.rho_max,
        });
        MechanismGeometry::new(
            variant,
            translation_legs,
            self.orientation_legs.iter().map(LegGeometry::from).collect(),
            tool,
            platform_offsets,
            stacked_z,
        )
    }

    pub fn from_geometry(g: &MechanismGeometry) -> Self {
        GeometryFile {
            variant: match g.variant {
                Variant::Planar2T => VariantFile::Planar2T,
                Variant::Spatial2T1R => VariantFile::Spatial2T1R,
                Variant::Spatial2T2R => VariantFile::Spatial2T2R,
            },
            translation_legs: g.translation_legs.iter().map(LegFile::from).collect(),
            orientation_legs: g.orientation_legs.iter().map(LegFile::from).collect(),
            tool: g.tool.as_ref().map(|t| ToolFile {
                anchor_offsets: t.anchor_offsets.iter().map(arr).collect(),
                beta_axis: arr(&t.beta_axis),
                gamma_axis: arr(&t.gamma_axis),
                characteristic_length: t.characteristic_length,
            }),
            platform_offsets: g.platform_offsets.iter().map(arr).collect(),
            stacked_z: g.stacked_z.as_ref().map(|s| StackedFile {
                axis: arr(&s.axis),
                rho_min: s.rho_min,
                rho_max: s.rho_max,
            }),
        }
    }
}

/// Parses a geometry from JSON text.
pub fn parse_geometry(text: &str) -> Result<MechanismGeometry> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: GeometryFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(format!("{path}: {}", e.inner()))
    })?;
    file.into_geometry()
}

pub fn load_geometry(path: &Path) -> Result<MechanismGeometry> {
    let text = std::fs::read_to_string(path)?;
    parse_geometry(&text)
        .map_err(|e| Error::config(format!("{}: {}", path.display(), strip_prefix(&e))))
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

pub fn geometry_to_json(g: &MechanismGeometry) -> String {
    serde_json::to_string_pretty(&GeometryFile::from_geometry(g)).expect("geometry serializes")
}

/// SHA-256 of the canonical (compact) JSON form, as lowercase hex.
pub fn geometry_hash(g: &MechanismGeometry) -> String {
    let canonical =
        serde_json::to_string(&GeometryFile::from_geometry(g)).expect("geometry serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reference geometries shipped with the toolkit (also in `configs/`).
pub mod reference {
    use super::*;

    const LIMITS: (f64, f64) = (-2.0, 2.0);

    fn translation_legs() -> [LegGeometry; 2] {
        [
            LegGeometry::new(Vec3::zeros(), Vec3::x(), 1.0, LIMITS),
            LegGeometry::new(Vec3::zeros(), Vec3::y(), 1.0, LIMITS),
        ]
    }

    /// Planar mechanism: orthogonal rails along x and y through the origin,
    /// unit rods, joint limits [-2, 2]. Isotropic at P = (0, 0) with
    /// rho = (-1, -1).
    pub fn g0() -> MechanismGeometry {
        MechanismGeometry::new(
            Variant::Planar2T,
            translation_legs(),
            vec![],
            None,
            [Vec3::zeros(); 2],
            None,
        )
        .expect("g0 is valid")
    }

    /// G0 plus one vertical orientation rail through (0.5, 0, z) and a
    /// 0.5 m tool link along x, hinged about y.
    pub fn g1() -> MechanismGeometry {
        MechanismGeometry::new(
            Variant::Spatial2T1R,
            translation_legs(),
            vec![LegGeometry::new(
                Vec3::new(0.5, 0.0, 0.0),
                Vec3::z(),
                1.0,
                LIMITS,
            )],
            Some(ToolBody {
                anchor_offsets: vec![Vec3::new(0.5, 0.0, 0.0)],
                beta_axis: Vec3::y(),
                gamma_axis: Vec3::x(),
                characteristic_length: None,
            }),
            [Vec3::zeros(); 2],
            None,
        )
        .expect("g1 is valid")
    }

    /// G0 plus vertical orientation rails through (0.5, 0, z) and
    /// (0, 0.5, z), tool links along x and y, universal joint (y, then x).
    pub fn g2() -> MechanismGeometry {
        MechanismGeometry::new(
            Variant::Spatial2T2R,
            translation_legs(),
            vec![
                LegGeometry::new(Vec3::new(0.5, 0.0, 0.0), Vec3::z(), 1.0, LIMITS),
                LegGeometry::new(Vec3::new(0.0, 0.5, 0.0), Vec3::z(), 1.0, LIMITS),
            ],
            Some(ToolBody {
                anchor_offsets: vec![Vec3::new(0.5, 0.0, 0.0), Vec3::new(0.0, 0.5, 0.0)],
                beta_axis: Vec3::y(),
                gamma_axis: Vec3::x(),
                characteristic_length: None,
            }),
            [Vec3::zeros(); 2],
            None,
        )
        .expect("g2 is valid")
    }
}
