//! Kinetostatic toolkit for modular parallel kinematic machines built from
//! a planar two-leg translational base (PPa legs) extended by PUU legs into
//! 2T1R and 2T2R mechanisms.
//!
//! ```
//! use pkmkit::config::reference;
//! use pkmkit::jacobian::{build, JacobianMode, Tolerances};
//! use pkmkit::kinematics::{inverse_kinematics, Branch, WorkingMode};
//! use pkmkit::kinetostatics::amplification;
//! use pkmkit::model::Pose;
//!
//! let g0 = reference::g0();
//! let pose = Pose::planar(0.0, 0.0);
//! let ik = inverse_kinematics(&g0, &pose, &WorkingMode::uniform(2, Branch::Minus)).unwrap();
//! let jp = build(&g0, &pose, &ik.joints, JacobianMode::Consistent, &Tolerances::default()).unwrap();
//! let amp = amplification(&jp, None).unwrap();
//! assert_eq!(amp.condition_number.value(), 1.0);
//! ```

pub mod config;
pub mod error;
pub mod export;
pub mod jacobian;
pub mod kinematics;
pub mod kinetostatics;
pub mod model;
pub mod par;
pub mod workspace;

pub use error::{Error, Result};
pub use model::{JointVector, MechanismGeometry, Pose, Variant};
