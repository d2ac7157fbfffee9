//! Time-of-flight volumetric path tracer for scenes in a homogeneous
//! scattering medium.
//!
//! The sampling machinery implements diffusion-approximated residual-time
//! sampling (DARTS): free-path distance sampling by resampled importance
//! sampling against transmittance times transient diffusion flux, tabulated
//! elliptical direction sampling combined with phase sampling through
//! one-sample MIS, and elliptical vertex connection for exact path-length
//! control. A vanilla baseline renderer and a statistical verification
//! harness are included.

pub mod diffusion;
pub mod distance;
pub mod eda;
pub mod ellipse;
pub mod elliptical;
pub mod film;
pub mod math;
pub mod medium;
pub mod renderer;
pub mod scene;
pub mod scene_desc;
pub mod sobol;
pub mod stats;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DartsError {
    #[error("invalid medium: {0}")]
    InvalidMedium(String),
    #[error("scene error: {0}")]
    Scene(String),
    #[error("table error: {0}")]
    Table(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub use math::{Point3, Vec3};
pub use medium::Medium;
