//! Homogeneous scattering medium: extinction, transmittance and the
//! Henyey-Greenstein phase function.

use crate::math::{Frame, Vec3};
use crate::DartsError;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Speed of light in vacuum (m/s). Scene files may override this with 1.0 for
/// unit-free setups.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Homogeneous scattering medium parameters plus derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    pub sigma_s: f64,
    pub sigma_a: f64,
    /// sigma_s + sigma_a
    pub sigma_t: f64,
    /// Henyey-Greenstein anisotropy, in (-1, 1).
    pub g: f64,
    /// Relative refractive index, >= 1.
    pub eta: f64,
    /// Reduced diffusion coefficient 1 / (3 (sigma_a + sigma_s (1 - g))).
    pub diffusion: f64,
    /// Speed of light in vacuum for this scene (defaults to the physical value).
    pub c_vacuum: f64,
}

impl Medium {
    pub fn new(sigma_s: f64, sigma_a: f64, g: f64, eta: f64, c_vacuum: f64) -> Result<Self, DartsError> {
        if !(sigma_s >= 0.0) {
            return Err(DartsError::InvalidMedium(format!("sigma_s must be >= 0, got {sigma_s}")));
        }
        if !(sigma_a >= 0.0) {
            return Err(DartsError::InvalidMedium(format!("sigma_a must be >= 0, got {sigma_a}")));
        }
        if !(g > -1.0 && g < 1.0) {
            return Err(DartsError::InvalidMedium(format!("g must be in (-1, 1), got {g}")));
        }
        if !(eta >= 1.0) {
            return Err(DartsError::InvalidMedium(format!("eta must be >= 1, got {eta}")));
        }
        if !(c_vacuum > 0.0) {
            return Err(DartsError::InvalidMedium(format!("c must be > 0, got {c_vacuum}")));
        }
        let reduced = sigma_a + sigma_s * (1.0 - g);
        Ok(Medium {
            sigma_s,
            sigma_a,
            sigma_t: sigma_s + sigma_a,
            g,
            eta,
            diffusion: 1.0 / (3.0 * reduced),
            c_vacuum,
        })
    }

    /// Phase speed of light inside the medium.
    pub fn phase_speed(&self) -> f64 {
        self.c_vacuum / self.eta
    }

    /// Converts a path length (m) to transport time (s).
    pub fn time_of(&self, length: f64) -> f64 {
        length / self.phase_speed()
    }

    /// Converts a transport time (s) to a path length (m).
    pub fn length_of(&self, time: f64) -> f64 {
        time * self.phase_speed()
    }

    /// Mean free path 1/sigma_t.
    pub fn mfp(&self) -> f64 {
        1.0 / self.sigma_t
    }
}

/// Beam transmittance exp(-sigma_t d) for a straight segment of length `d`.
pub fn transmittance(d: f64, medium: &Medium) -> f64 {
    debug_assert!(d >= 0.0, "negative distance {d}");
    (-medium.sigma_t * d).exp()
}

/// Henyey-Greenstein phase function value for the cosine of the angle between
/// the two directions. Normalized over the sphere.
pub fn hg_eval(cos_angle: f64, g: f64) -> f64 {
    debug_assert!(cos_angle.abs() <= 1.0 + 1e-12);
    let denom = 1.0 + g * g - 2.0 * g * cos_angle;
    (1.0 - g * g) / (4.0 * PI * denom * denom.sqrt().max(f64::MIN_POSITIVE))
}

/// Samples an outgoing direction from the HG lobe around `incoming` (the
/// direction the photon is travelling). Returns the direction and its pdf.
pub fn hg_sample(incoming: Vec3, g: f64, u1: f64, u2: f64) -> (Vec3, f64) {
    let cos_theta = if g.abs() < 1e-3 {
        1.0 - 2.0 * u1
    } else {
        let sq = (1.0 - g * g) / (1.0 - g + 2.0 * g * u1);
        (1.0 + g * g - sq * sq) / (2.0 * g)
    };
    let cos_theta = cos_theta.clamp(-1.0, 1.0);
    let phi = 2.0 * PI * u2;
    let dir = Frame::from_w(incoming).direction(cos_theta, phi);
    (dir, hg_eval(cos_theta, g))
}
