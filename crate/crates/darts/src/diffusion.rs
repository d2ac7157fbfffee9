//! Transient diffusion-approximation radiant flux and the causality
//! predicates used by the samplers.

use crate::math::Point3;
use crate::medium::Medium;
use std::f64::consts::PI;

/// Clamp for the near-delta Gaussian at vanishing time differences.
const FLUX_MAX: f64 = 1e300;

/// Query for the transient diffusion flux: evaluation point, emitter
/// position, evaluation time t' and emission time tau.
#[derive(Debug, Clone, Copy)]
pub struct DaQuery {
    pub position: Point3,
    pub emitter_position: Point3,
    pub eval_time: f64,
    pub emission_time: f64,
    pub medium: Medium,
}

/// Radiant flux of the transient diffusion equation in an infinite
/// homogeneous medium for a delta pulse emitted at `emission_time`:
///
/// c H(t'-tau) / [4 pi c D (t'-tau)]^{3/2}
///     * exp(-r^2 / (4 c D (t'-tau)) - sigma_a c (t'-tau))
///
/// with c the phase speed in the medium. Non-causal queries return 0.
pub fn da_flux(query: &DaQuery) -> f64 {
    let dt = query.eval_time - query.emission_time;
    if dt <= 0.0 {
        return 0.0;
    }
    let m = &query.medium;
    let c = m.phase_speed();
    let r2 = (query.position - query.emitter_position).length_squared();
    let cddt = 4.0 * c * m.diffusion * dt;
    // log-space evaluation; the Gaussian becomes a near-delta for tiny dt
    let log_flux = c.ln() - 1.5 * (PI * cddt).ln() - r2 / cddt - m.sigma_a * c * dt;
    log_flux.exp().min(FLUX_MAX)
}

/// True iff a straight-line connection from `position` to `emitter_position`
/// could still complete within `residual_time`.
pub fn causal_valid(position: Point3, emitter_position: Point3, residual_time: f64, medium: &Medium) -> bool {
    residual_time > 0.0 && position.distance(emitter_position) <= medium.phase_speed() * residual_time
}
