//! Free-path distance sampling by resampled importance sampling against the
//! product of transmittance and transient diffusion flux.

use crate::diffusion::{causal_valid, da_flux, DaQuery};
use crate::math::{Point3, Vec3};
use crate::medium::Medium;

/// Candidate count; a power of two, 8 in production.
pub const N_RIS: usize = 8;

#[derive(Debug, Clone, Copy)]
pub struct DistanceSampleContext {
    pub ray_origin: Point3,
    pub ray_direction: Vec3,
    /// Distance to the nearest surface along the ray, possibly infinite.
    pub d_max: f64,
    /// Residual time budget at the ray origin.
    pub residual_time: f64,
    pub emitter_position: Point3,
    pub medium: Medium,
}

#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub distances: Vec<f64>,
    pub candidate_pdfs: Vec<f64>,
    pub ris_weights: Vec<f64>,
}

/// Bernoulli scattering-event split: medium event with probability
/// p_m = 1 - exp(-sigma_t d_max).
pub fn sample_scatter_event(d_max: f64, medium: &Medium, u: f64) -> (bool, f64) {
    debug_assert!(d_max > 0.0);
    let p_m = if d_max.is_infinite() { 1.0 } else { 1.0 - (-medium.sigma_t * d_max).exp() };
    (u < p_m, p_m)
}

/// Unnormalized target density: transmittance times transient diffusion flux
/// at the candidate vertex, zero for non-causal candidates.
pub fn target_density(d: f64, ctx: &DistanceSampleContext) -> f64 {
    let m = &ctx.medium;
    let position = ctx.ray_origin + ctx.ray_direction * d;
    let residual_after = ctx.residual_time - m.time_of(d);
    if !causal_valid(position, ctx.emitter_position, residual_after, m) {
        return 0.0;
    }
    let flux = da_flux(&DaQuery {
        position,
        emitter_position: ctx.emitter_position,
        eval_time: residual_after,
        emission_time: 0.0,
        medium: *m,
    });
    m.sigma_t * (-m.sigma_t * d).exp() * flux
}

/// Maps uniform values to truncated-exponential candidates on [0, d_max) and
/// computes their RIS weights.
pub fn gen_candidates(ctx: &DistanceSampleContext, us: &[f64]) -> CandidateSet {
    let sigma_t = ctx.medium.sigma_t;
    debug_assert!(sigma_t > 0.0, "medium sampling requested with sigma_t = 0");
    let p_c = if ctx.d_max.is_infinite() { 1.0 } else { 1.0 - (-sigma_t * ctx.d_max).exp() };
    let mut distances = Vec::with_capacity(us.len());
    let mut candidate_pdfs = Vec::with_capacity(us.len());
    let mut ris_weights = Vec::with_capacity(us.len());
    for &u in us {
        // inverse CDF of the truncated exponential
        let d = -(1.0 - p_c * u).ln() / sigma_t;
        let pdf = sigma_t * (-sigma_t * d).exp() / p_c;
        distances.push(d);
        candidate_pdfs.push(pdf);
        ris_weights.push(target_density(d, ctx) / pdf);
    }
    CandidateSet { distances, candidate_pdfs, ris_weights }
}

/// Selects one candidate with probability proportional to its RIS weight.
/// The returned contribution weight is sum(w) / (N * target(d)), so that
/// weight * f(d) estimates the integral of f against the true target.
/// Returns `None` when every weight is zero (caller falls back to plain
/// truncated-exponential sampling).
pub fn ris_resample(candidates: &CandidateSet, u: f64) -> Option<(f64, f64)> {
    let total: f64 = candidates.ris_weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut threshold = u * total;
    let mut chosen = candidates.ris_weights.len() - 1;
    for (i, &w) in candidates.ris_weights.iter().enumerate() {
        if threshold < w {
            chosen = i;
            break;
        }
        threshold -= w;
    }
    let n = candidates.ris_weights.len() as f64;
    // target(d_i) = w_i * candidate_pdf_i
    let target = candidates.ris_weights[chosen] * candidates.candidate_pdfs[chosen];
    let weight = total / (n * target);
    Some((candidates.distances[chosen], weight))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(d_max: f64, residual_time: f64) -> DistanceSampleContext {
        DistanceSampleContext {
            ray_origin: Vec3::ZERO,
            ray_direction: Vec3::new(1.0, 0.0, 0.0),
            d_max,
            residual_time,
            emitter_position: Vec3::new(2.0, 0.0, 0.0),
            medium: Medium::new(2.0, 0.2, 0.0, 1.0, 1.0).unwrap(),
        }
    }

    #[test]
    fn event_split_probabilities() {
        let m = Medium::new(0.25, 0.25, 0.0, 1.0, 1.0).unwrap(); // sigma_t = 0.5
        let (_, p) = sample_scatter_event(f64::INFINITY, &m, 0.3);
        assert_eq!(p, 1.0);
        let (_, p) = sample_scatter_event(2f64.ln() / 0.5, &m, 0.3);
        assert!((p - 0.5).abs() < 1e-12);
        let vac = Medium::new(0.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let (is_medium, p) = sample_scatter_event(3.0, &vac, 0.0);
        assert_eq!(p, 0.0);
        assert!(!is_medium);
    }

    #[test]
    fn candidate_endpoints() {
        let c = ctx(3.0, 100.0);
        let set = gen_candidates(&c, &[0.0, 1.0 - 1e-12]);
        assert_eq!(set.distances[0], 0.0);
        assert!((set.distances[1] - 3.0).abs() < 1e-6);
        for d in &set.distances {
            assert!((0.0..3.0 + 1e-9).contains(d));
        }
    }

    #[test]
    fn non_causal_candidates_get_zero_weight() {
        // residual time 1.5, emitter at distance 2: a candidate at d with
        // remaining budget 1.5 - d must reach a point 2 - d away
        let c = ctx(10.0, 1.5);
        // at d = 1.0, remaining 0.5, distance to emitter 1.0 -> non-causal
        assert_eq!(target_density(1.0, &c), 0.0);
        // beyond the residual time entirely
        assert_eq!(target_density(1.6, &c), 0.0);
        // Heaviside boundary
        assert_eq!(target_density(1.5, &c), 0.0);
    }

    #[test]
    fn target_density_is_product_of_factors() {
        let c = ctx(f64::INFINITY, 6.0);
        for d in [0.1, 0.5, 1.0, 2.5] {
            let m = &c.medium;
            let pos = c.ray_origin + c.ray_direction * d;
            let flux = da_flux(&DaQuery {
                position: pos,
                emitter_position: c.emitter_position,
                eval_time: 6.0 - d,
                emission_time: 0.0,
                medium: *m,
            });
            let expected = m.sigma_t * (-m.sigma_t * d).exp() * flux;
            let got = target_density(d, &c);
            assert!((got - expected).abs() <= 1e-12 * expected.max(1e-300));
        }
    }

    #[test]
    fn resample_selects_uniformly_for_equal_weights() {
        let set = CandidateSet {
            distances: (0..8).map(|i| i as f64).collect(),
            candidate_pdfs: vec![1.0; 8],
            ris_weights: vec![0.5; 8],
        };
        for i in 0..8 {
            let u = (i as f64 + 0.5) / 8.0;
            let (d, _) = ris_resample(&set, u).unwrap();
            assert_eq!(d, i as f64);
        }
    }

    #[test]
    fn resample_single_nonzero_weight() {
        let mut weights = vec![0.0; 8];
        weights[5] = 0.7;
        let set = CandidateSet {
            distances: (0..8).map(|i| i as f64).collect(),
            candidate_pdfs: vec![1.0; 8],
            ris_weights: weights,
        };
        for u in [0.0, 0.3, 0.999] {
            let (d, _) = ris_resample(&set, u).unwrap();
            assert_eq!(d, 5.0);
        }
    }

    #[test]
    fn resample_all_zero_signals_fallback() {
        let set = CandidateSet {
            distances: vec![1.0; 8],
            candidate_pdfs: vec![1.0; 8],
            ris_weights: vec![0.0; 8],
        };
        assert!(ris_resample(&set, 0.5).is_none());
    }
}
