//! Control-vertex sampling on the equal-time ellipse along a reused
//! scattering direction, imposing exact path-length control.

use crate::ellipse::{polar_distance, s_from_polar_distance};
use crate::math::{Point3, Vec3};
use crate::medium::Medium;
use rand::Rng;

/// Target path-time interval [t_min, t_max) in seconds.
#[derive(Debug, Clone, Copy)]
pub struct TimeWindow {
    pub t_min: f64,
    pub t_max: f64,
}

impl TimeWindow {
    pub fn new(t_min: f64, t_max: f64) -> TimeWindow {
        assert!(t_min < t_max);
        TimeWindow { t_min, t_max }
    }

    /// Residual length budget [S_m, S_M] for a vertex with the given elapsed
    /// time.
    pub fn residual_lengths(&self, elapsed: f64, medium: &Medium) -> (f64, f64) {
        (
            medium.length_of(self.t_min - elapsed),
            medium.length_of(self.t_max - elapsed),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlEvent {
    Medium,
    Surface,
}

#[derive(Debug, Clone, Copy)]
pub struct ControlVertexSample {
    /// Polar distance from the sampling vertex to the control vertex.
    pub t: f64,
    /// Two-segment length sum for medium events.
    pub s_sum: f64,
    pub position: Point3,
    /// Density in the polar-distance measure; 1 for the (discrete) surface
    /// event.
    pub pdf_t: f64,
    /// Probability of the chosen discrete branch.
    pub branch_prob: f64,
    pub event: ControlEvent,
}

/// Truncated exponential sample on [s_m, s_M). The sigma_t = 0 limit is the
/// uniform distribution.
pub fn sample_s(s_m: f64, s_max: f64, sigma_t: f64, u: f64) -> f64 {
    debug_assert!(s_m < s_max && (0.0..1.0).contains(&u));
    if sigma_t == 0.0 {
        return s_m + u * (s_max - s_m);
    }
    let p_c = -(-sigma_t * (s_max - s_m)).exp_m1();
    s_m - (1.0 - u * p_c).ln() / sigma_t
}

/// Density of `sample_s`.
pub fn pdf_s(s: f64, s_m: f64, s_max: f64, sigma_t: f64) -> f64 {
    if !(s_m..s_max).contains(&s) {
        return 0.0;
    }
    if sigma_t == 0.0 {
        return 1.0 / (s_max - s_m);
    }
    let p_c = -(-sigma_t * (s_max - s_m)).exp_m1();
    sigma_t * (-sigma_t * (s - s_m)).exp() / p_c
}

/// Density of the polar distance t under truncated-exponential sampling of S:
/// p(t) = p(S) * (S - C cos) / (S - t), the Jacobian of t(S) from the polar
/// ellipse equation.
pub fn elliptical_pdf_t(
    s: f64,
    c_focal: f64,
    cos_theta: f64,
    sigma_t: f64,
    s_m: f64,
    s_max: f64,
) -> f64 {
    let t = match polar_distance(c_focal, s, cos_theta) {
        Some(t) => t,
        None => return 0.0,
    };
    if s - t <= 0.0 {
        return 0.0; // degenerate geometry
    }
    pdf_s(s, s_m, s_max, sigma_t) * (s - c_focal * cos_theta) / (s - t)
}

/// Samples a control vertex along direction `omega` from `vertex` so that the
/// two-segment connection vertex -> control -> emitter has total length in
/// the residual budget. `surface_distance` is the nearest surface hit along
/// `omega`, when any. `surface_branch_length` scales the discrete surface
/// branch in case II (same measure as the medium chord length).
#[allow(clippy::too_many_arguments)]
pub fn sample_control_vertex<R: Rng>(
    vertex: Point3,
    omega: Vec3,
    emitter: Point3,
    s_m_raw: f64,
    s_max: f64,
    surface_distance: Option<f64>,
    medium: &Medium,
    surface_branch_length: f64,
    rng: &mut R,
) -> Option<ControlVertexSample> {
    let to_emitter = emitter - vertex;
    let c_focal = to_emitter.length();
    if !(s_max > c_focal) {
        return None; // even the longest allowed path cannot reach the emitter
    }
    let cos_theta = if c_focal > 0.0 {
        (to_emitter / c_focal).dot(omega).clamp(-1.0, 1.0)
    } else {
        1.0
    };
    // paths shorter than the focal distance are geometrically impossible
    let s_m = s_m_raw.max(c_focal);
    let t_outer = polar_distance(c_focal, s_max, cos_theta)?;

    let surface_inside = surface_distance.is_some_and(|t_s| t_s < t_outer);
    if !surface_inside {
        // case I: pure medium event on [s_m, s_max)
        let s = sample_s(s_m, s_max, medium.sigma_t, rng.random());
        let t = polar_distance(c_focal, s, cos_theta)?;
        let pdf_t = elliptical_pdf_t(s, c_focal, cos_theta, medium.sigma_t, s_m, s_max);
        if !(pdf_t > 0.0) {
            return None;
        }
        return Some(ControlVertexSample {
            t,
            s_sum: s,
            position: vertex + omega * t,
            pdf_t,
            branch_prob: 1.0,
            event: ControlEvent::Medium,
        });
    }

    // case II: a surface sits inside the outer ellipse along omega
    let t_s = surface_distance.unwrap();
    let s_hi = s_from_polar_distance(t_s, c_focal, cos_theta).min(s_max);
    let medium_possible = s_hi > s_m;
    let t_vol = if medium_possible { t_s.min(t_outer) } else { 0.0 };
    let p_medium = t_vol / (t_vol + surface_branch_length);
    if rng.random::<f64>() < p_medium {
        let s = sample_s(s_m, s_hi, medium.sigma_t, rng.random());
        let t = polar_distance(c_focal, s, cos_theta)?;
        let pdf_t = elliptical_pdf_t(s, c_focal, cos_theta, medium.sigma_t, s_m, s_hi);
        if !(pdf_t > 0.0) {
            return None;
        }
        Some(ControlVertexSample {
            t,
            s_sum: s,
            position: vertex + omega * t,
            pdf_t,
            branch_prob: p_medium,
            event: ControlEvent::Medium,
        })
    } else {
        Some(ControlVertexSample {
            t: t_s,
            s_sum: t_s + (vertex + omega * t_s).distance(emitter),
            position: vertex + omega * t_s,
            pdf_t: 1.0,
            branch_prob: 1.0 - p_medium,
            event: ControlEvent::Surface,
        })
    }
}

/// Early-exit bound: can any continuation from `vertex` still reach the
/// emitter within the gate?
pub fn feasible(vertex: Point3, emitter: Point3, elapsed: f64, gate_t_max: f64, medium: &Medium) -> bool {
    elapsed + medium.time_of(vertex.distance(emitter)) < gate_t_max
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::integrate_gl;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_s_endpoints_and_limit() {
        assert_eq!(sample_s(1.0, 3.0, 2.0, 0.0), 1.0);
        assert!((sample_s(1.0, 3.0, 2.0, 1.0 - 1e-13) - 3.0).abs() < 1e-9);
        // sigma_t -> 0 limit is uniform
        assert!((sample_s(1.0, 3.0, 0.0, 0.25) - 1.5).abs() < 1e-12);
        assert!((pdf_s(2.0, 1.0, 3.0, 0.0) - 0.5).abs() < 1e-12);
        assert!((pdf_s(2.0, 1.0, 3.0, 1e-14) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn pdf_s_normalizes() {
        for sigma_t in [0.0, 0.3, 2.0, 10.0] {
            let integral = integrate_gl(|s| pdf_s(s, 0.7, 2.9, sigma_t), 0.7, 2.9, 256);
            assert!((integral - 1.0).abs() < 1e-9, "sigma_t {sigma_t}: {integral}");
        }
    }

    #[test]
    fn sphere_case_doubles_density() {
        // C = 0: t = S/2, so p(t) = 2 p(S)
        let (s_m, s_max, sigma_t) = (1.0, 3.0, 0.7);
        for s in [1.2, 2.0, 2.8] {
            let p_t = elliptical_pdf_t(s, 0.0, 0.3, sigma_t, s_m, s_max);
            let expected = 2.0 * pdf_s(s, s_m, s_max, sigma_t);
            assert!((p_t - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn pdf_t_normalizes_over_image() {
        // integral of p(t) dt over t([s_m, s_max)) must be 1; integrate in S
        // with the Jacobian dt/dS = (S - t)/(S - C cos)
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10 {
            let c_focal = rng.random_range(0.1..2.0);
            let s_m = c_focal + rng.random_range(0.01..1.0);
            let s_max = s_m + rng.random_range(0.1..3.0);
            let cos_theta = rng.random_range(-1.0..1.0);
            let sigma_t = rng.random_range(0.0..4.0);
            let integral = integrate_gl(
                |s| {
                    let t = polar_distance(c_focal, s, cos_theta).unwrap();
                    let dt_ds = (s - t) / (s - c_focal * cos_theta);
                    elliptical_pdf_t(s, c_focal, cos_theta, sigma_t, s_m, s_max) * dt_ds
                },
                s_m,
                s_max,
                512,
            );
            assert!(
                (integral - 1.0).abs() < 1e-4,
                "C={c_focal} Sm={s_m} SM={s_max} cos={cos_theta} sigma={sigma_t}: {integral}"
            );
        }
    }

    #[test]
    fn infeasible_window_yields_none() {
        let m = Medium::new(1.0, 0.1, 0.0, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let sample = sample_control_vertex(
            Vec3::ZERO,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(5.0, 0.0, 0.0),
            1.0,
            4.0, // S_M < C = 5
            None,
            &m,
            m.mfp(),
            &mut rng,
        );
        assert!(sample.is_none());
    }

    #[test]
    fn case_one_uniform_composition() {
        // C = 0 (emitter at the vertex), sigma_t -> 0: control vertex radius
        // uniform on [S_m/2, S_M/2)
        let m = Medium::new(1e-9, 0.0, 0.0, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut radii = Vec::new();
        for _ in 0..20_000 {
            let s = sample_control_vertex(
                Vec3::ZERO,
                Vec3::new(0.0, 0.0, 1.0),
                Vec3::new(1e-12, 0.0, 0.0),
                2.0,
                4.0,
                None,
                &m,
                m.mfp(),
                &mut rng,
            )
            .unwrap();
            assert!(s.event == ControlEvent::Medium);
            radii.push(s.t);
        }
        let n = radii.len();
        let mut counts = vec![0usize; 10];
        for r in radii {
            assert!((1.0..2.0).contains(&r));
            counts[(((r - 1.0) / 1.0) * 10.0) as usize] += 1;
        }
        let expected = vec![n as f64 / 10.0; 10];
        assert!(crate::stats::chi_square_p_value(&counts, &expected) > 0.01);
    }

    #[test]
    fn medium_samples_satisfy_length_sum() {
        let m = Medium::new(2.0, 0.1, 0.3, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let vertex = Vec3::new(0.2, -0.4, 0.1);
        let emitter = Vec3::new(1.5, 0.8, -0.3);
        for _ in 0..10_000 {
            let omega = crate::medium::hg_sample(
                Vec3::new(0.0, 0.0, 1.0),
                0.0,
                rng.random(),
                rng.random(),
            )
            .0;
            let Some(s) = sample_control_vertex(
                vertex, omega, emitter, 2.5, 5.0, None, &m, m.mfp(), &mut rng,
            ) else {
                continue;
            };
            let total = (s.position - vertex).length() + (s.position - emitter).length();
            assert!((total - s.s_sum).abs() <= 1e-9 * s.s_sum);
            let c_focal = vertex.distance(emitter);
            assert!(s.s_sum >= c_focal.max(2.5) && s.s_sum < 5.0);
        }
    }

    #[test]
    fn case_two_surface_branch() {
        let m = Medium::new(1.0, 0.1, 0.0, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let mut saw_surface = false;
        let mut saw_medium = false;
        for _ in 0..2000 {
            let s = sample_control_vertex(
                Vec3::ZERO,
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                1.5,
                6.0,
                Some(1.0), // surface well inside the outer ellipse
                &m,
                m.mfp(),
                &mut rng,
            )
            .unwrap();
            match s.event {
                ControlEvent::Surface => {
                    saw_surface = true;
                    assert_eq!(s.t, 1.0);
                }
                ControlEvent::Medium => {
                    saw_medium = true;
                    assert!(s.t <= 1.0 + 1e-12, "medium control vertex beyond the surface: {}", s.t);
                }
            }
        }
        assert!(saw_surface && saw_medium);
    }

    #[test]
    fn feasibility_bound() {
        let m = Medium::new(1.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let a = Vec3::ZERO;
        let b = Vec3::new(2.0, 0.0, 0.0);
        assert!(!feasible(a, b, 5.0, 5.0, &m));
        assert!(feasible(a, a, 4.9, 5.0, &m));
        assert!(!feasible(a, b, 3.0, 5.0, &m)); // 3 + 2 = 5, half-open
        assert!(feasible(a, b, 2.9, 5.0, &m));
    }
}
