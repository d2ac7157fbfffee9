//! Polar geometry of the equal-path-length ellipse with foci at the current
//! path vertex and the emitter.

use crate::math::{Frame, Point3, Vec3};

/// Ellipse with foci at the current vertex (`focus_near`) and the target
/// vertex (`focus_far`), a focal distance `c_focal` and a required two-segment
/// length sum `s_sum`. The frame's primary axis points toward `focus_far`.
#[derive(Debug, Clone, Copy)]
pub struct EllipseParams {
    pub focus_near: Point3,
    pub focus_far: Point3,
    /// Focal distance ||focus_near - focus_far||.
    pub c_focal: f64,
    /// Required sum of the two segment lengths.
    pub s_sum: f64,
    pub frame: Frame,
}

impl EllipseParams {
    /// Returns `None` when the ellipse is degenerate (s_sum <= c_focal) or the
    /// foci coincide with a zero length budget.
    pub fn new(focus_near: Point3, focus_far: Point3, s_sum: f64) -> Option<EllipseParams> {
        let axis = focus_far - focus_near;
        let c_focal = axis.length();
        if !(s_sum > c_focal) || !(c_focal > 0.0) {
            return None;
        }
        Some(EllipseParams {
            focus_near,
            focus_far,
            c_focal,
            s_sum,
            frame: Frame::from_w(axis / c_focal),
        })
    }

    /// Cosine of the angle between `dir` and the major axis.
    pub fn cos_theta(&self, dir: Vec3) -> f64 {
        dir.dot(self.frame.w).clamp(-1.0, 1.0)
    }
}

/// Distance from the near focus to the ellipse boundary along a direction
/// making angle `theta` with the major axis: (S^2 - C^2) / (2S - 2C cos).
///
/// Returns `None` when `s >= c` fails (no valid ellipse).
pub fn polar_distance(c_focal: f64, s_sum: f64, cos_theta: f64) -> Option<f64> {
    debug_assert!(cos_theta.abs() <= 1.0 + 1e-12);
    debug_assert!(c_focal >= 0.0);
    if !(s_sum > c_focal) {
        return None;
    }
    Some((s_sum * s_sum - c_focal * c_focal) / (2.0 * s_sum - 2.0 * c_focal * cos_theta))
}

/// Inverts the polar-distance relation: given a chord distance `t` from the
/// near focus along a direction with `cos_theta`, returns the length sum S of
/// the ellipse passing through that point (positive root, S > t).
pub fn s_from_polar_distance(t: f64, c_focal: f64, cos_theta: f64) -> f64 {
    t + (t * t - 2.0 * c_focal * t * cos_theta + c_focal * c_focal).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sphere_case() {
        for c in [-1.0, -0.5, 0.0, 0.7, 1.0] {
            assert!((polar_distance(0.0, 4.0, c).unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn apsis_cases() {
        let (c, s) = (1.0, 3.0);
        assert!((polar_distance(c, s, 1.0).unwrap() - (s + c) / 2.0).abs() < 1e-12);
        assert!((polar_distance(c, s, -1.0).unwrap() - (s - c) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_is_invalid() {
        assert!(polar_distance(2.0, 2.0, 0.5).is_none());
        assert!(polar_distance(2.0, 1.5, 0.5).is_none());
        assert!(EllipseParams::new(Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0), 2.0).is_none());
    }

    proptest! {
        #[test]
        fn two_segment_sum_matches_s(
            cx in -3.0..3.0f64, cy in -3.0..3.0f64, cz in -3.0..3.0f64,
            extra in 0.01..5.0f64,
            cos_theta in -1.0..1.0f64, phi in 0.0..6.28f64,
        ) {
            let near = Vec3::new(0.3, -0.2, 0.9);
            let far = near + Vec3::new(cx, cy, cz);
            prop_assume!((far - near).length() > 1e-3);
            let c = (far - near).length();
            let s = c + extra;
            let ell = EllipseParams::new(near, far, s).unwrap();
            let t = polar_distance(c, s, cos_theta).unwrap();
            let dir = ell.frame.direction(cos_theta, phi);
            let p = near + dir * t;
            let total = (p - near).length() + (p - far).length();
            prop_assert!((total - s).abs() <= 1e-9 * s.max(1.0));
            // round trip through the inverse
            let s_back = s_from_polar_distance(t, c, cos_theta);
            prop_assert!((s_back - s).abs() <= 1e-9 * s.max(1.0));
        }
    }
}
