//! Similarity transforms, oriented boxes and the robust-estimation and
//! motion-statistics routines built on them.

mod boxes;
mod estimate;
mod ransac;
mod stats;

use thiserror::Error;

pub use boxes::OrientedBox;
pub use estimate::{estimate_similarity, residual};
pub use ransac::{ransac_similarity, RansacFailure, RansacFit, RansacParams};
pub use stats::{mahalanobis_motion, residual_variance, transform_distance, MotionDifference, ResidualStats};

use crate::image::Point2;

/// A source/destination correspondence `(p, q)`.
pub type PointPair = (Point2, Point2);

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("need at least {needed} point pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("degenerate point configuration")]
    Degenerate,
    #[error("empty input")]
    Empty,
    #[error("pooled variance undefined for n_in + n_out = {total} (needs > 2)")]
    InsufficientCount { total: usize },
}

/// 4-DOF similarity `p -> s * R(theta) * p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub translation: Point2,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub const fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            translation: Point2::new(0.0, 0.0),
        }
    }

    pub fn new(scale: f64, rotation: f64, translation: Point2) -> Self {
        debug_assert!(scale > 0.0 && scale.is_finite(), "scale must be positive");
        Self {
            scale,
            rotation,
            translation,
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::new(1.0, 0.0, Point2::new(tx, ty))
    }

    /// Scales and rotates about `center`, then translates by `shift`.
    pub fn about(center: Point2, scale: f64, rotation: f64, shift: Point2) -> Self {
        let linear = Self::new(scale, rotation, Point2::default());
        let moved = linear.apply(center);
        Self::new(scale, rotation, center - moved + shift)
    }

    /// Builds the transform from its linear part `[a -b; b a]`.
    pub(crate) fn from_linear(a: f64, b: f64, translation: Point2) -> Self {
        Self {
            scale: a.hypot(b),
            rotation: b.atan2(a),
            translation,
        }
    }

    /// `(s cos theta, s sin theta)`.
    #[inline]
    pub fn linear(&self) -> (f64, f64) {
        let (sin, cos) = self.rotation.sin_cos();
        (self.scale * cos, self.scale * sin)
    }

    #[inline]
    pub fn apply(&self, p: Point2) -> Point2 {
        let (a, b) = self.linear();
        Point2::new(
            a * p.x - b * p.y + self.translation.x,
            b * p.x + a * p.y + self.translation.y,
        )
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> SimilarityTransform {
        let t = self.apply(other.translation);
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation + other.rotation,
            translation: t,
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let rot = SimilarityTransform::new(1.0 / self.scale, -self.rotation, Point2::default());
        let t = rot.apply(self.translation);
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: -self.rotation,
            translation: Point2::new(-t.x, -t.y),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.scale.is_finite() && self.scale > 0.0 && self.rotation.is_finite() && self.translation.is_finite()
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let s = theta.sin();
    let c = theta.cos();
    s.atan2(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Point2, b: Point2, tol: f64) -> bool {
        a.distance(b) <= tol
    }

    #[test]
    fn apply_examples() {
        let p = Point2::new(5.0, 7.0);
        assert_eq!(SimilarityTransform::identity().apply(p), p);
        let t = SimilarityTransform::new(2.0, 0.0, Point2::new(1.0, 0.0));
        assert_eq!(t.apply(Point2::new(3.0, 4.0)), Point2::new(7.0, 8.0));
        let r = SimilarityTransform::new(1.0, FRAC_PI_2, Point2::default());
        assert!(close(r.apply(Point2::new(1.0, 0.0)), Point2::new(0.0, 1.0), 1e-15));
    }

    #[test]
    fn about_fixes_the_center() {
        let c = Point2::new(40.0, -3.0);
        let t = SimilarityTransform::about(c, 1.3, 0.4, Point2::default());
        assert!(close(t.apply(c), c, 1e-12));
    }

    fn transform_strategy() -> impl Strategy<Value = SimilarityTransform> {
        (0.2f64..5.0, -3.1f64..3.1, -100.0f64..100.0, -100.0f64..100.0)
            .prop_map(|(s, r, x, y)| SimilarityTransform::new(s, r, Point2::new(x, y)))
    }

    proptest! {
        #[test]
        fn compose_matches_sequential_application(
            a in transform_strategy(), b in transform_strategy(),
            x in -50.0f64..50.0, y in -50.0f64..50.0,
        ) {
            let p = Point2::new(x, y);
            let lhs = a.compose(&b).apply(p);
            let rhs = a.apply(b.apply(p));
            prop_assert!(close(lhs, rhs, 1e-9 * (1.0 + rhs.norm())));
        }

        #[test]
        fn inverse_round_trips(t in transform_strategy(), x in -50.0f64..50.0, y in -50.0f64..50.0) {
            let p = Point2::new(x, y);
            prop_assert!(close(t.inverse().apply(t.apply(p)), p, 1e-9));
        }
    }
}
