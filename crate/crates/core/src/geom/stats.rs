use super::{residual, GeomError, PointPair, SimilarityTransform};
use crate::image::Point2;

/// Biased residual variance of a flow population and its size.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualStats {
    pub variance: f64,
    pub count: usize,
}

impl ResidualStats {
    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Mean squared residual (divisor `n`) of `pairs` under `t`.
pub fn residual_variance(pairs: &[PointPair], t: &SimilarityTransform) -> Result<ResidualStats, GeomError> {
    if pairs.is_empty() {
        return Err(GeomError::Empty);
    }
    let sum: f64 = pairs.iter().map(|p| residual(p, t).powi(2)).sum();
    Ok(ResidualStats {
        variance: sum / pairs.len() as f64,
        count: pairs.len(),
    })
}

/// Mean displacement disagreement `1/n sum |A(p_i) - B(p_i)|`.
pub fn transform_distance(
    a: &SimilarityTransform,
    b: &SimilarityTransform,
    points: &[Point2],
) -> Result<f64, GeomError> {
    if points.is_empty() {
        return Err(GeomError::Empty);
    }
    let sum: f64 = points.iter().map(|&p| a.apply(p).distance(b.apply(p))).sum();
    Ok(sum / points.len() as f64)
}

/// Mahalanobis-style separation of two motions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionDifference {
    pub lambda: f64,
    /// Pooled variance actually used, after flooring.
    pub pooled_variance: f64,
    /// Set when the raw pooled variance fell to or below the floor.
    pub clamped: bool,
}

/// `lambda = d* / sigma*` with the pooled variance
/// `(n_in var_in + n_out var_out) / (n_in + n_out - 2)`, floored at
/// `variance_floor`.
pub fn mahalanobis_motion(
    d_star: f64,
    inliers: &ResidualStats,
    outliers: &ResidualStats,
    variance_floor: f64,
) -> Result<MotionDifference, GeomError> {
    let total = inliers.count + outliers.count;
    if total <= 2 {
        return Err(GeomError::InsufficientCount { total });
    }
    let pooled =
        (inliers.count as f64 * inliers.variance + outliers.count as f64 * outliers.variance) / (total - 2) as f64;
    let clamped = pooled <= variance_floor;
    let pooled_variance = if clamped { variance_floor } else { pooled };
    Ok(MotionDifference {
        lambda: d_star / pooled_variance.sqrt(),
        pooled_variance,
        clamped,
    })
}
