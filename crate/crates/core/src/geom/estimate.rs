use super::{GeomError, PointPair, SimilarityTransform};
use crate::image::Point2;

/// Smallest total squared spread of the source points accepted by
/// [`estimate_similarity`].
pub const MIN_SOURCE_SPREAD: f64 = 1e-9;

/// Residual `|T(p) - q|` of one correspondence.
#[inline]
pub fn residual(pair: &PointPair, t: &SimilarityTransform) -> f64 {
    t.apply(pair.0).distance(pair.1)
}

/// Closed-form least-squares similarity minimizing `sum |T(p_i) - q_i|^2`.
///
/// With the linear part written as `[a -b; b a]` the objective is quadratic
/// in `(a, b, tx, ty)`; after centering both point sets the normal equations
/// decouple and `a`, `b` follow from two dot products.
pub fn estimate_similarity(pairs: &[PointPair]) -> Result<SimilarityTransform, GeomError> {
    if pairs.len() < 2 {
        return Err(GeomError::TooFewPairs {
            needed: 2,
            got: pairs.len(),
        });
    }
    let n = pairs.len() as f64;
    let (mut sp, mut sq) = (Point2::default(), Point2::default());
    for (p, q) in pairs {
        sp = sp + *p;
        sq = sq + *q;
    }
    let (mp, mq) = (sp * (1.0 / n), sq * (1.0 / n));

    let (mut spread, mut dot, mut cross) = (0.0, 0.0, 0.0);
    for (p, q) in pairs {
        let (u, v) = (*p - mp, *q - mq);
        spread += u.x * u.x + u.y * u.y;
        dot += u.x * v.x + u.y * v.y;
        cross += u.x * v.y - u.y * v.x;
    }
    if spread < MIN_SOURCE_SPREAD {
        return Err(GeomError::Degenerate);
    }
    let a = dot / spread;
    let b = cross / spread;
    if a.hypot(b) <= f64::EPSILON || !(a.is_finite() && b.is_finite()) {
        // all destinations coincide: no positive scale explains them
        return Err(GeomError::Degenerate);
    }
    let t = Point2::new(mq.x - (a * mp.x - b * mp.y), mq.y - (b * mp.x + a * mp.y));
    Ok(SimilarityTransform::from_linear(a, b, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::wrap_angle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::FRAC_PI_2;

    fn objective(pairs: &[PointPair], a: f64, b: f64, tx: f64, ty: f64) -> f64 {
        pairs
            .iter()
            .map(|(p, q)| {
                let x = a * p.x - b * p.y + tx - q.x;
                let y = b * p.x + a * p.y + ty - q.y;
                x * x + y * y
            })
            .sum()
    }

    /// Coordinate-wise pattern search with shrinking steps over `(a, b, tx, ty)`.
    fn brute_force_minimizer(pairs: &[PointPair]) -> [f64; 4] {
        let mut x = [1.0, 0.0, 0.0, 0.0];
        let mut step = [0.5, 0.5, 20.0, 20.0];
        let mut best = objective(pairs, x[0], x[1], x[2], x[3]);
        for _ in 0..200_000 {
            let mut improved = false;
            for k in 0..4 {
                for dir in [-1.0, 1.0] {
                    let mut cand = x;
                    cand[k] += dir * step[k];
                    let f = objective(pairs, cand[0], cand[1], cand[2], cand[3]);
                    if f < best {
                        best = f;
                        x = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                step.iter_mut().for_each(|s| *s *= 0.5);
                if step[0] < 1e-12 {
                    break;
                }
            }
        }
        x
    }

    #[test]
    fn identity_pairs_give_identity() {
        let pairs: Vec<PointPair> = [(0.0, 0.0), (3.0, 1.0), (-2.0, 5.0)]
            .iter()
            .map(|&(x, y)| (Point2::new(x, y), Point2::new(x, y)))
            .collect();
        let t = estimate_similarity(&pairs).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.rotation.abs() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn two_point_analytic_solution() {
        let pairs = [
            (Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)),
            (Point2::new(1.0, 0.0), Point2::new(1.0, 1.0)),
        ];
        let t = estimate_similarity(&pairs).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!((t.rotation - FRAC_PI_2).abs() < 1e-12);
        assert!(t.translation.distance(Point2::new(1.0, 0.0)) < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let p = Point2::new(2.0, 2.0);
        assert_eq!(
            estimate_similarity(&[(p, p)]),
            Err(GeomError::TooFewPairs { needed: 2, got: 1 })
        );
        assert_eq!(
            estimate_similarity(&[(p, p), (p, Point2::new(5.0, 5.0))]),
            Err(GeomError::Degenerate)
        );
    }

    #[test]
    fn noisy_fit_matches_numerical_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let noise = Normal::new(0.0, 0.5).unwrap();
        for _ in 0..5 {
            let truth = SimilarityTransform::new(
                rng.random_range(0.7..1.4),
                rng.random_range(-1.0..1.0),
                Point2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)),
            );
            let pairs: Vec<PointPair> = (0..50)
                .map(|_| {
                    let p = Point2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
                    let q = truth.apply(p) + Point2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                    (p, q)
                })
                .collect();
            let fit = estimate_similarity(&pairs).unwrap();
            let (a, b) = fit.linear();
            let oracle = brute_force_minimizer(&pairs);
            assert!((a - oracle[0]).abs() < 1e-3, "a {a} vs {}", oracle[0]);
            assert!((b - oracle[1]).abs() < 1e-3, "b {b} vs {}", oracle[1]);
            assert!((fit.translation.x - oracle[2]).abs() < 1e-3);
            assert!((fit.translation.y - oracle[3]).abs() < 1e-3);
        }
    }

    #[test]
    fn exact_pairs_recover_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..=50 {
            let truth = SimilarityTransform::new(
                rng.random_range(0.5..2.0),
                rng.random_range(-3.0..3.0),
                Point2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)),
            );
            let pairs: Vec<PointPair> = (0..n)
                .map(|_| {
                    let p = Point2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
                    (p, truth.apply(p))
                })
                .collect();
            let fit = estimate_similarity(&pairs).unwrap();
            assert!((fit.scale - truth.scale).abs() < 1e-9);
            assert!(wrap_angle(fit.rotation - truth.rotation).abs() < 1e-9);
            assert!(fit.translation.distance(truth.translation) < 1e-9);
        }
    }

    #[test]
    fn estimation_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = SimilarityTransform::new(1.3, 0.7, Point2::new(4.0, -2.0));
        let pairs: Vec<PointPair> = (0..20)
            .map(|_| {
                let p = Point2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
                let q = Point2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
                (p, q)
            })
            .collect();
        let t = estimate_similarity(&pairs).unwrap();
        let g_inv = g.inverse();
        let moved: Vec<PointPair> = pairs.iter().map(|(p, q)| (g_inv.apply(*p), *q)).collect();
        let tg = estimate_similarity(&moved).unwrap();
        let want = t.compose(&g);
        assert!((tg.scale - want.scale).abs() < 1e-9);
        assert!(wrap_angle(tg.rotation - want.rotation).abs() < 1e-9);
        assert!(tg.translation.distance(want.translation) < 1e-9);
    }

    #[test]
    fn residual_examples() {
        let id = SimilarityTransform::identity();
        let p = Point2::new(1.0, 2.0);
        assert_eq!(residual(&(p, p), &id), 0.0);
        assert_eq!(residual(&(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0)), &id), 5.0);
        let t = SimilarityTransform::new(1.5, 0.3, Point2::new(2.0, 1.0));
        let pair = (Point2::new(4.0, -1.0), Point2::new(7.0, 2.0));
        let m = t.apply(pair.0);
        let direct = ((m.x - 7.0).powi(2) + (m.y - 2.0).powi(2)).sqrt();
        assert_eq!(residual(&pair, &t), direct);
    }
}
