use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{estimate_similarity, residual, PointPair, SimilarityTransform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Consensus gate on the point residual, in pixels.
    pub threshold: f64,
    pub max_iterations: usize,
    /// Smallest consensus accepted as a successful fit.
    pub min_support: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            threshold: 2.0,
            max_iterations: 200,
            min_support: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub transform: SimilarityTransform,
    /// Indices into the input pairs, ascending.
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RansacFailure {
    TooFewPairs,
    LowSupport { best: usize },
}

/// Two-point-sample RANSAC over similarity transforms, refit by least squares
/// on the consensus. Fully determined by `seed`.
pub fn ransac_similarity(pairs: &[PointPair], params: &RansacParams, seed: u64) -> Result<RansacFit, RansacFailure> {
    let n = pairs.len();
    if n < 2 {
        return Err(RansacFailure::TooFewPairs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thr = params.threshold;
    let thr2 = thr * thr;

    // Score: support count, ties broken by truncated squared error.
    let score = |t: &SimilarityTransform| {
        let mut count = 0usize;
        let mut cost = 0.0;
        for pair in pairs {
            let r = residual(pair, t);
            if r < thr {
                count += 1;
                cost += r * r;
            } else {
                cost += thr2;
            }
        }
        (count, cost)
    };

    let mut best: Option<(SimilarityTransform, usize, f64)> = None;
    for _ in 0..params.max_iterations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let Ok(candidate) = estimate_similarity(&[pairs[i], pairs[j]]) else {
            continue;
        };
        let (count, cost) = score(&candidate);
        let better = match best {
            None => true,
            Some((_, bc, bcost)) => count > bc || (count == bc && cost < bcost),
        };
        if better {
            best = Some((candidate, count, cost));
        }
    }

    let Some((mut transform, best_count, _)) = best else {
        return Err(RansacFailure::LowSupport { best: 0 });
    };
    let min_support = params.min_support.max(2);
    if best_count < min_support {
        return Err(RansacFailure::LowSupport { best: best_count });
    }

    let consensus =
        |t: &SimilarityTransform| -> Vec<usize> { (0..n).filter(|&k| residual(&pairs[k], t) < thr).collect() };
    let mut support = consensus(&transform);
    for _ in 0..3 {
        let subset: Vec<PointPair> = support.iter().map(|&k| pairs[k]).collect();
        let Ok(refit) = estimate_similarity(&subset) else {
            break;
        };
        let next = consensus(&refit);
        if next.len() < support.len() {
            break;
        }
        let stable = next == support;
        transform = refit;
        support = next;
        if stable {
            break;
        }
    }
    if support.len() < min_support {
        return Err(RansacFailure::LowSupport { best: support.len() });
    }
    Ok(RansacFit { transform, support })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gate_1_5() -> RansacParams {
        RansacParams {
            threshold: 1.5,
            ..RansacParams::default()
        }
    }
    use crate::geom::wrap_angle;
    use crate::image::Point2;
    use rand_distr::{Distribution, Normal};

    fn planted(seed: u64) -> (SimilarityTransform, Vec<PointPair>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = SimilarityTransform::new(1.05, 0.1, Point2::new(2.0, 3.0));
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut pairs = Vec::new();
        for _ in 0..60 {
            let p = Point2::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
            let q = truth.apply(p) + Point2::new(noise.sample(&mut rng), noise.sample(&mut rng));
            pairs.push((p, q));
        }
        for _ in 0..40 {
            let p = Point2::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
            let q = Point2::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
            pairs.push((p, q));
        }
        (truth, pairs)
    }

    #[test]
    fn recovers_planted_transform() {
        let (truth, pairs) = planted(1);
        let fit = ransac_similarity(&pairs, &gate_1_5(), 42).unwrap();
        for (k, pair) in pairs.iter().enumerate().take(60) {
            assert!(fit.support.contains(&k), "true inlier {k} missing");
            assert!(residual(pair, &fit.transform) < 1.5);
        }
        assert!((fit.transform.scale - truth.scale).abs() < 0.01);
        assert!(wrap_angle(fit.transform.rotation - truth.rotation).abs() < 0.01);
    }

    #[test]
    fn single_pair_fails() {
        let p = Point2::new(1.0, 1.0);
        assert_eq!(
            ransac_similarity(&[(p, p)], &gate_1_5(), 0),
            Err(RansacFailure::TooFewPairs)
        );
    }

    #[test]
    fn consistent_pairs_are_fit_exactly() {
        let t = SimilarityTransform::new(0.8, -0.6, Point2::new(-4.0, 9.0));
        let pairs: Vec<PointPair> = (0..30)
            .map(|i| {
                let p = Point2::new((i * 7 % 13) as f64 * 3.0, (i * 5 % 11) as f64 * 2.0);
                (p, t.apply(p))
            })
            .collect();
        let fit = ransac_similarity(&pairs, &gate_1_5(), 3).unwrap();
        assert_eq!(fit.support, (0..30).collect::<Vec<_>>());
        assert!((fit.transform.scale - t.scale).abs() < 1e-9);
        assert!(wrap_angle(fit.transform.rotation - t.rotation).abs() < 1e-9);
        assert!(fit.transform.translation.distance(t.translation) < 1e-9);
    }

    #[test]
    fn low_support_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs: Vec<PointPair> = (0..30)
            .map(|_| {
                (
                    Point2::new(rng.random_range(0.0..500.0), rng.random_range(0.0..500.0)),
                    Point2::new(rng.random_range(0.0..500.0), rng.random_range(0.0..500.0)),
                )
            })
            .collect();
        let params = RansacParams {
            min_support: 10,
            ..gate_1_5()
        };
        assert!(matches!(
            ransac_similarity(&pairs, &params, 1),
            Err(RansacFailure::LowSupport { .. })
        ));
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (_, pairs) = planted(4);
        let a = ransac_similarity(&pairs, &gate_1_5(), 11).unwrap();
        let b = ransac_similarity(&pairs, &gate_1_5(), 11).unwrap();
        assert_eq!(a.support, b.support);
        assert_eq!(a.transform.scale.to_bits(), b.transform.scale.to_bits());
        assert_eq!(a.transform.translation.x.to_bits(), b.transform.translation.x.to_bits());
    }

    #[test]
    fn half_outliers_recovered_in_almost_all_seeds() {
        let mut ok = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let truth = SimilarityTransform::new(
                rng.random_range(0.8..1.2),
                rng.random_range(-0.5..0.5),
                Point2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            );
            let mut pairs = Vec::new();
            for _ in 0..20 {
                let p = Point2::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
                pairs.push((p, truth.apply(p)));
            }
            for _ in 0..20 {
                let p = Point2::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
                let q = Point2::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
                pairs.push((p, q));
            }
            if let Ok(fit) = ransac_similarity(&pairs, &gate_1_5(), seed) {
                if (0..20).all(|k| fit.support.contains(&k)) {
                    ok += 1;
                }
            }
        }
        assert!(ok >= 99, "{ok}/100");
    }
}
