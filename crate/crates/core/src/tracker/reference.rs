//! Appearance reference model: restoration of inliers by matching against a
//! stored snapshot, drift compensation, and the snapshot update rule.

use super::grid::{grid_points, GridStates, PointState};
use crate::flow::{track_with_fb, FlowParams};
use crate::geom::{ransac_similarity, OrientedBox, PointPair, RansacParams, SimilarityTransform};
use crate::image::{build_pyramid, GrayImage, ImageError, ImagePyramid, Point2};

/// Snapshot of the target region together with the grid states at capture.
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    roi: GrayImage,
    /// Image coordinates of ROI pixel (0, 0).
    origin: Point2,
    roi_box: OrientedBox,
    states: GridStates,
    mean_intensity: f64,
    scale: f64,
    pyramid: ImagePyramid,
}

/// One successful reference-to-current match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceMatch {
    pub index: usize,
    /// Grid point in the capture frame.
    pub reference: Point2,
    /// Matched position in the current frame.
    pub current: Point2,
}

/// Mean intensity of the pixels whose centers fall inside `b`.
pub fn region_mean(img: &GrayImage, b: &OrientedBox) -> f64 {
    let (x, y, w, h) = b.aabb();
    let x0 = x.floor().max(0.0) as usize;
    let y0 = y.floor().max(0.0) as usize;
    let x1 = ((x + w).ceil().max(0.0) as usize).min(img.width() - 1);
    let y1 = ((y + h).ceil().max(0.0) as usize).min(img.height() - 1);
    let (mut sum, mut n) = (0.0, 0usize);
    for yy in y0..=y1 {
        for xx in x0..=x1 {
            if b.contains(Point2::new(xx as f64, yy as f64)) {
                sum += img.get(xx, yy);
                n += 1;
            }
        }
    }
    if n == 0 {
        img.sample_clamped(b.center)
    } else {
        sum / n as f64
    }
}

impl ReferenceModel {
    /// Captures the box region of `frame` with enough margin for the LK
    /// window at every pyramid level.
    pub fn capture(
        frame: &GrayImage,
        bbox: OrientedBox,
        states: GridStates,
        flow: &FlowParams,
    ) -> Result<Self, ImageError> {
        let margin = (2 * (flow.window_half + 1) + 2) as f64;
        let (x, y, w, h) = bbox.aabb();
        let x0 = (x - margin).floor();
        let y0 = (y - margin).floor();
        let width = ((x + w + margin).ceil() - x0) as usize + 1;
        let height = ((y + h + margin).ceil() - y0) as usize + 1;
        let roi = frame.crop_clamped(x0 as isize, y0 as isize, width, height);
        let pyramid = build_pyramid(&roi, flow.pyramid_levels, 2 * flow.window_half + 1)?;
        Ok(Self {
            roi,
            origin: Point2::new(x0, y0),
            roi_box: bbox,
            states,
            mean_intensity: region_mean(frame, &bbox),
            scale: bbox.diagonal(),
            pyramid,
        })
    }

    pub fn roi(&self) -> &GrayImage {
        &self.roi
    }

    pub fn roi_box(&self) -> &OrientedBox {
        &self.roi_box
    }

    pub fn states(&self) -> &GridStates {
        &self.states
    }

    pub fn mean_intensity(&self) -> f64 {
        self.mean_intensity
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn inlier_count(&self) -> usize {
        self.states.inlier_count()
    }
}

/// Matches the reference-inlier grid points into `next` around `bbox` and
/// flips the corresponding current states to inlier. Returns the number of
/// states flipped and every successful match.
pub fn restore_from_reference(
    reference: &ReferenceModel,
    bbox: &OrientedBox,
    next: &GrayImage,
    flow: &FlowParams,
    states: &mut GridStates,
) -> (usize, Vec<ReferenceMatch>) {
    let side = reference.states.side();
    let ref_points = grid_points(&reference.roi_box, side);
    let indices: Vec<usize> = (0..ref_points.len())
        .filter(|&i| reference.states.is_inlier(i))
        .collect();
    if indices.is_empty() {
        return (0, Vec::new());
    }

    // Current frame resampled into the reference ROI, so LK only has to
    // absorb the residual misalignment.
    let g = reference.roi_box.transform_to(bbox);
    let origin = reference.origin;
    let (a, b) = g.linear();
    let t = g.translation;
    let warped = GrayImage::from_fn(reference.roi.width(), reference.roi.height(), |x, y| {
        let (u, v) = (x as f64 + origin.x, y as f64 + origin.y);
        next.sample_clamped(Point2::new(a * u - b * v + t.x, b * u + a * v + t.y))
    });
    let Ok(warped_pyr) = build_pyramid(&warped, flow.pyramid_levels, 2 * flow.window_half + 1) else {
        return (0, Vec::new());
    };

    let local: Vec<Point2> = indices.iter().map(|&i| ref_points[i] - origin).collect();
    let flows = track_with_fb(&reference.pyramid, &warped_pyr, &local, flow);

    let mut restored = 0;
    let mut matches = Vec::new();
    for (&i, f) in indices.iter().zip(&flows) {
        if !f.is_matched() {
            continue;
        }
        matches.push(ReferenceMatch {
            index: i,
            reference: ref_points[i],
            current: g.apply(f.dst + origin),
        });
        if states.get(i) == PointState::Outlier {
            states.set(i, PointState::Inlier);
            restored += 1;
        }
    }
    (restored, matches)
}

/// Re-anchors the box on the reference when the reference matches agree on a
/// similarity with at least `min_support` supporting pairs.
pub fn compensate_drift(
    reference: &ReferenceModel,
    matches: &[ReferenceMatch],
    ransac: &RansacParams,
    min_support: usize,
    seed: u64,
) -> Option<(OrientedBox, SimilarityTransform)> {
    if matches.len() < min_support {
        return None;
    }
    let pairs: Vec<PointPair> = matches.iter().map(|m| (m.reference, m.current)).collect();
    let params = RansacParams {
        min_support: min_support.max(ransac.min_support),
        ..*ransac
    };
    let fit = ransac_similarity(&pairs, &params, seed).ok()?;
    Some((reference.roi_box.transform(&fit.transform), fit.transform))
}

/// Replaces the snapshot when appearance or scale moved by more than
/// `change_gate` (relative) while the outlier ratio is below `outlier_gate`.
pub fn maybe_update_reference(
    reference: &ReferenceModel,
    next: &GrayImage,
    bbox: &OrientedBox,
    states: &GridStates,
    flow: &FlowParams,
    change_gate: f64,
    outlier_gate: f64,
) -> Option<ReferenceModel> {
    let mean_now = region_mean(next, bbox);
    let mean_change = (mean_now - reference.mean_intensity).abs() / reference.mean_intensity.max(1e-9);
    let scale_change = (bbox.diagonal() - reference.scale).abs() / reference.scale;
    if !should_update(
        mean_change,
        scale_change,
        states.outlier_ratio(),
        change_gate,
        outlier_gate,
    ) {
        return None;
    }
    ReferenceModel::capture(next, *bbox, states.clone(), flow).ok()
}

/// The update rule on relative changes and the current outlier ratio.
pub fn should_update(
    mean_change: f64,
    scale_change: f64,
    outlier_ratio: f64,
    change_gate: f64,
    outlier_gate: f64,
) -> bool {
    (mean_change > change_gate || scale_change > change_gate) && outlier_ratio < outlier_gate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::texture::ValueNoise;

    fn frame(seed: u64) -> GrayImage {
        let n = ValueNoise::new(seed, 6.0, 3);
        GrayImage::from_fn(200, 160, |x, y| n.intensity(x as f64, y as f64))
    }

    fn flow() -> FlowParams {
        FlowParams {
            window_half: 7,
            ..FlowParams::default()
        }
    }

    #[test]
    fn update_rule_gates() {
        assert!(!should_update(0.05, 0.05, 0.0, 0.1, 0.2));
        assert!(should_update(0.15, 0.0, 0.1, 0.1, 0.2));
        assert!(!should_update(0.15, 0.0, 0.3, 0.1, 0.2));
        assert!(should_update(0.0, 0.12, 0.0, 0.1, 0.2));
    }

    #[test]
    fn identical_frame_matches_every_reference_inlier() {
        let img = frame(3);
        let b = OrientedBox::from_xywh(60.0, 40.0, 80.0, 80.0);
        let reference = ReferenceModel::capture(&img, b, GridStates::all_inlier(12), &flow()).unwrap();
        let mut states = GridStates::from_states(12, vec![PointState::Outlier; 144]);
        let (restored, matches) = restore_from_reference(&reference, &b, &img, &flow(), &mut states);
        assert_eq!(restored, 144);
        assert_eq!(matches.len(), 144);
        assert_eq!(states.inlier_count(), 144);
        for m in &matches {
            assert!(m.reference.distance(m.current) < 0.01);
        }
    }

    #[test]
    fn reference_outliers_are_never_consulted() {
        let img = frame(4);
        let b = OrientedBox::from_xywh(60.0, 40.0, 80.0, 80.0);
        let mut ref_states = GridStates::all_inlier(10);
        for i in 0..50 {
            ref_states.set(i, PointState::Outlier);
        }
        let reference = ReferenceModel::capture(&img, b, ref_states, &flow()).unwrap();
        let mut states = GridStates::from_states(10, vec![PointState::Outlier; 100]);
        let (restored, matches) = restore_from_reference(&reference, &b, &img, &flow(), &mut states);
        assert_eq!(restored, 50);
        assert!(matches.iter().all(|m| m.index >= 50));
        assert!((0..50).all(|i| states.get(i) == PointState::Outlier));
    }

    #[test]
    fn drift_is_pulled_back_on_a_static_scene() {
        let img = frame(5);
        let truth = OrientedBox::from_xywh(60.0, 40.0, 80.0, 80.0);
        let reference = ReferenceModel::capture(&img, truth, GridStates::all_inlier(12), &flow()).unwrap();
        let mut perturbed = truth;
        perturbed.center = perturbed.center + Point2::new(4.0, 0.0);
        let mut states = GridStates::all_inlier(12);
        let (_, matches) = restore_from_reference(&reference, &perturbed, &img, &flow(), &mut states);
        let (fixed, _) = compensate_drift(&reference, &matches, &RansacParams::default(), 8, 1).unwrap();
        assert!(fixed.center.distance(truth.center) < 1.0, "{:?}", fixed.center);
    }

    #[test]
    fn identity_drift_keeps_box() {
        let img = frame(6);
        let b = OrientedBox::from_xywh(60.0, 40.0, 80.0, 80.0);
        let reference = ReferenceModel::capture(&img, b, GridStates::all_inlier(10), &flow()).unwrap();
        let matches: Vec<ReferenceMatch> = grid_points(&b, 10)
            .into_iter()
            .enumerate()
            .map(|(index, p)| ReferenceMatch {
                index,
                reference: p,
                current: p,
            })
            .collect();
        let (out, _) = compensate_drift(&reference, &matches, &RansacParams::default(), 8, 2).unwrap();
        assert!(out.center.distance(b.center) < 1e-9);
        assert!((out.width - b.width).abs() < 1e-9);
        assert!((out.angle - b.angle).abs() < 1e-9);
    }

    #[test]
    fn too_few_matches_leave_box_alone() {
        let img = frame(7);
        let b = OrientedBox::from_xywh(60.0, 40.0, 80.0, 80.0);
        let reference = ReferenceModel::capture(&img, b, GridStates::all_inlier(10), &flow()).unwrap();
        let m = ReferenceMatch {
            index: 0,
            reference: b.center,
            current: b.center,
        };
        assert!(compensate_drift(&reference, &[m; 7], &RansacParams::default(), 8, 3).is_none());
    }

    #[test]
    fn update_rule_applies_to_real_frames() {
        let img = frame(8);
        let b = OrientedBox::from_xywh(60.0, 40.0, 80.0, 80.0);
        let reference = ReferenceModel::capture(&img, b, GridStates::all_inlier(10), &flow()).unwrap();
        let ok = GridStates::all_inlier(10);
        let bright = GrayImage::from_fn(200, 160, |x, y| img.get(x, y) * 1.15);
        let slight = GrayImage::from_fn(200, 160, |x, y| img.get(x, y) * 1.05);
        assert!(maybe_update_reference(&reference, &slight, &b, &ok, &flow(), 0.1, 0.2).is_none());
        let updated = maybe_update_reference(&reference, &bright, &b, &ok, &flow(), 0.1, 0.2).unwrap();
        assert!((updated.mean_intensity() / reference.mean_intensity() - 1.15).abs() < 1e-9);
        let mut busy = GridStates::all_inlier(10);
        for i in 0..30 {
            busy.set(i, PointState::Outlier);
        }
        assert!(maybe_update_reference(&reference, &bright, &b, &busy, &flow(), 0.1, 0.2).is_none());
    }
}
