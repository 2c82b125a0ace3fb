//! The fixed, seeded scenario suite and a few helper scenarios.

use super::scenario::{OccluderSpec, Scenario, TargetSpec};
use crate::geom::{OrientedBox, SimilarityTransform};
use crate::image::Point2;

const NOISE_SIGMA: f64 = 2.0;

/// Identity at row 0, then `step` for every later frame.
fn constant_script(frames: usize, step: SimilarityTransform) -> Vec<SimilarityTransform> {
    let mut script = vec![step; frames];
    script[0] = SimilarityTransform::identity();
    script
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
    vec![
        Point2::new(x0, y0),
        Point2::new(x1, y0),
        Point2::new(x1, y1),
        Point2::new(x0, y1),
    ]
}

fn base(name: &str, frames: usize, seed: u64, target_box: (f64, f64, f64, f64), step: SimilarityTransform) -> Scenario {
    let (x, y, w, h) = target_box;
    Scenario {
        name: name.to_string(),
        width: 320,
        height: 240,
        frames,
        rng_seed: seed,
        background_seed: seed + 100,
        noise_sigma: NOISE_SIGMA,
        noise_cell: 0.0,
        gain_end: 1.0,
        contrast: 1.0,
        target: TargetSpec {
            seed: seed + 200,
            initial_box: OrientedBox::from_xywh(x, y, w, h),
            script: constant_script(frames, step),
        },
        occluders: Vec::new(),
    }
}

/// Six scenarios: translation, scale+rotation, 40% partial occlusion with
/// opposing motion, a 10-frame full occlusion, an illumination ramp, and a
/// thin static occluder crossed by the target.
pub fn standard_suite() -> Vec<Scenario> {
    let s1 = base(
        "S1_translation",
        100,
        11,
        (60.0, 60.0, 100.0, 100.0),
        SimilarityTransform::translation(0.8, 0.4),
    );

    let s2 = base(
        "S2_scale_rotation",
        100,
        12,
        (110.0, 70.0, 100.0, 100.0),
        SimilarityTransform::about(Point2::new(160.0, 120.0), 1.002, 0.006, Point2::default()),
    );

    let mut s3 = base(
        "S3_partial_occlusion",
        150,
        13,
        (70.0, 70.0, 100.0, 100.0),
        SimilarityTransform::translation(0.5, 0.0),
    );
    s3.occluders.push(OccluderSpec {
        seed: 313,
        polygon: rect(100.0, 127.0, 600.0, 200.0),
        script: constant_script(150, SimilarityTransform::translation(-2.5, 0.0)),
        active: (20, 130),
    });

    let mut s4 = base(
        "S4_full_occlusion",
        100,
        14,
        (80.0, 70.0, 100.0, 100.0),
        SimilarityTransform::translation(0.4, 0.0),
    );
    s4.occluders.push(OccluderSpec {
        seed: 314,
        polygon: rect(80.0, 50.0, 220.0, 190.0),
        script: constant_script(100, SimilarityTransform::identity()),
        active: (40, 50),
    });

    let mut s5 = base(
        "S5_illumination",
        100,
        15,
        (60.0, 60.0, 100.0, 100.0),
        SimilarityTransform::translation(0.5, 0.3),
    );
    s5.gain_end = 1.2;

    let mut s6 = base(
        "S6_static_occluder",
        120,
        16,
        (30.0, 70.0, 100.0, 100.0),
        SimilarityTransform::translation(1.0, 0.0),
    );
    s6.occluders.push(OccluderSpec {
        seed: 316,
        polygon: rect(150.0, 0.0, 162.0, 239.0),
        script: constant_script(120, SimilarityTransform::identity()),
        active: (0, 120),
    });

    vec![s1, s2, s3, s4, s5, s6]
}

/// Flat gray frames carrying nothing but a fresh band-limited noise field
/// each frame; no structure persists from one frame to the next.
pub fn noise_scenario() -> Scenario {
    let mut s = base(
        "noise_only",
        20,
        21,
        (110.0, 70.0, 100.0, 100.0),
        SimilarityTransform::identity(),
    );
    s.contrast = 0.0;
    s.noise_sigma = 50.0;
    s.noise_cell = 32.0;
    s
}

/// 640x480 frames with a 120 px target (grid side 15), for timing.
pub fn runtime_scenario() -> Scenario {
    let mut s = base(
        "runtime_640x480",
        40,
        22,
        (200.0, 160.0, 120.0, 120.0),
        SimilarityTransform::translation(0.9, -0.5),
    );
    s.width = 640;
    s.height = 480;
    s
}

/// Two noise-free 256x256 frames; the target moves by `(dx, dy)` between them.
pub fn translation_scenario(dx: f64, dy: f64) -> Scenario {
    let mut s = base(
        "translation_pair",
        2,
        23,
        (68.0, 68.0, 120.0, 120.0),
        SimilarityTransform::translation(dx, dy),
    );
    s.width = 256;
    s.height = 256;
    s.noise_sigma = 0.0;
    s
}
