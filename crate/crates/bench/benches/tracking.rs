//! Per-stage and per-step timings on the 640x480 runtime scenario.

use std::hint::black_box;

use cotrack_core::geom::{ransac_similarity, RansacParams};
use cotrack_core::image::build_pyramid;
use cotrack_core::synth::{generate, runtime_scenario};
use cotrack_core::tracker::grid::grid_points;
use cotrack_core::{track_with_fb, FlowParams, GrayImage, OrientedBox, Tracker, TrackerConfig, Variant};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn scene() -> (Vec<GrayImage>, Vec<OrientedBox>) {
    let (frames, truth) = generate(&runtime_scenario()).expect("runtime scenario renders");
    (frames, truth.boxes)
}

fn stages(c: &mut Criterion) {
    let (frames, boxes) = scene();
    let half = FlowParams::window_half_for(boxes[0].width, boxes[0].height, 2, 15);
    let params = FlowParams {
        window_half: half,
        ..FlowParams::default()
    };
    let min_side = 2 * half + 1;

    c.bench_function("pyramid_640x480", |b| {
        b.iter(|| build_pyramid(black_box(&frames[0]), 2, min_side).unwrap())
    });

    let prev = build_pyramid(&frames[0], 2, min_side).unwrap();
    let next = build_pyramid(&frames[1], 2, min_side).unwrap();
    let points = grid_points(&boxes[0], 15);
    c.bench_function("track_with_fb_225", |b| {
        b.iter(|| track_with_fb(black_box(&prev), black_box(&next), black_box(&points), &params))
    });

    let pairs: Vec<_> = track_with_fb(&prev, &next, &points, &params)
        .iter()
        .filter(|m| m.is_matched())
        .map(|m| (m.src, m.dst))
        .collect();
    let rp = RansacParams {
        min_support: 34,
        ..RansacParams::default()
    };
    c.bench_function("ransac_similarity", |b| {
        b.iter(|| ransac_similarity(black_box(&pairs), &rp, 7).unwrap())
    });
}

fn steps(c: &mut Criterion) {
    let (frames, boxes) = scene();
    let mut group = c.benchmark_group("step");
    for variant in Variant::ALL {
        let mut warm = Tracker::init(&frames[0], boxes[0], TrackerConfig::default(), variant).unwrap();
        for k in 1..=10 {
            warm.step(&frames[k - 1], &frames[k]);
        }
        group.bench_function(variant.name(), |b| {
            b.iter_batched_ref(
                || warm.clone(),
                |t| t.step(&frames[10], &frames[11]),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, stages, steps);
criterion_main!(benches);
