use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::scenario::{cumulative_poses, Scenario, ScenarioError};
use super::texture::ValueNoise;
use crate::geom::{OrientedBox, SimilarityTransform};
use crate::image::{GrayImage, Point2};
use crate::tracker::grid::{grid_points, grid_side_for};
use crate::tracker::TrackerConfig;

const TARGET_CELL: f64 = 6.0;
const BACKGROUND_CELL: f64 = 9.0;
const OCCLUDER_CELL: f64 = 5.0;

/// Exact per-frame answers for a generated sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub boxes: Vec<OrientedBox>,
    /// Side of the nominal tracking grid the masks are defined on.
    pub grid_side: usize,
    /// Per frame, row-major: is the grid cell center under an occluder.
    pub masks: Vec<Vec<bool>>,
}

impl SynthTruth {
    pub fn covered_fraction(&self, frame: usize) -> f64 {
        let m = &self.masks[frame];
        m.iter().filter(|&&c| c).count() as f64 / m.len() as f64
    }
}

/// Texture raster in a local frame; sampled bilinearly with clamped borders.
struct Raster {
    origin: Point2,
    img: GrayImage,
}

impl Raster {
    fn render(noise: &ValueNoise, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        let origin = Point2::new(x0.floor() - 2.0, y0.floor() - 2.0);
        let w = (x1.ceil() - origin.x) as usize + 3;
        let h = (y1.ceil() - origin.y) as usize + 3;
        let img = GrayImage::from_fn(w, h, |x, y| noise.intensity(origin.x + x as f64, origin.y + y as f64));
        Self { origin, img }
    }

    fn sample(&self, p: Point2) -> f64 {
        self.img.sample_clamped(p - self.origin)
    }
}

/// Even-odd containment test for a simple polygon.
pub fn polygon_contains(poly: &[Point2], p: Point2) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn bounds(points: &[Point2]) -> (f64, f64, f64, f64) {
    points.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), p| (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y)),
    )
}

struct PosedOccluder {
    polygon: Vec<Point2>,
    inverse: SimilarityTransform,
}

/// Renders every frame of `scenario` with its ground truth.
pub fn generate(scenario: &Scenario) -> Result<(Vec<GrayImage>, SynthTruth), ScenarioError> {
    scenario.validate()?;
    let (w, h) = (scenario.width, scenario.height);
    let background = GrayImage::from_fn(w, h, {
        let noise = ValueNoise::new(scenario.background_seed, BACKGROUND_CELL, 3);
        move |x, y| noise.intensity(x as f64, y as f64)
    });

    let target_box = scenario.target.initial_box;
    let target_tex = {
        let (x, y, bw, bh) = target_box.aabb();
        Raster::render(
            &ValueNoise::new(scenario.target.seed, TARGET_CELL, 3),
            x,
            y,
            x + bw,
            y + bh,
        )
    };
    let target_poses = cumulative_poses(&scenario.target.script);
    let boxes: Vec<OrientedBox> = target_poses.iter().map(|p| target_box.transform(p)).collect();

    let occ_textures: Vec<Raster> = scenario
        .occluders
        .iter()
        .map(|o| {
            let (x0, y0, x1, y1) = bounds(&o.polygon);
            Raster::render(&ValueNoise::new(o.seed, OCCLUDER_CELL, 3), x0, y0, x1, y1)
        })
        .collect();
    let occ_poses: Vec<Vec<SimilarityTransform>> =
        scenario.occluders.iter().map(|o| cumulative_poses(&o.script)).collect();
    let posed_occluders = |frame: usize| -> Vec<(usize, PosedOccluder)> {
        scenario
            .occluders
            .iter()
            .enumerate()
            .filter(|(_, o)| o.is_active(frame))
            .map(|(k, o)| {
                let pose = occ_poses[k][frame];
                (
                    k,
                    PosedOccluder {
                        polygon: o.polygon.iter().map(|&p| pose.apply(p)).collect(),
                        inverse: pose.inverse(),
                    },
                )
            })
            .collect()
    };

    let defaults = TrackerConfig::default();
    let grid_side = grid_side_for(&target_box, defaults.m_range.0, defaults.m_range.1);

    let rendered: Vec<(GrayImage, Vec<bool>)> = (0..scenario.frames)
        .into_par_iter()
        .map(|frame| {
            let occluders = posed_occluders(frame);
            let mut img = background.clone();

            let b = boxes[frame];
            let inv = target_poses[frame].inverse();
            let (bx, by, bw, bh) = b.aabb();
            let (xs, ys) = (bx.floor().max(0.0) as usize, by.floor().max(0.0) as usize);
            let xe = ((bx + bw).ceil() as usize).min(w - 1);
            let ye = ((by + bh).ceil() as usize).min(h - 1);
            for y in ys..=ye {
                for x in xs..=xe {
                    let p = Point2::new(x as f64, y as f64);
                    if b.contains(p) {
                        img.set(x, y, target_tex.sample(inv.apply(p)));
                    }
                }
            }

            for (k, occ) in &occluders {
                let (x0, y0, x1, y1) = bounds(&occ.polygon);
                if x1 < 0.0 || y1 < 0.0 || x0 > (w - 1) as f64 || y0 > (h - 1) as f64 {
                    continue;
                }
                let xs = x0.floor().max(0.0) as usize;
                let ys = y0.floor().max(0.0) as usize;
                let xe = (x1.ceil().max(0.0) as usize).min(w - 1);
                let ye = (y1.ceil().max(0.0) as usize).min(h - 1);
                for y in ys..=ye {
                    for x in xs..=xe {
                        let p = Point2::new(x as f64, y as f64);
                        if polygon_contains(&occ.polygon, p) {
                            img.set(x, y, occ_textures[*k].sample(occ.inverse.apply(p)));
                        }
                    }
                }
            }

            let gain = scenario.gain(frame);
            let mut rng =
                ChaCha8Rng::seed_from_u64(scenario.rng_seed ^ (frame as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let white = (scenario.noise_sigma > 0.0 && scenario.noise_cell == 0.0)
                .then(|| Normal::new(0.0, scenario.noise_sigma).expect("finite sigma"));
            let field = (scenario.noise_sigma > 0.0 && scenario.noise_cell > 0.0)
                .then(|| ValueNoise::new(rng.next_u64(), scenario.noise_cell, 3));
            let data: Vec<u8> = img
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let mut out = (128.0 + scenario.contrast * (v - 128.0)) * gain;
                    if let Some(n) = &white {
                        out += n.sample(&mut rng);
                    }
                    if let Some(f) = &field {
                        let (x, y) = ((i % w) as f64, (i / w) as f64);
                        out += 4.0 * scenario.noise_sigma * (f.value(x, y) - 0.5);
                    }
                    out.round().clamp(0.0, 255.0) as u8
                })
                .collect();
            let frame_img = GrayImage::from_u8(w, h, &data).expect("dimensions fixed above");

            let mask = grid_points(&b, grid_side)
                .iter()
                .map(|&p| occluders.iter().any(|(_, o)| polygon_contains(&o.polygon, p)))
                .collect();
            (frame_img, mask)
        })
        .collect();

    let (frames, masks) = rendered.into_iter().unzip();
    Ok((
        frames,
        SynthTruth {
            boxes,
            grid_side,
            masks,
        },
    ))
}
