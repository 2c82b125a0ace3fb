use super::{GrayImage, ImageError};

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Coarse-to-fine image levels; level 0 is the input and every further level
/// halves both dimensions (rounded down).
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    levels: Vec<GrayImage>,
    /// Single-precision copies of the levels for the flow kernels.
    single: Vec<Vec<f32>>,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &GrayImage {
        &self.levels[k]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn base(&self) -> &GrayImage {
        &self.levels[0]
    }

    pub(crate) fn level_f32(&self, k: usize) -> &[f32] {
        &self.single[k]
    }
}

/// Builds `levels` levels, low-passing with the separable 5-tap binomial
/// kernel before each 2x decimation. Fails if the smallest level would have a
/// side shorter than `min_side`.
pub fn build_pyramid(img: &GrayImage, levels: usize, min_side: usize) -> Result<ImagePyramid, ImageError> {
    rebuild_pyramid(img, levels, min_side, None)
}

/// Same as [`build_pyramid`], but recycles the buffers of `spare`. Frame-rate
/// callers save the allocation and first-touch cost of fresh level buffers.
pub fn rebuild_pyramid(
    img: &GrayImage,
    levels: usize,
    min_side: usize,
    spare: Option<ImagePyramid>,
) -> Result<ImagePyramid, ImageError> {
    let too_deep = || ImageError::PyramidTooDeep {
        levels,
        width: img.width(),
        height: img.height(),
        min_side,
    };
    if levels == 0 {
        return Err(too_deep());
    }
    let shrink = 1usize << (levels - 1);
    let (w, h) = (img.width() / shrink, img.height() / shrink);
    if w < min_side.max(1) || h < min_side.max(1) {
        return Err(too_deep());
    }

    let (old, old_single) = spare.map(|p| (p.levels, p.single)).unwrap_or_default();
    let mut old = old.into_iter();
    let mut scratch = Vec::new();
    let mut out: Vec<GrayImage> = Vec::with_capacity(levels);
    let mut base = old.next().unwrap_or_else(|| GrayImage::new(1, 1));
    base.clone_from(img);
    out.push(base);
    for _ in 1..levels {
        let mut next = old.next().unwrap_or_else(|| GrayImage::new(1, 1));
        downsample_into(out.last().unwrap(), &mut next, &mut scratch);
        out.push(next);
    }
    let mut single = old_single;
    single.resize_with(levels, Vec::new);
    for (dst, level) in single.iter_mut().zip(&out) {
        dst.clear();
        dst.extend(level.data().iter().map(|&v| v as f32));
    }
    Ok(ImagePyramid { levels: out, single })
}

/// Smooth-then-decimate into `dst`; only the retained samples are filtered.
fn downsample_into(src: &GrayImage, dst: &mut GrayImage, rows: &mut Vec<f64>) {
    let (sw, sh) = (src.width(), src.height());
    let (dw, dh) = (sw / 2, sh / 2);
    let last_x = sw as isize - 1;

    // Horizontal pass on every source row, even columns only.
    rows.clear();
    rows.resize(dw * sh, 0.0);
    let data = src.data();
    for y in 0..sh {
        let row = &data[y * sw..(y + 1) * sw];
        let out = &mut rows[y * dw..(y + 1) * dw];
        for (i, o) in out.iter_mut().enumerate() {
            let cx = 2 * i as isize;
            if cx >= 2 && cx + 2 <= last_x {
                let c = cx as usize;
                *o = BINOMIAL[0] * row[c - 2]
                    + BINOMIAL[1] * row[c - 1]
                    + BINOMIAL[2] * row[c]
                    + BINOMIAL[3] * row[c + 1]
                    + BINOMIAL[4] * row[c + 2];
            } else {
                *o = BINOMIAL
                    .iter()
                    .enumerate()
                    .map(|(k, wgt)| wgt * row[(cx + k as isize - 2).clamp(0, last_x) as usize])
                    .sum();
            }
        }
    }

    // Vertical pass at even rows.
    let last_y = sh as isize - 1;
    dst.width = dw;
    dst.height = dh;
    dst.data.clear();
    dst.data.resize(dw * dh, 0.0);
    for (j, d) in dst.data.chunks_exact_mut(dw).enumerate() {
        let cy = 2 * j as isize;
        let r: [&[f64]; 5] = std::array::from_fn(|k| {
            let ty = (cy + k as isize - 2).clamp(0, last_y) as usize;
            &rows[ty * dw..(ty + 1) * dw]
        });
        for (i, v) in d.iter_mut().enumerate() {
            *v = BINOMIAL[0] * r[0][i]
                + BINOMIAL[1] * r[1][i]
                + BINOMIAL[2] * r[2][i]
                + BINOMIAL[3] * r[3][i]
                + BINOMIAL[4] * r[4][i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Full-resolution smoothing with an explicit 2-D kernel, then decimation.
    fn reference_level(src: &GrayImage) -> GrayImage {
        let k = [1.0, 4.0, 6.0, 4.0, 1.0];
        let (w, h) = (src.width() as isize, src.height() as isize);
        let mut smooth = GrayImage::new(src.width(), src.height());
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -2..=2isize {
                    for dx in -2..=2isize {
                        let wgt = k[(dx + 2) as usize] * k[(dy + 2) as usize] / 256.0;
                        acc += wgt * src.get_clamped(x + dx, y + dy);
                    }
                }
                smooth.set(x as usize, y as usize, acc);
            }
        }
        GrayImage::from_fn(src.width() / 2, src.height() / 2, |x, y| smooth.get(2 * x, 2 * y))
    }

    #[test]
    fn single_level_is_input() {
        let img = GrayImage::from_fn(10, 7, |x, y| (x * 3 + y) as f64);
        let pyr = build_pyramid(&img, 1, 1).unwrap();
        assert_eq!(pyr.len(), 1);
        assert_eq!(pyr.base(), &img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = GrayImage::from_fn(33, 20, |_, _| 77.0);
        let pyr = build_pyramid(&img, 3, 1).unwrap();
        for level in pyr.levels() {
            assert!(level.data().iter().all(|&v| (v - 77.0).abs() < 1e-12));
        }
    }

    #[test]
    fn level_dimensions_halve_rounding_down() {
        let img = GrayImage::new(37, 21);
        let pyr = build_pyramid(&img, 3, 1).unwrap();
        let dims: Vec<_> = pyr.levels().iter().map(|l| (l.width(), l.height())).collect();
        assert_eq!(dims, vec![(37, 21), (18, 10), (9, 5)]);
    }

    #[test]
    fn ramp_level_matches_brute_force() {
        let img = GrayImage::from_fn(8, 8, |x, y| (x as f64) * 10.0 + y as f64);
        let pyr = build_pyramid(&img, 2, 1).unwrap();
        let want = reference_level(&img);
        for (a, b) in pyr.level(1).data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_sized_random_level_matches_brute_force() {
        let mut s = 12345u64;
        let img = GrayImage::from_fn(23, 15, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 56) as f64
        });
        let pyr = build_pyramid(&img, 2, 1).unwrap();
        let want = reference_level(&img);
        for (a, b) in pyr.level(1).data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn recycled_buffers_give_identical_levels() {
        let a = GrayImage::from_fn(41, 29, |x, y| ((x * 7 + y * 13) % 31) as f64);
        let b = GrayImage::from_fn(64, 48, |x, y| ((x * 5 + y * 3) % 17) as f64);
        let fresh = build_pyramid(&a, 3, 1).unwrap();
        let spare = build_pyramid(&b, 3, 1).unwrap();
        let reused = rebuild_pyramid(&a, 3, 1, Some(spare)).unwrap();
        assert_eq!(fresh.levels(), reused.levels());
        let shallow = rebuild_pyramid(&b, 2, 1, Some(fresh)).unwrap();
        assert_eq!(shallow.levels(), build_pyramid(&b, 2, 1).unwrap().levels());
    }

    #[test]
    fn too_deep_is_rejected() {
        let img = GrayImage::new(16, 16);
        assert!(matches!(
            build_pyramid(&img, 3, 5),
            Err(ImageError::PyramidTooDeep { .. })
        ));
        assert!(build_pyramid(&img, 2, 5).is_ok());
        assert!(build_pyramid(&img, 0, 1).is_err());
    }
}
