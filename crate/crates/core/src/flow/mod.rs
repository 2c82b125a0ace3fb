//! Iterative pyramidal Lucas-Kanade point tracking with forward-backward
//! consistency filtering.

use rayon::prelude::*;

use crate::image::{GrayImage, ImagePyramid, Point2};

mod kernels;

use kernels::{blend_window, mismatch, structure, LANES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    /// The LK window is `(2 * window_half + 1)^2` pixels at every level.
    pub window_half: usize,
    pub max_iterations: usize,
    /// Iteration stops once the update is shorter than this (pixels).
    pub convergence_eps: f64,
    /// Lower bound on the smaller eigenvalue of the per-pixel spatial
    /// gradient matrix.
    pub min_eigen_threshold: f64,
    /// Forward-backward error gate (pixels).
    pub fb_threshold: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 2,
            window_half: 7,
            max_iterations: 20,
            convergence_eps: 0.01,
            min_eigen_threshold: 1e-4,
            fb_threshold: 1.5,
        }
    }
}

impl FlowParams {
    /// Window half-size for a target of the given size: a third of the
    /// smaller side, clamped to `[min_half, max_half]`.
    pub fn window_half_for(width: f64, height: f64, min_half: usize, max_half: usize) -> usize {
        let half = (width.min(height) / 3.0 / 2.0).round().max(0.0) as usize;
        half.clamp(min_half, max_half)
    }
}

/// Why a point could not be tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LostCause {
    OutOfBounds,
    Degenerate,
    Diverged,
    /// The iteration budget ran out at the finest level.
    NotConverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchStatus {
    Matched,
    Unmatched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMatch {
    pub src: Point2,
    /// Forward-tracked position; equals `src` when the forward track was lost.
    pub dst: Point2,
    /// `|src - backtrack(dst)|`, infinite when either direction was lost.
    pub fb_error: f64,
    pub status: MatchStatus,
}

impl FlowMatch {
    pub fn is_matched(&self) -> bool {
        self.status == MatchStatus::Matched
    }
}

/// A square window sampled at a sub-pixel center. All samples share the same
/// bilinear weights, so the window reduces to integer reads.
struct Window {
    x0: isize,
    y0: isize,
    fx: f64,
    fy: f64,
}

impl Window {
    fn at(center: Point2, half: isize) -> Self {
        let ox = center.x - half as f64;
        let oy = center.y - half as f64;
        let (xf, yf) = (ox.floor(), oy.floor());
        Self {
            x0: xf as isize,
            y0: yf as isize,
            fx: ox - xf,
            fy: oy - yf,
        }
    }

    /// Samples `side x side` values starting at the window origin from a
    /// `w x h` single-precision raster into rows of length `stride`.
    #[inline(always)]
    fn sample(&self, data: &[f32], w: usize, h: usize, side: usize, stride: usize, out: &mut [f32]) {
        let (fx, fy) = (self.fx as f32, self.fy as f32);
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let inside = self.x0 >= 0
            && self.y0 >= 0
            && self.x0 + (side as isize) < w as isize
            && self.y0 + (side as isize) < h as isize;
        if inside {
            let origin = self.y0 as usize * w + self.x0 as usize;
            blend_window(data, w, origin, side, side, [w00, w10, w01, w11], out, stride);
        } else {
            let at = |x: isize, y: isize| {
                let xc = x.clamp(0, w as isize - 1) as usize;
                let yc = y.clamp(0, h as isize - 1) as usize;
                data[yc * w + xc]
            };
            for j in 0..side {
                let y = self.y0 + j as isize;
                for i in 0..side {
                    let x = self.x0 + i as isize;
                    out[j * stride + i] =
                        w00 * at(x, y) + w10 * at(x + 1, y) + w01 * at(x, y + 1) + w11 * at(x + 1, y + 1);
                }
            }
        }
    }
}

fn window_inside(img: &GrayImage, c: Point2, half: f64) -> bool {
    c.is_finite()
        && c.x - half >= 0.0
        && c.y - half >= 0.0
        && c.x + half <= (img.width() - 1) as f64
        && c.y + half <= (img.height() - 1) as f64
}

/// Per-thread working buffers for [`track_point`].
#[derive(Default)]
struct Scratch {
    patch: Vec<f32>,
    templ: Vec<f32>,
    gx: Vec<f32>,
    gy: Vec<f32>,
    warped: Vec<f32>,
}

impl Scratch {
    /// Sizes the buffers for a `side x side` window. Rows of the window
    /// buffers are padded to a whole number of lanes; padding stays zero.
    fn fit(&mut self, side: usize) -> usize {
        let stride = side.div_ceil(LANES) * LANES;
        let ext = side + 2;
        self.patch.resize(ext * ext, 0.0);
        for v in [&mut self.templ, &mut self.gx, &mut self.gy, &mut self.warped] {
            if v.len() != side * stride {
                v.clear();
                v.resize(side * stride, 0.0);
            }
        }
        stride
    }
}

/// Tracks `p` from `prev` into `next`, coarse to fine.
pub fn track_point(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    p: Point2,
    params: &FlowParams,
) -> Result<Point2, LostCause> {
    track_point_with(prev, next, p, params, &mut Scratch::default())
}

fn track_point_with(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    p: Point2,
    params: &FlowParams,
    scratch: &mut Scratch,
) -> Result<Point2, LostCause> {
    let levels = params.pyramid_levels.min(prev.len()).min(next.len()).max(1);
    let half = params.window_half as isize;
    let side = 2 * params.window_half + 1;
    let n = side * side;
    // template patch carries a one-pixel margin for central differences
    let ext = side + 2;
    let stride = scratch.fit(side);
    let Scratch {
        patch,
        templ,
        gx,
        gy,
        warped,
    } = scratch;

    let mut guess = Point2::default();
    for level in (0..levels).rev() {
        let scale = 1.0 / (1u64 << level) as f64;
        let pl = p * scale;
        let prev_img = prev.level(level);
        let next_img = next.level(level);
        if !window_inside(prev_img, pl, half as f64) {
            return Err(LostCause::OutOfBounds);
        }

        let (pw, ph) = (prev_img.width(), prev_img.height());
        let (nw, nh) = (next_img.width(), next_img.height());
        let (prev_px, next_px) = (prev.level_f32(level), next.level_f32(level));
        Window::at(pl, half + 1).sample(prev_px, pw, ph, ext, ext, patch);
        for j in 0..side {
            let row = |r: usize, from: usize| &patch[r * ext + from..r * ext + from + side];
            let (left, centre, right) = (row(j + 1, 0), row(j + 1, 1), row(j + 1, 2));
            let (up, down) = (row(j, 1), row(j + 2, 1));
            let k = j * stride;
            templ[k..k + side].copy_from_slice(centre);
            for ((d, l), r) in gx[k..k + side].iter_mut().zip(left).zip(right) {
                *d = 0.5 * (r - l);
            }
            for ((d, u), w) in gy[k..k + side].iter_mut().zip(up).zip(down) {
                *d = 0.5 * (w - u);
            }
        }
        let (gxx, gxy, gyy) = structure(gx, gy);
        let inv_n = 1.0 / n as f64;
        let (a, b, c) = (gxx * inv_n, gxy * inv_n, gyy * inv_n);
        let min_eig = 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
        if min_eig.is_nan() || min_eig < params.min_eigen_threshold {
            return Err(LostCause::Degenerate);
        }
        let det = gxx * gyy - gxy * gxy;

        let mut nu = Point2::default();
        let mut converged = false;
        for _ in 0..params.max_iterations {
            let q = pl + guess + nu;
            if !window_inside(next_img, q, half as f64) {
                return Err(LostCause::OutOfBounds);
            }
            Window::at(q, half).sample(next_px, nw, nh, side, stride, warped);
            let (bx, by) = mismatch(templ, warped, gx, gy);
            let step = Point2::new((gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det);
            if !step.is_finite() {
                return Err(LostCause::Diverged);
            }
            nu = nu + step;
            if step.norm() < params.convergence_eps {
                converged = true;
                break;
            }
        }
        // Coarse levels only seed the next one; an unsettled final level
        // means the window found no consistent match.
        if level == 0 && !converged {
            return Err(LostCause::NotConverged);
        }
        guess = if level > 0 { (guess + nu) * 2.0 } else { guess + nu };
    }

    let out = p + guess;
    if !out.is_finite() {
        return Err(LostCause::Diverged);
    }
    if !next.base().contains(out) {
        return Err(LostCause::OutOfBounds);
    }
    Ok(out)
}

/// Forward then backward tracking of every point; points whose round trip
/// misses by more than the FB threshold, or that are lost in either
/// direction, are reported unmatched.
pub fn track_with_fb(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    points: &[Point2],
    params: &FlowParams,
) -> Vec<FlowMatch> {
    points
        .par_iter()
        .with_min_len(8)
        .map_init(Scratch::default, |scratch, &src| {
            let unmatched = |dst| FlowMatch {
                src,
                dst,
                fb_error: f64::INFINITY,
                status: MatchStatus::Unmatched,
            };
            let Ok(dst) = track_point_with(prev, next, src, params, scratch) else {
                return unmatched(src);
            };
            let Ok(back) = track_point_with(next, prev, dst, params, scratch) else {
                return unmatched(dst);
            };
            let fb_error = src.distance(back);
            FlowMatch {
                src,
                dst,
                fb_error,
                status: if fb_error <= params.fb_threshold {
                    MatchStatus::Matched
                } else {
                    MatchStatus::Unmatched
                },
            }
        })
        .collect()
}
