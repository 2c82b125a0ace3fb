//! Lane-parallel inner loops of the flow solver.
//!
//! Each kernel has an AVX build and a portable build. Both perform the same
//! single-precision operations per lane in the same order and fold the lanes
//! identically, so their results agree bitwise.

pub(super) const LANES: usize = 8;

fn fold(a: [f32; LANES]) -> f64 {
    let h: [f32; 4] = std::array::from_fn(|l| a[l] + a[l + 4]);
    ((h[0] + h[2]) + (h[1] + h[3])) as f64
}

#[cfg(target_arch = "x86_64")]
#[inline(always)]
fn has_avx() -> bool {
    std::arch::is_x86_feature_detected!("avx")
}

/// Bilinear resampling of a `rows x cols` block of a raster with row length
/// `w`, whose top-left tap is `data[origin]`: `out[j * stride + i]` receives
/// `w00 p(i, j) + w10 p(i+1, j) + w01 p(i, j+1) + w11 p(i+1, j+1)`.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
pub(super) fn blend_window(
    data: &[f32],
    w: usize,
    origin: usize,
    rows: usize,
    cols: usize,
    weights: [f32; 4],
    out: &mut [f32],
    stride: usize,
) {
    if rows == 0 || cols == 0 {
        return;
    }
    assert!(cols < w && stride >= cols && origin + rows * w + cols < data.len());
    assert!(out.len() >= (rows - 1) * stride + cols);
    #[cfg(target_arch = "x86_64")]
    if cols >= LANES && has_avx() {
        // SAFETY: AVX is present and every index was bounds-checked above.
        unsafe { avx::blend_window(data, w, origin, rows, cols, weights, out, stride) };
        return;
    }
    portable::blend_window(data, w, origin, rows, cols, weights, out, stride)
}

/// `(sum (t - w) x, sum (t - w) y)`; all four slices share one length, a
/// multiple of [`LANES`].
#[inline(always)]
pub(super) fn mismatch(t: &[f32], w: &[f32], x: &[f32], y: &[f32]) -> (f64, f64) {
    let n = t.len();
    assert!(n.is_multiple_of(LANES) && w.len() == n && x.len() == n && y.len() == n);
    #[cfg(target_arch = "x86_64")]
    if has_avx() {
        // SAFETY: AVX is present and the lengths were checked above.
        return unsafe { avx::mismatch(t, w, x, y) };
    }
    portable::mismatch(t, w, x, y)
}

/// `(sum x^2, sum x y, sum y^2)` under the same length rules as [`mismatch`].
#[inline(always)]
pub(super) fn structure(x: &[f32], y: &[f32]) -> (f64, f64, f64) {
    let n = x.len();
    assert!(n.is_multiple_of(LANES) && y.len() == n);
    #[cfg(target_arch = "x86_64")]
    if has_avx() {
        // SAFETY: AVX is present and the lengths were checked above.
        return unsafe { avx::structure(x, y) };
    }
    portable::structure(x, y)
}

#[inline(always)]
fn blend1(data: &[f32], k: usize, w: usize, wt: [f32; 4]) -> f32 {
    wt[0] * data[k] + wt[1] * data[k + 1] + wt[2] * data[k + w] + wt[3] * data[k + w + 1]
}

mod portable {
    use super::{blend1, fold, LANES};

    #[allow(clippy::too_many_arguments)]
    pub fn blend_window(
        data: &[f32],
        w: usize,
        origin: usize,
        rows: usize,
        cols: usize,
        wt: [f32; 4],
        out: &mut [f32],
        stride: usize,
    ) {
        for j in 0..rows {
            for i in 0..cols {
                out[j * stride + i] = blend1(data, origin + j * w + i, w, wt);
            }
        }
    }

    pub fn mismatch(t: &[f32], w: &[f32], x: &[f32], y: &[f32]) -> (f64, f64) {
        let (mut ax, mut ay) = ([0.0f32; LANES], [0.0f32; LANES]);
        for k in 0..t.len() {
            let l = k % LANES;
            let e = t[k] - w[k];
            ax[l] += e * x[k];
            ay[l] += e * y[k];
        }
        (fold(ax), fold(ay))
    }

    pub fn structure(x: &[f32], y: &[f32]) -> (f64, f64, f64) {
        let (mut xx, mut xy, mut yy) = ([0.0f32; LANES], [0.0f32; LANES], [0.0f32; LANES]);
        for k in 0..x.len() {
            let l = k % LANES;
            xx[l] += x[k] * x[k];
            xy[l] += x[k] * y[k];
            yy[l] += y[k] * y[k];
        }
        (fold(xx), fold(xy), fold(yy))
    }
}

#[cfg(target_arch = "x86_64")]
mod avx {
    use super::{fold, LANES};
    use std::arch::x86_64::*;

    #[inline(always)]
    unsafe fn spill(v: __m256) -> [f32; LANES] {
        let mut out = [0.0f32; LANES];
        _mm256_storeu_ps(out.as_mut_ptr(), v);
        out
    }

    // The last chunk of each row is realigned to end at `cols`, so columns
    // may be written twice with the same value and no scalar tail remains.
    #[target_feature(enable = "avx")]
    #[allow(clippy::too_many_arguments)]
    pub unsafe fn blend_window(
        data: &[f32],
        w: usize,
        origin: usize,
        rows: usize,
        cols: usize,
        wt: [f32; 4],
        out: &mut [f32],
        stride: usize,
    ) {
        let (w00, w10) = (_mm256_set1_ps(wt[0]), _mm256_set1_ps(wt[1]));
        let (w01, w11) = (_mm256_set1_ps(wt[2]), _mm256_set1_ps(wt[3]));
        let (src, dst) = (data.as_ptr(), out.as_mut_ptr());
        for j in 0..rows {
            let p0 = src.add(origin + j * w);
            let p1 = p0.add(w);
            let po = dst.add(j * stride);
            let mut i = 0;
            loop {
                let s = _mm256_mul_ps(w00, _mm256_loadu_ps(p0.add(i)));
                let s = _mm256_add_ps(s, _mm256_mul_ps(w10, _mm256_loadu_ps(p0.add(i + 1))));
                let s = _mm256_add_ps(s, _mm256_mul_ps(w01, _mm256_loadu_ps(p1.add(i))));
                let s = _mm256_add_ps(s, _mm256_mul_ps(w11, _mm256_loadu_ps(p1.add(i + 1))));
                _mm256_storeu_ps(po.add(i), s);
                if i + LANES == cols {
                    break;
                }
                i = (i + LANES).min(cols - LANES);
            }
        }
    }

    #[target_feature(enable = "avx")]
    pub unsafe fn mismatch(t: &[f32], w: &[f32], x: &[f32], y: &[f32]) -> (f64, f64) {
        let (mut ax, mut ay) = (_mm256_setzero_ps(), _mm256_setzero_ps());
        let mut k = 0;
        while k < t.len() {
            let e = _mm256_sub_ps(_mm256_loadu_ps(t.as_ptr().add(k)), _mm256_loadu_ps(w.as_ptr().add(k)));
            ax = _mm256_add_ps(ax, _mm256_mul_ps(e, _mm256_loadu_ps(x.as_ptr().add(k))));
            ay = _mm256_add_ps(ay, _mm256_mul_ps(e, _mm256_loadu_ps(y.as_ptr().add(k))));
            k += LANES;
        }
        (fold(spill(ax)), fold(spill(ay)))
    }

    #[target_feature(enable = "avx")]
    pub unsafe fn structure(x: &[f32], y: &[f32]) -> (f64, f64, f64) {
        let (mut xx, mut xy, mut yy) = (_mm256_setzero_ps(), _mm256_setzero_ps(), _mm256_setzero_ps());
        let mut k = 0;
        while k < x.len() {
            let vx = _mm256_loadu_ps(x.as_ptr().add(k));
            let vy = _mm256_loadu_ps(y.as_ptr().add(k));
            xx = _mm256_add_ps(xx, _mm256_mul_ps(vx, vx));
            xy = _mm256_add_ps(xy, _mm256_mul_ps(vx, vy));
            yy = _mm256_add_ps(yy, _mm256_mul_ps(vy, vy));
            k += LANES;
        }
        (fold(spill(xx)), fold(spill(xy)), fold(spill(yy)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vecs(n: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-300.0f32..300.0, n)
    }

    proptest! {
        #[test]
        fn reductions_match_portable_bitwise(chunks in 1usize..6, v in vecs(4 * 40)) {
            let n = chunks * LANES;
            let s: Vec<&[f32]> = v.chunks(40).map(|c| &c[..n]).collect();
            let a = mismatch(s[0], s[1], s[2], s[3]);
            let b = portable::mismatch(s[0], s[1], s[2], s[3]);
            prop_assert_eq!((a.0.to_bits(), a.1.to_bits()), (b.0.to_bits(), b.1.to_bits()));
            let a = structure(s[2], s[3]);
            let b = portable::structure(s[2], s[3]);
            prop_assert_eq!(
                (a.0.to_bits(), a.1.to_bits(), a.2.to_bits()),
                (b.0.to_bits(), b.1.to_bits(), b.2.to_bits())
            );
        }

        #[test]
        fn blend_matches_portable_bitwise(
            raster in vecs(20 * 10),
            rows in 1usize..9,
            cols in 1usize..19,
            origin in 0usize..20,
            fx in 0.0f32..1.0,
            fy in 0.0f32..1.0,
        ) {
            let origin = origin.min(19 - cols);
            let wts = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
            let (mut o1, mut o2) = (vec![0.0; rows * 24], vec![0.0; rows * 24]);
            blend_window(&raster, 20, origin, rows, cols, wts, &mut o1, 24);
            portable::blend_window(&raster, 20, origin, rows, cols, wts, &mut o2, 24);
            prop_assert!(o1.iter().zip(&o2).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn sums_match_f64_reference() {
        let x: Vec<f32> = (0..32).map(|i| (i as f32 * 0.37).sin()).collect();
        let y: Vec<f32> = (0..32).map(|i| (i as f32 * 0.11).cos()).collect();
        let (xx, xy, yy) = structure(&x, &y);
        let r = |f: &dyn Fn(usize) -> f64| (0..32).map(f).sum::<f64>();
        assert!((xx - r(&|i| (x[i] * x[i]) as f64)).abs() < 1e-5);
        assert!((xy - r(&|i| (x[i] * y[i]) as f64)).abs() < 1e-5);
        assert!((yy - r(&|i| (y[i] * y[i]) as f64)).abs() < 1e-5);
    }
}
