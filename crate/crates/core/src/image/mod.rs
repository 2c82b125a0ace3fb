//! Grayscale rasters, sub-pixel sampling, gradients and pyramids.
//!
//! Coordinates put pixel centers on integer positions with the origin at the
//! top-left pixel; `x` grows rightward and `y` downward.

mod pnm;
mod pyramid;

use std::ops::{Add, Mul, Sub};
use std::path::PathBuf;

use thiserror::Error;

pub use pnm::{list_frames, load_frame, load_sequence, save_frame};
pub use pyramid::{build_pyramid, rebuild_pyramid, ImagePyramid};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("{}: file not found", path.display())]
    NotFound { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed image: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },
    #[error("{}: unsupported bit depth (maxval {maxval})", path.display())]
    UnsupportedDepth { path: PathBuf, maxval: u32 },
    #[error("{}: unsupported raster format", path.display())]
    UnsupportedFormat { path: PathBuf },
    #[error("{}: no frames found", path.display())]
    EmptySequence { path: PathBuf },
    #[error("{len} values do not fill a {width}x{height} image")]
    DataLength { width: usize, height: usize, len: usize },
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("non-finite intensity at index {index}")]
    NonFinite { index: usize },
    #[error("sample at ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("{width}x{height} image is too small, need at least {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("{levels} pyramid levels do not fit a {width}x{height} image (smallest side must stay >= {min_side})")]
    PyramidTooDeep {
        levels: usize,
        width: usize,
        height: usize,
        min_side: usize,
    },
}

/// Sub-pixel image position.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Single-channel raster of real intensities, nominally in `[0, 255]`.
#[derive(Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Clone for GrayImage {
    fn clone(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        }
    }

    // keeps the existing allocation
    fn clone_from(&mut self, source: &Self) {
        self.width = source.width;
        self.height = source.height;
        self.data.clone_from(&source.data);
    }
}

impl GrayImage {
    /// A black image.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::DataLength {
                width,
                height,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite { index });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.data[y * width + x] = f(x, y);
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Pixel lookup with replicated borders.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }

    /// Bilinear interpolation between the four surrounding pixel centers.
    pub fn sample_bilinear(&self, p: Point2) -> Result<f64, ImageError> {
        if !self.contains(p) {
            return Err(ImageError::OutOfBounds {
                x: p.x,
                y: p.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.sample_clamped(p))
    }

    /// Bilinear interpolation with replicated borders; never fails for
    /// finite input.
    #[inline]
    pub fn sample_clamped(&self, p: Point2) -> f64 {
        let xf = p.x.floor();
        let yf = p.y.floor();
        let fx = p.x - xf;
        let fy = p.y - yf;
        let x0 = xf as isize;
        let y0 = yf as isize;
        let a = self.get_clamped(x0, y0);
        let b = self.get_clamped(x0 + 1, y0);
        let c = self.get_clamped(x0, y0 + 1);
        let d = self.get_clamped(x0 + 1, y0 + 1);
        let top = a + fx * (b - a);
        let bottom = c + fx * (d - c);
        top + fy * (bottom - top)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Adds `offset` to every pixel.
    pub fn offset(&self, offset: f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v + offset).collect(),
        }
    }

    /// Copies a rectangle; pixels outside the source replicate its border.
    pub fn crop_clamped(&self, x0: isize, y0: isize, width: usize, height: usize) -> GrayImage {
        GrayImage::from_fn(width, height, |x, y| self.get_clamped(x0 + x as isize, y0 + y as isize))
    }

    /// Rounds and clamps every intensity to the 8-bit range.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, ImageError> {
        Self::from_vec(width, height, bytes.iter().map(|&b| f64::from(b)).collect())
    }
}

/// Central-difference spatial derivatives `(dI/dx, dI/dy)` with replicated
/// borders.
pub fn gradient(img: &GrayImage) -> Result<(GrayImage, GrayImage), ImageError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(ImageError::TooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    let mut gx = GrayImage::new(w, h);
    let mut gy = GrayImage::new(w, h);
    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            gx.set(x, y, 0.5 * (img.get(xp, y) - img.get(xm, y)));
            gy.set(x, y, 0.5 * (img.get(x, yp) - img.get(x, ym)));
        }
    }
    Ok((gx, gy))
}
