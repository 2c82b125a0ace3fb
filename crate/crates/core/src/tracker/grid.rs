//! The `m x m` tracking grid: point placement inside a box, per-point
//! states, and binary median/dilation on the grid topology.

use crate::geom::OrientedBox;
use crate::image::Point2;

/// Target sizes (smaller box side, pixels) mapped to the ends of the grid
/// range; sizes in between interpolate linearly.
const SMALL_TARGET: f64 = 40.0;
const LARGE_TARGET: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointState {
    Inlier,
    Outlier,
}

/// Grid side for a target box, interpolated over `[m_min, m_max]`.
pub fn grid_side_for(b: &OrientedBox, m_min: usize, m_max: usize) -> usize {
    let side = b.width.min(b.height);
    let t = ((side - SMALL_TARGET) / (LARGE_TARGET - SMALL_TARGET)).clamp(0.0, 1.0);
    let m = m_min as f64 + t * (m_max as f64 - m_min as f64);
    (m.round() as usize).clamp(m_min, m_max)
}

/// Cell-center points of an `m x m` grid over the box, row-major in
/// box-local coordinates.
pub fn grid_points(b: &OrientedBox, m: usize) -> Vec<Point2> {
    let mut pts = Vec::with_capacity(m * m);
    for r in 0..m {
        let v = (r as f64 + 0.5) / m as f64 - 0.5;
        for c in 0..m {
            let u = (c as f64 + 0.5) / m as f64 - 0.5;
            pts.push(b.local_to_image(u, v));
        }
    }
    pts
}

/// Per-point inlier/outlier labels on the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridStates {
    side: usize,
    states: Vec<PointState>,
}

impl GridStates {
    pub fn all_inlier(side: usize) -> Self {
        Self {
            side,
            states: vec![PointState::Inlier; side * side],
        }
    }

    pub fn from_states(side: usize, states: Vec<PointState>) -> Self {
        assert_eq!(states.len(), side * side, "grid needs side^2 states");
        Self { side, states }
    }

    /// Inlier wherever `mask` is set, outlier elsewhere.
    pub fn from_inlier_mask(side: usize, mask: &[bool]) -> Self {
        Self::from_states(
            side,
            mask.iter()
                .map(|&m| if m { PointState::Inlier } else { PointState::Outlier })
                .collect(),
        )
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, index: usize) -> PointState {
        self.states[index]
    }

    pub fn set(&mut self, index: usize, state: PointState) {
        self.states[index] = state;
    }

    pub fn states(&self) -> &[PointState] {
        &self.states
    }

    pub fn is_inlier(&self, index: usize) -> bool {
        self.states[index] == PointState::Inlier
    }

    pub fn inlier_count(&self) -> usize {
        self.states.iter().filter(|&&s| s == PointState::Inlier).count()
    }

    pub fn outlier_count(&self) -> usize {
        self.len() - self.inlier_count()
    }

    pub fn outlier_ratio(&self) -> f64 {
        self.outlier_count() as f64 / self.len() as f64
    }
}

/// 3x3 binary median (majority of nine) with replicated grid borders.
pub fn median3x3(mask: &[bool], side: usize) -> Vec<bool> {
    debug_assert_eq!(mask.len(), side * side);
    let last = side as isize - 1;
    let at = |r: isize, c: isize| mask[(r.clamp(0, last) * side as isize + c.clamp(0, last)) as usize];
    let mut out = vec![false; mask.len()];
    for r in 0..side as isize {
        for c in 0..side as isize {
            let mut ones = 0;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    ones += at(r + dr, c + dc) as u32;
                }
            }
            out[(r * side as isize + c) as usize] = ones >= 5;
        }
    }
    out
}

/// 3x3 binary dilation; neighbors outside the grid are ignored.
pub fn dilate3x3(mask: &[bool], side: usize) -> Vec<bool> {
    debug_assert_eq!(mask.len(), side * side);
    let mut out = vec![false; mask.len()];
    for r in 0..side {
        for c in 0..side {
            if !mask[r * side + c] {
                continue;
            }
            for rr in r.saturating_sub(1)..=(r + 1).min(side - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(side - 1) {
                    out[rr * side + cc] = true;
                }
            }
        }
    }
    out
}
