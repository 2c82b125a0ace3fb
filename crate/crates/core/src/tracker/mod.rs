//! The concurrent inlier/outlier tracker.
//!
//! Every step regenerates an `m x m` grid inside the previous box, tracks it
//! with forward-backward LK, fits one similarity to the matched inliers and
//! another to the matched outliers, updates the per-point states, and then
//! tries to bring outliers back: first from the motion difference of the two
//! populations, then by matching against a stored appearance snapshot.

pub mod grid;
pub mod reference;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{track_with_fb, FlowMatch, FlowParams};
use crate::geom::{
    mahalanobis_motion, ransac_similarity, residual, residual_variance, transform_distance, OrientedBox, PointPair,
    RansacFit, RansacParams, ResidualStats, SimilarityTransform,
};
use crate::image::{build_pyramid, rebuild_pyramid, GrayImage, ImageError, ImagePyramid, Point2};
use grid::{dilate3x3, grid_points, grid_side_for, median3x3, GridStates, PointState};
use reference::{compensate_drift, maybe_update_reference, restore_from_reference, ReferenceModel};

/// Smallest grid the tracker accepts, and the spacing it needs between
/// grid points.
const MIN_GRID: usize = 10;
const MIN_SPACING: f64 = 2.0;

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("invalid tracker config: {0}")]
    Config(String),
    #[error("initial box {x:.1},{y:.1} {w:.1}x{h:.1} is not inside the {width}x{height} frame")]
    BoxOutOfFrame {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        width: usize,
        height: usize,
    },
    #[error("initial box {w:.1}x{h:.1} is too small, each side needs at least {min} px")]
    BoxTooSmall { w: f64, h: f64, min: f64 },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Every tunable of the tracker. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Grid side range, interpolated by target size.
    pub m_range: (usize, usize),
    pub pyramid_levels: usize,
    pub fb_threshold: f64,
    pub k_in: f64,
    pub k_out: f64,
    pub lambda_theta: f64,
    pub d_theta: f64,
    pub alpha: f64,
    pub restore_k_in: f64,
    pub reference_outlier_gate: f64,
    pub reference_change_gate: f64,
    pub ransac_threshold: f64,
    pub ransac_max_iterations: usize,
    pub ransac_min_support: usize,
    pub ransac_min_support_fraction: f64,
    /// Fewest matched flows a population needs before a fit is attempted.
    pub min_matched_flows: usize,
    /// Lower bound on sigma in the residual gate and the per-point ratios.
    pub sigma_floor: f64,
    /// Lower bound on the pooled variance.
    pub variance_floor: f64,
    pub drift_min_support: usize,
    pub drift_support_fraction: f64,
    pub window_half_min: usize,
    pub window_half_max: usize,
    pub lk_max_iterations: usize,
    pub lk_convergence_eps: f64,
    pub lk_min_eigen_threshold: f64,
    pub rng_seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            m_range: (10, 20),
            pyramid_levels: 2,
            fb_threshold: 1.5,
            k_in: 3.0,
            k_out: 3.0,
            lambda_theta: 3.0,
            d_theta: 1.5,
            alpha: 0.3,
            restore_k_in: 3.0,
            reference_outlier_gate: 0.2,
            reference_change_gate: 0.10,
            ransac_threshold: 2.0,
            ransac_max_iterations: 200,
            ransac_min_support: 5,
            ransac_min_support_fraction: 0.15,
            min_matched_flows: 5,
            sigma_floor: 0.5,
            variance_floor: 0.25,
            drift_min_support: 8,
            drift_support_fraction: 0.25,
            window_half_min: 2,
            window_half_max: 15,
            lk_max_iterations: 20,
            lk_convergence_eps: 0.01,
            lk_min_eigen_threshold: 1e-4,
            rng_seed: 0,
        }
    }
}

impl TrackerConfig {
    /// Parses flat `key = value` lines; unspecified keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, TrackerError> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrackerError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        let bad = |msg: &str| Err(TrackerError::Config(msg.to_string()));
        let (lo, hi) = self.m_range;
        if lo < 2 || lo > hi {
            return bad("m_range must satisfy 2 <= min <= max");
        }
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be at least 1");
        }
        let positive = [
            ("fb_threshold", self.fb_threshold),
            ("k_in", self.k_in),
            ("k_out", self.k_out),
            ("lambda_theta", self.lambda_theta),
            ("d_theta", self.d_theta),
            ("restore_k_in", self.restore_k_in),
            ("reference_change_gate", self.reference_change_gate),
            ("ransac_threshold", self.ransac_threshold),
            ("sigma_floor", self.sigma_floor),
            ("variance_floor", self.variance_floor),
            ("lk_convergence_eps", self.lk_convergence_eps),
            ("lk_min_eigen_threshold", self.lk_min_eigen_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(TrackerError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("reference_outlier_gate", self.reference_outlier_gate),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(TrackerError::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        for (name, v) in [
            ("ransac_min_support_fraction", self.ransac_min_support_fraction),
            ("drift_support_fraction", self.drift_support_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(TrackerError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.window_half_min == 0 || self.window_half_min > self.window_half_max {
            return bad("window_half_min must satisfy 1 <= min <= window_half_max");
        }
        if self.ransac_max_iterations == 0 || self.lk_max_iterations == 0 {
            return bad("iteration counts must be at least 1");
        }
        if self.min_matched_flows < 2 {
            return bad("min_matched_flows must be at least 2");
        }
        Ok(())
    }

    fn ransac_params(&self, population: usize) -> RansacParams {
        let frac = (self.ransac_min_support_fraction * population as f64).ceil() as usize;
        RansacParams {
            threshold: self.ransac_threshold,
            max_iterations: self.ransac_max_iterations,
            min_support: self.ransac_min_support.max(frac),
        }
    }

    fn flow_params(&self, window_half: usize) -> FlowParams {
        FlowParams {
            pyramid_levels: self.pyramid_levels,
            window_half,
            max_iterations: self.lk_max_iterations,
            convergence_eps: self.lk_convergence_eps,
            min_eigen_threshold: self.lk_min_eigen_threshold,
            fb_threshold: self.fb_threshold,
        }
    }
}

/// Feature sets: the basic flow tracker, plus concurrent states and motion
/// restoration, plus the reference model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    Basic,
    CotM,
    #[default]
    CotMR,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Basic, Variant::CotM, Variant::CotMR];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Basic => "basic",
            Variant::CotM => "cot-m",
            Variant::CotMR => "cot-mr",
        }
    }

    fn concurrent(self) -> bool {
        self != Variant::Basic
    }

    fn reference(self) -> bool {
        self == Variant::CotMR
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected basic, cot-m or cot-mr)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrackEvent {
    /// The motion-difference gate held; `count` outliers were flipped.
    MotionRestoration {
        count: usize,
        lambda: f64,
        d_star: f64,
    },
    /// `count` outliers were flipped by matching against the reference.
    ReferenceRestoration {
        count: usize,
    },
    DriftCompensated,
    ReferenceUpdated,
    /// No outlier transform could be fitted this frame.
    OutlierModelAbsent,
}

/// Intermediate quantities of one step, for inspection and tests.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepDiagnostics {
    pub matched: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub t_in: Option<SimilarityTransform>,
    pub t_out: Option<SimilarityTransform>,
    pub sigma_in: f64,
    pub sigma_out: f64,
    /// Motion-difference measures, when both transforms exist.
    pub lambda: Option<f64>,
    pub d_star: Option<f64>,
    /// States right after the smoothing update, before any restoration.
    pub updated_states: Option<GridStates>,
    pub reference_matches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub bbox: OrientedBox,
    pub states: GridStates,
    pub status: StepStatus,
    pub events: Vec<TrackEvent>,
    pub diagnostics: StepDiagnostics,
}

/// Keeps the flows whose residual under `t` is below `k * max(sigma, floor)`.
pub fn filter_by_residual(
    pairs: &[PointPair],
    t: &SimilarityTransform,
    k: f64,
    sigma: f64,
    sigma_floor: f64,
) -> Vec<bool> {
    let gate = k * sigma.max(sigma_floor);
    pairs.iter().map(|p| residual(p, t) < gate).collect()
}

/// State update from the filtered inlier and outlier point sets, given as
/// grid indicators. Outliers win where the smoothed masks overlap.
pub fn update_states(p_in_star: &[bool], p_out_star: &[bool], side: usize, outlier_model_present: bool) -> GridStates {
    let inliers = dilate3x3(&median3x3(p_in_star, side), side);
    if !outlier_model_present {
        return GridStates::from_inlier_mask(side, &inliers);
    }
    let outliers = median3x3(p_out_star, side);
    let mask: Vec<bool> = inliers.iter().zip(&outliers).map(|(&i, &o)| i && !o).collect();
    GridStates::from_inlier_mask(side, &mask)
}

/// Inputs to the motion-difference restoration.
#[derive(Debug, Clone, Copy)]
pub struct MotionEvidence<'a> {
    pub t_in: &'a SimilarityTransform,
    pub t_out: &'a SimilarityTransform,
    pub stats_in: ResidualStats,
    pub stats_out: ResidualStats,
    /// Grid points of the previous frame, all `N` of them.
    pub points: &'a [Point2],
    /// Flows in grid order.
    pub flows: &'a [FlowMatch],
}

/// Measures of the motion-difference gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionGate {
    pub lambda: f64,
    pub d_star: f64,
    pub outlier_ratio: f64,
    pub open: bool,
}

/// Evaluates the gate and, when open, flips every matched outlier that is
/// closer to the inlier motion than to the outlier motion and within
/// `restore_k_in` inlier sigmas of it. Returns the new states, the gate and
/// the number of flips.
pub fn restore_from_motion(
    ev: &MotionEvidence<'_>,
    states: &GridStates,
    cfg: &TrackerConfig,
) -> Option<(GridStates, MotionGate, usize)> {
    let d_star = transform_distance(ev.t_in, ev.t_out, ev.points).ok()?;
    let md = mahalanobis_motion(d_star, &ev.stats_in, &ev.stats_out, cfg.variance_floor).ok()?;
    let outlier_ratio = ev.stats_out.count as f64 / ev.points.len() as f64;
    let open = md.lambda > cfg.lambda_theta && d_star > cfg.d_theta && outlier_ratio > cfg.alpha;
    let gate = MotionGate {
        lambda: md.lambda,
        d_star,
        outlier_ratio,
        open,
    };
    let mut out = states.clone();
    if !open {
        return Some((out, gate, 0));
    }
    let s_in = ev.stats_in.sigma().max(cfg.sigma_floor);
    let s_out = ev.stats_out.sigma().max(cfg.sigma_floor);
    let mut count = 0;
    for (i, f) in ev.flows.iter().enumerate() {
        if !f.is_matched() || states.get(i) != PointState::Outlier {
            continue;
        }
        let pair = (f.src, f.dst);
        let l_in = residual(&pair, ev.t_in) / s_in;
        let l_out = residual(&pair, ev.t_out) / s_out;
        if l_in < l_out && l_in < cfg.restore_k_in {
            out.set(i, PointState::Inlier);
            count += 1;
        }
    }
    Some((out, gate, count))
}

const TAG_IN: u64 = 1;
const TAG_OUT: u64 = 2;
const TAG_DRIFT: u64 = 3;

fn ransac_seed(base: u64, frame: u64, tag: u64) -> u64 {
    base ^ (frame + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Carried state of one tracked target.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    variant: Variant,
    flow: FlowParams,
    side: usize,
    bbox: OrientedBox,
    states: GridStates,
    reference: Option<ReferenceModel>,
    frame_index: u64,
    /// Pyramid of the last `next` frame, reused when it comes back as `prev`.
    cached: Option<ImagePyramid>,
    spare: Option<ImagePyramid>,
}

impl Tracker {
    pub fn init(
        frame: &GrayImage,
        bbox: OrientedBox,
        cfg: TrackerConfig,
        variant: Variant,
    ) -> Result<Self, TrackerError> {
        cfg.validate()?;
        let (x, y, w, h) = bbox.aabb();
        let (fw, fh) = (frame.width() as f64, frame.height() as f64);
        if !bbox.is_valid() || x < 0.0 || y < 0.0 || x + w > fw - 1.0 || y + h > fh - 1.0 {
            return Err(TrackerError::BoxOutOfFrame {
                x,
                y,
                w,
                h,
                width: frame.width(),
                height: frame.height(),
            });
        }
        let min = MIN_GRID as f64 * MIN_SPACING;
        if bbox.width < min || bbox.height < min {
            return Err(TrackerError::BoxTooSmall {
                w: bbox.width,
                h: bbox.height,
                min,
            });
        }
        let side = grid_side_for(&bbox, cfg.m_range.0, cfg.m_range.1);
        let half = FlowParams::window_half_for(bbox.width, bbox.height, cfg.window_half_min, cfg.window_half_max);
        let flow = cfg.flow_params(half);
        let pyramid = build_pyramid(frame, flow.pyramid_levels, 2 * half + 1)?;
        let states = GridStates::all_inlier(side);
        let reference = if variant.reference() {
            Some(ReferenceModel::capture(frame, bbox, states.clone(), &flow)?)
        } else {
            None
        };
        Ok(Self {
            cfg,
            variant,
            flow,
            side,
            bbox,
            states,
            reference,
            frame_index: 0,
            cached: Some(pyramid),
            spare: None,
        })
    }

    pub fn bbox(&self) -> &OrientedBox {
        &self.bbox
    }

    pub fn states(&self) -> &GridStates {
        &self.states
    }

    pub fn reference(&self) -> Option<&ReferenceModel> {
        self.reference.as_ref()
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn grid_side(&self) -> usize {
        self.side
    }

    pub fn flow_params(&self) -> &FlowParams {
        &self.flow
    }

    /// Overrides the carried box, e.g. to inject a known perturbation.
    pub fn set_bbox(&mut self, bbox: OrientedBox) {
        self.bbox = bbox;
    }

    /// Overrides the carried grid states.
    pub fn set_states(&mut self, states: GridStates) {
        assert_eq!(states.side(), self.side, "grid side mismatch");
        self.states = states;
    }

    fn pyramid_for(&mut self, img: &GrayImage) -> Result<ImagePyramid, ImageError> {
        match self.cached.take() {
            Some(p) if p.base() == img => Ok(p),
            _ => rebuild_pyramid(
                img,
                self.flow.pyramid_levels,
                2 * self.flow.window_half + 1,
                self.spare.take(),
            ),
        }
    }

    fn failed(&self, diagnostics: StepDiagnostics) -> StepOutcome {
        StepOutcome {
            bbox: self.bbox,
            states: self.states.clone(),
            status: StepStatus::Failed,
            events: Vec::new(),
            diagnostics,
        }
    }

    /// Fits a similarity to one flow population, or `None` when it is too
    /// small or too poorly supported.
    fn fit(&self, pairs: &[PointPair], tag: u64) -> Option<RansacFit> {
        if pairs.len() < self.cfg.min_matched_flows {
            return None;
        }
        let params = self.cfg.ransac_params(pairs.len());
        ransac_similarity(pairs, &params, ransac_seed(self.cfg.rng_seed, self.frame_index, tag)).ok()
    }

    /// Advances the tracker from `prev` to `next`.
    pub fn step(&mut self, prev: &GrayImage, next: &GrayImage) -> StepOutcome {
        let outcome = self.run_step(prev, next);
        self.frame_index += 1;
        if outcome.status == StepStatus::Ok {
            self.bbox = outcome.bbox;
            self.states = outcome.states.clone();
        }
        outcome
    }

    fn run_step(&mut self, prev: &GrayImage, next: &GrayImage) -> StepOutcome {
        let mut diag = StepDiagnostics::default();
        if prev.width() != next.width() || prev.height() != next.height() {
            return self.failed(diag);
        }
        let (prev_pyr, next_pyr) = match self.pyramid_for(prev) {
            Ok(a) => {
                let spare = self.spare.take();
                match rebuild_pyramid(next, self.flow.pyramid_levels, 2 * self.flow.window_half + 1, spare) {
                    Ok(b) => (a, b),
                    Err(_) => return self.failed(diag),
                }
            }
            Err(_) => return self.failed(diag),
        };

        let points = grid_points(&self.bbox, self.side);
        let flows = track_with_fb(&prev_pyr, &next_pyr, &points, &self.flow);
        self.cached = Some(next_pyr);
        self.spare = Some(prev_pyr);
        diag.matched = flows.iter().filter(|f| f.is_matched()).count();

        let concurrent = self.variant.concurrent();
        let mut idx_in = Vec::new();
        let mut idx_out = Vec::new();
        for (i, f) in flows.iter().enumerate() {
            if !f.is_matched() {
                continue;
            }
            if !concurrent || self.states.is_inlier(i) {
                idx_in.push(i);
            } else {
                idx_out.push(i);
            }
        }
        let pairs = |idx: &[usize]| -> Vec<PointPair> { idx.iter().map(|&i| (flows[i].src, flows[i].dst)).collect() };
        let f_in = pairs(&idx_in);
        let f_out = pairs(&idx_out);
        diag.n_in = f_in.len();
        diag.n_out = f_out.len();

        let Some(fit_in) = self.fit(&f_in, TAG_IN) else {
            return self.failed(diag);
        };
        let t_in = fit_in.transform;
        diag.t_in = Some(t_in);
        let bbox = self.bbox.transform(&t_in);
        if !concurrent {
            return StepOutcome {
                bbox,
                states: self.states.clone(),
                status: StepStatus::Ok,
                events: Vec::new(),
                diagnostics: diag,
            };
        }

        let fit_out = self.fit(&f_out, TAG_OUT);
        let t_out = fit_out.as_ref().map(|f| f.transform);
        diag.t_out = t_out;
        let mut events = Vec::new();

        // Residual spread of each matched population under its own fit. The
        // rejection gate uses the spread of the consensus only, since the
        // labelled population can still contain points that changed motion.
        let gate_sigma = |pairs: &[PointPair], fit: &RansacFit| {
            let support: Vec<PointPair> = fit.support.iter().map(|&k| pairs[k]).collect();
            residual_variance(&support, &fit.transform).map_or(0.0, |s| s.sigma())
        };
        let gate_in = gate_sigma(&f_in, &fit_in);
        let gate_out = fit_out.as_ref().map_or(0.0, |f| gate_sigma(&f_out, f));
        let stats_in = residual_variance(&f_in, &t_in).expect("fit implies pairs");
        let stats_out = t_out
            .map(|t| residual_variance(&f_out, &t).expect("fit implies pairs"))
            .unwrap_or_default();
        diag.sigma_in = stats_in.sigma();
        diag.sigma_out = stats_out.sigma();

        let n = self.side * self.side;
        let mut p_in_star = vec![false; n];
        let keep_in = filter_by_residual(&f_in, &t_in, self.cfg.k_in, gate_in, self.cfg.sigma_floor);
        for (&i, keep) in idx_in.iter().zip(keep_in) {
            p_in_star[i] = keep;
        }
        let mut p_out_star = vec![false; n];
        if let Some(t) = &t_out {
            let keep_out = filter_by_residual(&f_out, t, self.cfg.k_out, gate_out, self.cfg.sigma_floor);
            for (&i, keep) in idx_out.iter().zip(keep_out) {
                p_out_star[i] = keep;
            }
        }
        let mut states = update_states(&p_in_star, &p_out_star, self.side, t_out.is_some());
        diag.updated_states = Some(states.clone());

        match &t_out {
            Some(t_out) => {
                let ev = MotionEvidence {
                    t_in: &t_in,
                    t_out,
                    stats_in,
                    stats_out,
                    points: &points,
                    flows: &flows,
                };
                if let Some((restored, gate, count)) = restore_from_motion(&ev, &states, &self.cfg) {
                    diag.lambda = Some(gate.lambda);
                    diag.d_star = Some(gate.d_star);
                    if gate.open {
                        states = restored;
                        events.push(TrackEvent::MotionRestoration {
                            count,
                            lambda: gate.lambda,
                            d_star: gate.d_star,
                        });
                    }
                }
            }
            None => events.push(TrackEvent::OutlierModelAbsent),
        }

        let mut bbox = bbox;
        if let Some(reference) = &self.reference {
            let (count, matches) = restore_from_reference(reference, &bbox, next, &self.flow, &mut states);
            diag.reference_matches = matches.len();
            if count > 0 {
                events.push(TrackEvent::ReferenceRestoration { count });
            }
            let min_support = self
                .cfg
                .drift_min_support
                .max((self.cfg.drift_support_fraction * reference.inlier_count() as f64).ceil() as usize);
            let ransac = self.cfg.ransac_params(matches.len());
            let seed = ransac_seed(self.cfg.rng_seed, self.frame_index, TAG_DRIFT);
            if let Some((anchored, _)) = compensate_drift(reference, &matches, &ransac, min_support, seed) {
                bbox = anchored;
                events.push(TrackEvent::DriftCompensated);
            }
            if let Some(updated) = maybe_update_reference(
                reference,
                next,
                &bbox,
                &states,
                &self.flow,
                self.cfg.reference_change_gate,
                self.cfg.reference_outlier_gate,
            ) {
                self.reference = Some(updated);
                events.push(TrackEvent::ReferenceUpdated);
            }
        }

        StepOutcome {
            bbox,
            states,
            status: StepStatus::Ok,
            events,
            diagnostics: diag,
        }
    }
}
