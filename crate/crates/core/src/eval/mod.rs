//! Evaluation harness: box overlap, success rate, ground-truth files,
//! timed tracking runs and their reports.

mod overlap;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use overlap::{clip_convex, overlap, polygon_area};

use crate::geom::OrientedBox;
use crate::image::{load_sequence, GrayImage, ImageError, Point2};
use crate::tracker::grid::{grid_points, PointState};
use crate::tracker::{StepOutcome, StepStatus, TrackEvent, Tracker, TrackerConfig, TrackerError, Variant};

/// Success needs an overlap strictly above this.
pub const SUCCESS_OVERLAP: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("box has no area")]
    DegenerateBox,
    #[error("no frame has ground truth")]
    NoEvaluatedFrames,
    #[error("{}: line {line}: {message}", path.display())]
    GroundTruth {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("sequence has {frames} frames but ground truth has {gt} lines")]
    LengthMismatch { frames: usize, gt: usize },
    #[error("sequence needs at least 2 frames, found {0}")]
    TooFewFrames(usize),
    #[error("ground truth of the first frame is absent")]
    MissingInitialBox,
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

/// Per-frame boxes, `None` where the target is absent.
///
/// Text form: one `x,y,w,h` line per frame (top-left corner and size),
/// `NaN,NaN,NaN,NaN` for absent frames. An optional fifth column gives a
/// rotation in radians about the box center.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    boxes: Vec<Option<OrientedBox>>,
}

impl GroundTruth {
    pub fn new(boxes: Vec<Option<OrientedBox>>) -> Self {
        Self { boxes }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn get(&self, frame: usize) -> Option<&OrientedBox> {
        self.boxes.get(frame).and_then(Option::as_ref)
    }

    pub fn boxes(&self) -> &[Option<OrientedBox>] {
        &self.boxes
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, EvalError> {
        let err = |line: usize, message: String| EvalError::GroundTruth {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut boxes = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split([',', ' ', '\t']).filter(|s| !s.is_empty()).collect();
            if fields.len() != 4 && fields.len() != 5 {
                return Err(err(k + 1, format!("expected 4 or 5 fields, found {}", fields.len())));
            }
            let vals = fields
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| err(k + 1, format!("`{f}` is not a number")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if vals[..4].iter().all(|v| v.is_nan()) {
                boxes.push(None);
                continue;
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(err(k + 1, "mixed absent and present values".into()));
            }
            if vals[2] <= 0.0 || vals[3] <= 0.0 {
                return Err(err(k + 1, "width and height must be positive".into()));
            }
            let mut b = OrientedBox::from_xywh(vals[0], vals[1], vals[2], vals[3]);
            if let Some(&angle) = vals.get(4) {
                b.angle = angle;
            }
            boxes.push(Some(b));
        }
        Ok(Self { boxes })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for b in &self.boxes {
            match b {
                None => out.push_str("NaN,NaN,NaN,NaN\n"),
                Some(b) => {
                    let (x, y, w, h) = b.to_xywh();
                    if b.angle == 0.0 {
                        let _ = writeln!(out, "{x},{y},{w},{h}");
                    } else {
                        let _ = writeln!(out, "{x},{y},{w},{h},{}", b.angle);
                    }
                }
            }
        }
        out
    }
}

/// Fraction of evaluated frames (`Some`) whose overlap exceeds one half.
pub fn success_rate(overlaps: &[Option<f64>]) -> Result<f64, EvalError> {
    let evaluated: Vec<f64> = overlaps.iter().flatten().copied().collect();
    if evaluated.is_empty() {
        return Err(EvalError::NoEvaluatedFrames);
    }
    let hits = evaluated.iter().filter(|&&o| o > SUCCESS_OVERLAP).count();
    Ok(hits as f64 / evaluated.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub bbox: OrientedBox,
    pub status: StepStatus,
    pub overlap: Option<f64>,
    pub inliers: usize,
    pub outliers: usize,
    /// Wall time of the tracker step; zero for the initial frame.
    pub step_ms: f64,
}

/// Result of one tracking run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackReport {
    pub sequence: String,
    pub variant: Variant,
    pub frames: Vec<FrameRecord>,
    /// `(frame, event)` in order of occurrence.
    pub events: Vec<(usize, TrackEvent)>,
}

fn status_name(s: StepStatus) -> &'static str {
    match s {
        StepStatus::Ok => "ok",
        StepStatus::Failed => "failed",
    }
}

impl TrackReport {
    pub fn overlaps(&self) -> Vec<Option<f64>> {
        self.frames.iter().map(|f| f.overlap).collect()
    }

    /// Mean overlap over frames with ground truth.
    pub fn mean_accuracy(&self) -> Option<f64> {
        let v: Vec<f64> = self.frames.iter().filter_map(|f| f.overlap).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn success_rate(&self) -> Option<f64> {
        success_rate(&self.overlaps()).ok()
    }

    fn step_times(&self) -> Vec<f64> {
        self.frames.iter().skip(1).map(|f| f.step_ms).collect()
    }

    pub fn mean_step_ms(&self) -> f64 {
        let t = self.step_times();
        if t.is_empty() {
            0.0
        } else {
            t.iter().sum::<f64>() / t.len() as f64
        }
    }

    pub fn median_step_ms(&self) -> f64 {
        let mut t = self.step_times();
        if t.is_empty() {
            return 0.0;
        }
        t.sort_by(f64::total_cmp);
        let n = t.len();
        if n % 2 == 1 {
            t[n / 2]
        } else {
            0.5 * (t[n / 2 - 1] + t[n / 2])
        }
    }

    pub fn fps(&self) -> f64 {
        let m = self.mean_step_ms();
        if m > 0.0 {
            1000.0 / m
        } else {
            0.0
        }
    }

    pub fn failed_frames(&self) -> usize {
        self.frames.iter().filter(|f| f.status == StepStatus::Failed).count()
    }

    /// Tracker output only: `frame,x,y,w,h,angle,status`.
    pub fn boxes_csv(&self) -> String {
        let mut out = String::from("frame,x,y,w,h,angle,status\n");
        for f in &self.frames {
            let (x, y, w, h) = f.bbox.to_xywh();
            let _ = writeln!(
                out,
                "{},{x:.4},{y:.4},{w:.4},{h:.4},{:.6},{}",
                f.frame,
                f.bbox.angle,
                status_name(f.status)
            );
        }
        out
    }

    /// Full per-frame report; `step_ms` is the last column and is dropped
    /// when `timing` is false.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::from("frame,x,y,w,h,angle,status,overlap,inliers,outliers");
        out.push_str(if timing { ",step_ms\n" } else { "\n" });
        for f in &self.frames {
            let (x, y, w, h) = f.bbox.to_xywh();
            let ov = f.overlap.map_or_else(|| "NaN".to_string(), |o| format!("{o:.6}"));
            let _ = write!(
                out,
                "{},{x:.4},{y:.4},{w:.4},{h:.4},{:.6},{},{ov},{},{}",
                f.frame,
                f.bbox.angle,
                status_name(f.status),
                f.inliers,
                f.outliers
            );
            if timing {
                let _ = write!(out, ",{:.4}", f.step_ms);
            }
            out.push('\n');
        }
        out
    }

    /// `key=value` summary block.
    pub fn summary(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |v| format!("{v:.4}"));
        let mut counts = [0usize; 5];
        for (_, e) in &self.events {
            let k = match e {
                TrackEvent::MotionRestoration { .. } => 0,
                TrackEvent::ReferenceRestoration { .. } => 1,
                TrackEvent::DriftCompensated => 2,
                TrackEvent::ReferenceUpdated => 3,
                TrackEvent::OutlierModelAbsent => 4,
            };
            counts[k] += 1;
        }
        let mut out = String::new();
        let _ = writeln!(out, "sequence={}", self.sequence);
        let _ = writeln!(out, "variant={}", self.variant);
        let _ = writeln!(out, "frames={}", self.frames.len());
        let _ = writeln!(out, "failed_frames={}", self.failed_frames());
        let _ = writeln!(out, "mean_accuracy={}", fmt(self.mean_accuracy()));
        let _ = writeln!(out, "success_rate={}", fmt(self.success_rate()));
        let _ = writeln!(out, "mean_step_ms={:.3}", self.mean_step_ms());
        let _ = writeln!(out, "median_step_ms={:.3}", self.median_step_ms());
        let _ = writeln!(out, "fps={:.1}", self.fps());
        let _ = writeln!(out, "motion_restorations={}", counts[0]);
        let _ = writeln!(out, "reference_restorations={}", counts[1]);
        let _ = writeln!(out, "drift_compensations={}", counts[2]);
        let _ = writeln!(out, "reference_updates={}", counts[3]);
        let _ = writeln!(out, "outlier_model_absent={}", counts[4]);
        out
    }
}

/// Tracks `frames` from `init` and, when given, scores every frame against
/// `gt`. `observe` sees each step outcome as it happens.
pub fn track_sequence(
    name: &str,
    frames: &[GrayImage],
    init: OrientedBox,
    gt: Option<&GroundTruth>,
    cfg: &TrackerConfig,
    variant: Variant,
    mut observe: impl FnMut(usize, &StepOutcome),
) -> Result<TrackReport, EvalError> {
    if frames.len() < 2 {
        return Err(EvalError::TooFewFrames(frames.len()));
    }
    if let Some(gt) = gt {
        if gt.len() != frames.len() {
            return Err(EvalError::LengthMismatch {
                frames: frames.len(),
                gt: gt.len(),
            });
        }
    }
    let score = |frame: usize, b: &OrientedBox| -> Result<Option<f64>, EvalError> {
        match gt.and_then(|g| g.get(frame)) {
            Some(truth) => overlap(b, truth).map(Some),
            None => Ok(None),
        }
    };

    let mut tracker = Tracker::init(&frames[0], init, cfg.clone(), variant)?;
    let n = tracker.grid_side().pow(2);
    let mut records = vec![FrameRecord {
        frame: 0,
        bbox: init,
        status: StepStatus::Ok,
        overlap: score(0, &init)?,
        inliers: n,
        outliers: 0,
        step_ms: 0.0,
    }];
    let mut events = Vec::new();
    for f in 1..frames.len() {
        let start = Instant::now();
        let out = tracker.step(&frames[f - 1], &frames[f]);
        let step_ms = start.elapsed().as_secs_f64() * 1e3;
        observe(f, &out);
        records.push(FrameRecord {
            frame: f,
            bbox: out.bbox,
            status: out.status,
            overlap: score(f, &out.bbox)?,
            inliers: out.states.inlier_count(),
            outliers: out.states.outlier_count(),
            step_ms,
        });
        events.extend(out.events.into_iter().map(|e| (f, e)));
    }
    Ok(TrackReport {
        sequence: name.to_string(),
        variant,
        frames: records,
        events,
    })
}

/// Loads a frame directory and its ground truth, initializes from the first
/// ground-truth box and tracks the whole sequence.
pub fn run_benchmark(
    sequence_dir: impl AsRef<Path>,
    gt_path: impl AsRef<Path>,
    cfg: &TrackerConfig,
    variant: Variant,
) -> Result<TrackReport, EvalError> {
    let dir = sequence_dir.as_ref();
    let gt = GroundTruth::load(gt_path)?;
    let frames = load_sequence(dir)?;
    if gt.len() != frames.len() {
        return Err(EvalError::LengthMismatch {
            frames: frames.len(),
            gt: gt.len(),
        });
    }
    let init = *gt.get(0).ok_or(EvalError::MissingInitialBox)?;
    let name = dir
        .file_name()
        .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
    track_sequence(&name, &frames, init, Some(&gt), cfg, variant, |_, _| {})
}

pub const BOX_LEVEL: f64 = 255.0;
pub const INLIER_LEVEL: f64 = 200.0;
pub const OUTLIER_LEVEL: f64 = 30.0;

/// Copy of `frame` with the box outline and one 3x3 mark per grid point
/// (bright for inliers, dark for outliers).
pub fn annotate(frame: &GrayImage, outcome_box: &OrientedBox, states: &[PointState], side: usize) -> GrayImage {
    let mut img = frame.clone();
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut put = |p: Point2, v: f64| {
        let (x, y) = (p.x.round() as isize, p.y.round() as isize);
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.set(x as usize, y as usize, v);
        }
    };
    let corners = outcome_box.corners();
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        let steps = (a.distance(b).ceil() as usize).max(1);
        for s in 0..=steps {
            put(a + (b - a) * (s as f64 / steps as f64), BOX_LEVEL);
        }
    }
    for (p, st) in grid_points(outcome_box, side).into_iter().zip(states) {
        let v = match st {
            PointState::Inlier => INLIER_LEVEL,
            PointState::Outlier => OUTLIER_LEVEL,
        };
        for dy in -1..=1 {
            for dx in -1..=1 {
                put(p + Point2::new(f64::from(dx), f64::from(dy)), v);
            }
        }
    }
    img
}
