//! Model-free visual tracking with concurrently tracked inlier and outlier
//! grid points.
//!
//! The crate bundles the image substrate ([`image`]), pyramidal LK flow
//! ([`flow`]), similarity geometry and robust fitting ([`geom`]), the tracker
//! state machine ([`tracker`]), an evaluation harness ([`eval`]) and a
//! synthetic scene generator with exact ground truth ([`synth`]).

pub mod eval;
pub mod flow;
pub mod geom;
pub mod image;
pub mod synth;
pub mod tracker;

pub use eval::{overlap, run_benchmark, success_rate, track_sequence, GroundTruth, TrackReport};
pub use flow::{track_point, track_with_fb, FlowMatch, FlowParams, MatchStatus};
pub use geom::{OrientedBox, SimilarityTransform};
pub use image::{GrayImage, ImagePyramid, Point2};
pub use tracker::grid::{GridStates, PointState};
pub use tracker::{StepOutcome, StepStatus, TrackEvent, Tracker, TrackerConfig, Variant};
