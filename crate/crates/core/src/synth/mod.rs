//! Deterministic synthetic sequences with exact ground truth.

mod io;
mod render;
mod scenario;
mod suite;
pub mod texture;

pub use io::write_sequence;
pub use render::{generate, polygon_contains, SynthTruth};
pub use scenario::{cumulative_poses, OccluderSpec, Scenario, ScenarioError, TargetSpec};
pub use suite::{noise_scenario, runtime_scenario, standard_suite, translation_scenario};
