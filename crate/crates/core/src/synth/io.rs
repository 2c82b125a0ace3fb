//! On-disk layout of a generated sequence.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Scenario, SynthTruth};
use crate::eval::GroundTruth;
use crate::image::{save_frame, GrayImage, ImageError};

/// Writes `frame_NNNN.pgm` for every frame, `groundtruth.txt` (`x,y,w,h,angle`
/// per line), the scenario as `scenario.txt`, and `occlusion.txt` with one
/// `frame,covered_fraction,mask` row per frame, the mask a row-major string
/// of `0`/`1` over the nominal grid.
pub fn write_sequence(
    dir: impl AsRef<Path>,
    scenario: &Scenario,
    frames: &[GrayImage],
    truth: &SynthTruth,
) -> Result<(), ImageError> {
    let dir = dir.as_ref();
    let io = |source: std::io::Error| ImageError::Io {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    for (k, f) in frames.iter().enumerate() {
        save_frame(dir.join(format!("frame_{k:04}.pgm")), f)?;
    }
    let gt = GroundTruth::new(truth.boxes.iter().map(|b| Some(*b)).collect());
    fs::write(dir.join("groundtruth.txt"), gt.to_text()).map_err(io)?;
    fs::write(dir.join("scenario.txt"), scenario.to_text()).map_err(io)?;
    let mut occ = format!("# grid_side={}\n", truth.grid_side);
    for (k, mask) in truth.masks.iter().enumerate() {
        let bits: String = mask.iter().map(|&c| if c { '1' } else { '0' }).collect();
        let _ = writeln!(occ, "{k},{:.6},{bits}", truth.covered_fraction(k));
    }
    fs::write(dir.join("occlusion.txt"), occ).map_err(io)?;
    Ok(())
}
