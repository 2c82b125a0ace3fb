//! Scenario description and its plain-text file format.
//!
//! ```text
//! # comment
//! name = S1_translation
//! size = 320 240
//! frames = 3
//! rng_seed = 1
//! background_seed = 2
//! noise_sigma = 2
//! noise_cell = 0             # > 0: band-limited noise with this lattice step
//! gain_end = 1
//! contrast = 1
//!
//! [target]
//! seed = 3
//! box = 60 60 100 100        # x y w h of the frame-0 placement
//! 1 0 0 0                    # one "scale rotation tx ty" row per frame
//! 1 0 0.8 0.4
//! 1 0 0.8 0.4
//!
//! [occluder]
//! seed = 9
//! polygon = 0 0; 50 0; 50 40; 0 40
//! active = 1 3               # first frame, one past the last frame
//! 1 0 0 0
//! ...
//! ```
//!
//! Script row `f` is the incremental motion from frame `f - 1` to frame `f`;
//! row 0 moves the initial placement into frame 0.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geom::{OrientedBox, SimilarityTransform};
use crate::image::Point2;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{what} script has {got} rows, expected {expected}")]
    ScriptLength { what: String, got: usize, expected: usize },
    #[error("scenario needs at least one frame")]
    NoFrames,
    #[error("target box leaves the {width}x{height} frame at frame {frame}")]
    TargetLeavesFrame { frame: usize, width: usize, height: usize },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub seed: u64,
    /// Axis-aligned placement before script row 0 is applied.
    pub initial_box: OrientedBox,
    pub script: Vec<SimilarityTransform>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccluderSpec {
    pub seed: u64,
    /// Simple polygon in frame coordinates before script row 0.
    pub polygon: Vec<Point2>,
    pub script: Vec<SimilarityTransform>,
    /// Visible for frames `start..end`.
    pub active: (usize, usize),
}

impl OccluderSpec {
    pub fn is_active(&self, frame: usize) -> bool {
        (self.active.0..self.active.1).contains(&frame)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub rng_seed: u64,
    pub background_seed: u64,
    /// Std-dev of additive Gaussian pixel noise, intensity units.
    pub noise_sigma: f64,
    /// Zero for white noise. Otherwise every frame gets a fresh value-noise
    /// field with this lattice step instead, `4 * noise_sigma * (v - 0.5)`
    /// for `v` in `[0, 1]`.
    pub noise_cell: f64,
    /// Global illumination gain reached at the last frame (linear ramp from 1).
    pub gain_end: f64,
    /// Texture contrast around mid-gray; 0 renders flat gray before noise.
    pub contrast: f64,
    pub target: TargetSpec,
    pub occluders: Vec<OccluderSpec>,
}

/// Cumulative poses `script[f] ∘ ... ∘ script[0]` for every frame.
pub fn cumulative_poses(script: &[SimilarityTransform]) -> Vec<SimilarityTransform> {
    let mut pose = SimilarityTransform::identity();
    script
        .iter()
        .map(|step| {
            pose = step.compose(&pose);
            pose
        })
        .collect()
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.frames == 0 {
            return Err(ScenarioError::NoFrames);
        }
        if self.width < 16 || self.height < 16 {
            return Err(ScenarioError::Invalid("frame smaller than 16x16".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_cell >= 0.0 && self.noise_cell.is_finite()) {
            return Err(ScenarioError::Invalid(
                "noise_sigma and noise_cell must be non-negative".into(),
            ));
        }
        if !self.initial_box_valid() {
            return Err(ScenarioError::Invalid("target box must have positive size".into()));
        }
        check_script("target", &self.target.script, self.frames)?;
        for (k, occ) in self.occluders.iter().enumerate() {
            check_script(&format!("occluder {k}"), &occ.script, self.frames)?;
            if occ.polygon.len() < 3 {
                return Err(ScenarioError::Invalid(format!(
                    "occluder {k} polygon needs 3+ vertices"
                )));
            }
        }
        if self.script_invalid() {
            return Err(ScenarioError::Invalid(
                "script scales must be positive and finite".into(),
            ));
        }
        for (frame, b) in self.target_boxes().iter().enumerate() {
            let (x, y, w, h) = b.aabb();
            if x < 0.0 || y < 0.0 || x + w > self.width as f64 - 1.0 || y + h > self.height as f64 - 1.0 {
                return Err(ScenarioError::TargetLeavesFrame {
                    frame,
                    width: self.width,
                    height: self.height,
                });
            }
        }
        Ok(())
    }

    fn initial_box_valid(&self) -> bool {
        self.target.initial_box.is_valid()
    }

    fn script_invalid(&self) -> bool {
        std::iter::once(&self.target.script)
            .chain(self.occluders.iter().map(|o| &o.script))
            .flatten()
            .any(|t| !t.is_finite())
    }

    /// Ground-truth target box in every frame.
    pub fn target_boxes(&self) -> Vec<OrientedBox> {
        cumulative_poses(&self.target.script)
            .iter()
            .map(|pose| self.target.initial_box.transform(pose))
            .collect()
    }

    /// Gain applied to frame `f`.
    pub fn gain(&self, frame: usize) -> f64 {
        if self.frames <= 1 {
            return 1.0;
        }
        1.0 + (self.gain_end - 1.0) * frame as f64 / (self.frames - 1) as f64
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# cotrack scenario");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "size = {} {}", self.width, self.height);
        let _ = writeln!(s, "frames = {}", self.frames);
        let _ = writeln!(s, "rng_seed = {}", self.rng_seed);
        let _ = writeln!(s, "background_seed = {}", self.background_seed);
        let _ = writeln!(s, "noise_sigma = {}", self.noise_sigma);
        let _ = writeln!(s, "noise_cell = {}", self.noise_cell);
        let _ = writeln!(s, "gain_end = {}", self.gain_end);
        let _ = writeln!(s, "contrast = {}", self.contrast);
        let _ = writeln!(s, "\n[target]");
        let _ = writeln!(s, "seed = {}", self.target.seed);
        let (x, y, w, h) = self.target.initial_box.to_xywh();
        let _ = writeln!(s, "box = {x} {y} {w} {h}");
        write_script(&mut s, &self.target.script);
        for occ in &self.occluders {
            let _ = writeln!(s, "\n[occluder]");
            let _ = writeln!(s, "seed = {}", occ.seed);
            let poly: Vec<String> = occ.polygon.iter().map(|p| format!("{} {}", p.x, p.y)).collect();
            let _ = writeln!(s, "polygon = {}", poly.join("; "));
            let _ = writeln!(s, "active = {} {}", occ.active.0, occ.active.1);
            write_script(&mut s, &occ.script);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        Parser::default().run(text)
    }
}

fn check_script(what: &str, script: &[SimilarityTransform], frames: usize) -> Result<(), ScenarioError> {
    if script.len() != frames {
        return Err(ScenarioError::ScriptLength {
            what: what.to_string(),
            got: script.len(),
            expected: frames,
        });
    }
    Ok(())
}

fn write_script(s: &mut String, script: &[SimilarityTransform]) {
    for t in script {
        let _ = writeln!(s, "{} {} {} {}", t.scale, t.rotation, t.translation.x, t.translation.y);
    }
}

#[derive(Default)]
struct Section {
    kind: SectionKind,
    header_line: usize,
    seed: Option<u64>,
    target_box: Option<OrientedBox>,
    polygon: Option<Vec<Point2>>,
    active: Option<(usize, usize)>,
    script: Vec<SimilarityTransform>,
}

#[derive(Default, PartialEq, Clone, Copy)]
enum SectionKind {
    #[default]
    Header,
    Target,
    Occluder,
}

#[derive(Default)]
struct Parser {
    name: Option<String>,
    size: Option<(usize, usize)>,
    frames: Option<usize>,
    rng_seed: u64,
    background_seed: u64,
    noise_sigma: f64,
    noise_cell: f64,
    gain_end: Option<f64>,
    contrast: Option<f64>,
    sections: Vec<Section>,
}

fn err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        message: message.into(),
    }
}

fn numbers<T: std::str::FromStr>(line: usize, text: &str, count: usize) -> Result<Vec<T>, ScenarioError> {
    let vals: Vec<T> = text
        .split_whitespace()
        .map(|tok| tok.parse::<T>().map_err(|_| err(line, format!("bad number `{tok}`"))))
        .collect::<Result<_, _>>()?;
    if vals.len() != count {
        return Err(err(line, format!("expected {count} values, found {}", vals.len())));
    }
    Ok(vals)
}

impl Parser {
    fn run(mut self, text: &str) -> Result<Scenario, ScenarioError> {
        self.sections.push(Section::default());
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(header) = content.strip_prefix('[') {
                let kind = match header.strip_suffix(']').map(str::trim) {
                    Some("target") => SectionKind::Target,
                    Some("occluder") => SectionKind::Occluder,
                    _ => return Err(err(line, format!("unknown section `{content}`"))),
                };
                if kind == SectionKind::Target && self.sections.iter().any(|s| s.kind == kind) {
                    return Err(err(line, "duplicate [target] section"));
                }
                self.sections.push(Section {
                    kind,
                    header_line: line,
                    ..Section::default()
                });
                continue;
            }
            if let Some((key, value)) = content.split_once('=') {
                self.key_value(line, key.trim(), value.trim())?;
            } else {
                let section = self.sections.last_mut().unwrap();
                if section.kind == SectionKind::Header {
                    return Err(err(line, "script row outside a [target] or [occluder] section"));
                }
                let v: Vec<f64> = numbers(line, content, 4)?;
                if !(v[0] > 0.0 && v.iter().all(|x| x.is_finite())) {
                    return Err(err(line, "script scale must be positive and all values finite"));
                }
                section
                    .script
                    .push(SimilarityTransform::new(v[0], v[1], Point2::new(v[2], v[3])));
            }
        }
        self.finish()
    }

    fn key_value(&mut self, line: usize, key: &str, value: &str) -> Result<(), ScenarioError> {
        let kind = self.sections.last().unwrap().kind;
        let one = |v: &str| -> Result<f64, ScenarioError> { Ok(numbers::<f64>(line, v, 1)?[0]) };
        let int = |v: &str| -> Result<u64, ScenarioError> { Ok(numbers::<u64>(line, v, 1)?[0]) };
        match (kind, key) {
            (SectionKind::Header, "name") => self.name = Some(value.to_string()),
            (SectionKind::Header, "size") => {
                let v: Vec<usize> = numbers(line, value, 2)?;
                self.size = Some((v[0], v[1]));
            }
            (SectionKind::Header, "frames") => self.frames = Some(int(value)? as usize),
            (SectionKind::Header, "rng_seed") => self.rng_seed = int(value)?,
            (SectionKind::Header, "background_seed") => self.background_seed = int(value)?,
            (SectionKind::Header, "noise_sigma") => self.noise_sigma = one(value)?,
            (SectionKind::Header, "noise_cell") => self.noise_cell = one(value)?,
            (SectionKind::Header, "gain_end") => self.gain_end = Some(one(value)?),
            (SectionKind::Header, "contrast") => self.contrast = Some(one(value)?),
            (SectionKind::Target | SectionKind::Occluder, "seed") => {
                self.sections.last_mut().unwrap().seed = Some(int(value)?)
            }
            (SectionKind::Target, "box") => {
                let v: Vec<f64> = numbers(line, value, 4)?;
                self.sections.last_mut().unwrap().target_box = Some(OrientedBox::from_xywh(v[0], v[1], v[2], v[3]));
            }
            (SectionKind::Occluder, "polygon") => {
                let pts = value
                    .split(';')
                    .map(|pair| {
                        let v: Vec<f64> = numbers(line, pair, 2)?;
                        Ok(Point2::new(v[0], v[1]))
                    })
                    .collect::<Result<Vec<_>, ScenarioError>>()?;
                self.sections.last_mut().unwrap().polygon = Some(pts);
            }
            (SectionKind::Occluder, "active") => {
                let v: Vec<usize> = numbers(line, value, 2)?;
                self.sections.last_mut().unwrap().active = Some((v[0], v[1]));
            }
            _ => return Err(err(line, format!("unexpected key `{key}`"))),
        }
        Ok(())
    }

    fn finish(self) -> Result<Scenario, ScenarioError> {
        let (width, height) = self.size.ok_or_else(|| err(1, "missing `size`"))?;
        let frames = self.frames.ok_or_else(|| err(1, "missing `frames`"))?;
        let mut target = None;
        let mut occluders = Vec::new();
        for section in &self.sections {
            let header = section.header_line;
            if section.kind != SectionKind::Header && section.script.len() != frames {
                return Err(err(
                    header,
                    format!(
                        "script has {} rows, expected one per frame ({frames})",
                        section.script.len()
                    ),
                ));
            }
            match section.kind {
                SectionKind::Header => {}
                SectionKind::Target => {
                    target = Some(TargetSpec {
                        seed: section.seed.ok_or_else(|| err(header, "[target] missing `seed`"))?,
                        initial_box: section
                            .target_box
                            .ok_or_else(|| err(header, "[target] missing `box`"))?,
                        script: section.script.clone(),
                    });
                }
                SectionKind::Occluder => occluders.push(OccluderSpec {
                    seed: section.seed.ok_or_else(|| err(header, "[occluder] missing `seed`"))?,
                    polygon: section
                        .polygon
                        .clone()
                        .ok_or_else(|| err(header, "[occluder] missing `polygon`"))?,
                    script: section.script.clone(),
                    active: section
                        .active
                        .ok_or_else(|| err(header, "[occluder] missing `active`"))?,
                }),
            }
        }
        let scenario = Scenario {
            name: self.name.unwrap_or_else(|| "scenario".to_string()),
            width,
            height,
            frames,
            rng_seed: self.rng_seed,
            background_seed: self.background_seed,
            noise_sigma: self.noise_sigma,
            noise_cell: self.noise_cell,
            gain_end: self.gain_end.unwrap_or(1.0),
            contrast: self.contrast.unwrap_or(1.0),
            target: target.ok_or_else(|| err(1, "missing [target] section"))?,
            occluders,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::standard_suite;

    #[test]
    fn suite_round_trips_through_text() {
        for s in standard_suite() {
            let back = Scenario::parse(&s.to_text()).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn short_script_names_the_section_line() {
        let text = "size = 64 64\nframes = 3\n\n[target]\nseed = 1\nbox = 10 10 20 20\n1 0 0 0\n1 0 1 0\n";
        let e = Scenario::parse(text).unwrap_err();
        match e {
            ScenarioError::Parse { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("2 rows"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_row_names_its_line() {
        let text = "size = 64 64\nframes = 1\n[target]\nseed = 1\nbox = 10 10 20 20\n1 0 zero 0\n";
        assert!(matches!(
            Scenario::parse(text),
            Err(ScenarioError::Parse { line: 6, .. })
        ));
    }

    #[test]
    fn target_leaving_frame_is_rejected() {
        let text = "size = 64 64\nframes = 2\n[target]\nseed = 1\nbox = 10 10 20 20\n1 0 0 0\n1 0 40 0\n";
        assert!(matches!(
            Scenario::parse(text),
            Err(ScenarioError::TargetLeavesFrame { frame: 1, .. })
        ));
    }

    #[test]
    fn poses_accumulate() {
        let step = SimilarityTransform::translation(1.0, 2.0);
        let poses = cumulative_poses(&[SimilarityTransform::identity(), step, step]);
        assert_eq!(poses[2].translation, Point2::new(2.0, 4.0));
    }
}
