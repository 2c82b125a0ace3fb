//! `cotrack`: track image sequences, score them against ground truth and
//! materialize the synthetic scenario suite.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cotrack_core::eval::annotate;
use cotrack_core::image::{load_sequence, save_frame};
use cotrack_core::synth::{generate, standard_suite, write_sequence, Scenario};
use cotrack_core::{run_benchmark, track_sequence, GroundTruth, OrientedBox, TrackerConfig, Variant};

#[derive(Parser, Debug)]
#[command(
    name = "cotrack",
    version,
    about = "Grid tracker with concurrent inlier and outlier populations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track a frame directory and write the per-frame boxes.
    Track(TrackArgs),
    /// Track sequences with ground truth and report accuracy and timing.
    Eval(EvalArgs),
    /// Write the synthetic scenario suite, or one scenario file, to disk.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// basic, cot-m or cot-mr.
    #[arg(long, default_value = "cot-mr")]
    variant: Variant,
    /// Overrides the RANSAC seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Flat `key = value` file overriding tracker defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn tracker_config(&self) -> Result<TrackerConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                TrackerConfig::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?
            }
            None => TrackerConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct TrackArgs {
    /// Directory of numbered PGM frames.
    #[arg(long)]
    sequence: PathBuf,
    /// Ground truth; its first line initializes the tracker unless --init is given.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Initial box as x,y,w,h (top-left corner and size).
    #[arg(long, value_parser = parse_box)]
    init: Option<OrientedBox>,
    #[command(flatten)]
    common: Common,
    /// Output directory for boxes.csv and annotated frames.
    #[arg(long)]
    out: PathBuf,
    /// Also write frames with the box and the grid states drawn in.
    #[arg(long)]
    annotate: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Sequence directories; repeat the flag for several.
    #[arg(long, required = true)]
    sequence: Vec<PathBuf>,
    /// Ground-truth file, only with a single sequence. Defaults to
    /// `groundtruth.txt` inside each sequence directory.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    /// Directory for the per-frame report CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory; one subdirectory per scenario.
    #[arg(long)]
    out: PathBuf,
    /// Scenario description file to render instead of the standard suite.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

fn parse_box(s: &str) -> Result<OrientedBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, w, h] if w > 0.0 && h > 0.0 && v.iter().all(|c| c.is_finite()) => Ok(OrientedBox::from_xywh(x, y, w, h)),
        [_, _, _, _] => Err("width and height must be positive and all values finite".into()),
        _ => Err(format!("expected x,y,w,h, got {} values", v.len())),
    }
}

/// Failures that are the caller's fault rather than the data's.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_track(args: &TrackArgs) -> Result<()> {
    let cfg = args.common.tracker_config()?;
    let gt = args
        .gt
        .as_ref()
        .map(|p| GroundTruth::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let init = match (args.init, &gt) {
        (Some(b), _) => b,
        (None, Some(gt)) => *gt.get(0).context("ground truth has no box for frame 0")?,
        (None, None) => return Err(UsageError("need --init x,y,w,h or --gt".into()).into()),
    };
    let frames = load_sequence(&args.sequence).with_context(|| format!("loading {}", args.sequence.display()))?;
    create_dir(&args.out)?;
    let annotated = args.out.join("annotated");
    if args.annotate {
        create_dir(&annotated)?;
        let side = cotrack_core::tracker::grid::grid_side_for(&init, cfg.m_range.0, cfg.m_range.1);
        let states = cotrack_core::GridStates::all_inlier(side);
        save_frame(
            annotated.join("frame_0000.pgm"),
            &annotate(&frames[0], &init, states.states(), side),
        )?;
    }
    let name = args.sequence.display().to_string();
    let mut io_error = None;
    let report = track_sequence(
        &name,
        &frames,
        init,
        gt.as_ref(),
        &cfg,
        args.common.variant,
        |f, out| {
            if args.annotate && io_error.is_none() {
                let img = annotate(&frames[f], &out.bbox, out.states.states(), out.states.side());
                io_error = save_frame(annotated.join(format!("frame_{f:04}.pgm")), &img).err();
            }
        },
    )?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    write(&args.out.join("boxes.csv"), &report.boxes_csv())?;
    eprintln!(
        "{} frames tracked, {} failed; boxes in {}",
        report.frames.len(),
        report.failed_frames(),
        args.out.join("boxes.csv").display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = args.common.tracker_config()?;
    if args.gt.is_some() && args.sequence.len() > 1 {
        return Err(UsageError("--gt applies to a single --sequence".into()).into());
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
    }
    for dir in &args.sequence {
        let gt = args.gt.clone().unwrap_or_else(|| dir.join("groundtruth.txt"));
        let report = run_benchmark(dir, &gt, &cfg, args.common.variant)
            .with_context(|| format!("evaluating {}", dir.display()))?;
        print!("{}", report.summary());
        println!();
        if let Some(out) = &args.out {
            let stem = format!("{}_{}", report.sequence, report.variant);
            write(&out.join(format!("{stem}.csv")), &report.to_csv(true))?;
            write(&out.join(format!("{stem}_summary.txt")), &report.summary())?;
        }
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let scenarios = match &args.scenario {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let s = Scenario::parse(&text).with_context(|| format!("in {}", path.display()))?;
            s.validate().with_context(|| format!("in {}", path.display()))?;
            vec![s]
        }
        None => standard_suite(),
    };
    for s in &scenarios {
        if s.name.is_empty() || s.name.contains(['/', '\\']) || s.name == "." || s.name == ".." {
            bail!("scenario name `{}` cannot be used as a directory name", s.name);
        }
        let (frames, truth) = generate(s).with_context(|| format!("generating {}", s.name))?;
        let dir = args.out.join(&s.name);
        write_sequence(&dir, s, &frames, &truth).with_context(|| format!("writing {}", dir.display()))?;
        println!("{}", dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Track(a) => cmd_track(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
