//! Command-line front end: `track`, `synth` and `eval`.
//!
//! Tracker settings are resolved as flag > `--config` file > built-in
//! default. Every failure maps to an exit code through
//! [`Error::exit_code`]: 1 for configuration problems, 2 for I/O and data
//! problems, 3 for numerical degeneracy.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::bench::{self, HEADLINE_THRESHOLD};
use crate::error::{Error, Result};
use crate::hypercube::{load_sequence, read_boxes, write_boxes, BoundingBox, HyperCube};
use crate::synth::{render, SceneSpec};
use crate::tracker::{TrackState, TrackerConfig};

#[derive(Debug, Parser)]
#[command(name = "hsi-track", version, about = "Hyperspectral correlation-filter tracker")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track a target through a hyperspectral sequence.
    Track(TrackArgs),
    /// Render a synthetic scene to a sequence plus ground truth.
    Synth(SynthArgs),
    /// Score predicted boxes against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("start").required(true).args(["init", "gt"])))]
pub struct TrackArgs {
    /// Sequence header file.
    #[arg(long)]
    pub seq: PathBuf,

    /// Initial box as x,y,w,h (top-left corner, 0-based pixels).
    #[arg(long, value_parser = parse_box)]
    pub init: Option<BoundingBox>,

    /// Ground-truth CSV; its frame-0 box is the initial box.
    #[arg(long)]
    pub gt: Option<PathBuf>,

    /// Output CSV of per-frame boxes.
    #[arg(long)]
    pub out: PathBuf,

    /// TOML file with tracker settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Number of random filters [default: 10].
    #[arg(long)]
    pub filters: Option<usize>,

    /// Spatial filter size in pixels [default: 6].
    #[arg(long)]
    pub filter_size: Option<usize>,

    /// Search window size relative to the box [default: 2.5].
    #[arg(long)]
    pub padding: Option<f64>,

    /// Gaussian kernel bandwidth [default: 0.5].
    #[arg(long)]
    pub sigma: Option<f64>,

    /// Ridge regularizer [default: 0.0001].
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Model interpolation factor [default: 0.02].
    #[arg(long)]
    pub interp: Option<f64>,

    /// Filter sampling seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Track on this single band only [default: all bands].
    #[arg(long)]
    pub band: Option<usize>,

    /// Directory for per-frame response maps (row-major little-endian f32).
    #[arg(long)]
    pub dump_responses: Option<PathBuf>,

    /// Also write the sampled filter bank to this file.
    #[arg(long)]
    pub save_bank: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene description (TOML).
    #[arg(long)]
    pub config: PathBuf,

    /// Output prefix; writes <prefix>.hdr, <prefix>.raw and <prefix>.gt.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted boxes CSV.
    #[arg(long)]
    pub pred: PathBuf,

    /// Ground-truth boxes CSV.
    #[arg(long)]
    pub gt: PathBuf,

    /// Output precision curve CSV.
    #[arg(long)]
    pub out: PathBuf,

    /// Largest threshold of the 1-pixel grid.
    #[arg(long, default_value_t = 50)]
    pub thresholds: u32,

    /// Leave the initialization frame out of the score.
    #[arg(long)]
    pub exclude_first: bool,
}

fn parse_box(s: &str) -> std::result::Result<BoundingBox, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Everything `track` needs, after merging flags, config file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub seq: PathBuf,
    pub init: BoundingBox,
    pub out: PathBuf,
    pub band: Option<usize>,
    pub dump_responses: Option<PathBuf>,
    pub save_bank: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_args(args: &TrackArgs) -> Result<Self> {
        let mut tracker = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => TrackerConfig::default(),
        };
        if let Some(v) = args.filters {
            tracker.filter_count = v;
        }
        if let Some(v) = args.filter_size {
            tracker.filter_w = v;
        }
        if let Some(v) = args.padding {
            tracker.padding = v;
        }
        if let Some(v) = args.sigma {
            tracker.sigma = v;
        }
        if let Some(v) = args.lambda {
            tracker.lambda = v;
        }
        if let Some(v) = args.interp {
            tracker.interp_factor = v;
        }
        if let Some(v) = args.seed {
            tracker.seed = v;
        }
        tracker.validate()?;

        if !args.seq.is_file() {
            return Err(missing(&args.seq));
        }
        let init = match (args.init, &args.gt) {
            (Some(b), _) => b,
            (None, Some(gt)) => *read_boxes(gt)?
                .first()
                .ok_or_else(|| Error::InvalidData(format!("{}: no boxes", gt.display())))?,
            (None, None) => return Err(Error::Config("need --init or --gt".into())),
        };
        Ok(RunConfig {
            tracker,
            seq: args.seq.clone(),
            init,
            out: args.out.clone(),
            band: args.band,
            dump_responses: args.dump_responses.clone(),
            save_bank: args.save_bank.clone(),
        })
    }
}

fn missing(path: &Path) -> Error {
    Error::io(
        path,
        std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
    )
}

pub fn cmd_track(args: &TrackArgs) -> Result<()> {
    let run = RunConfig::from_args(args)?;
    info!(
        "effective config: init={},{},{},{} band={:?}\n{}",
        run.init.x,
        run.init.y,
        run.init.w,
        run.init.h,
        run.band,
        toml::to_string(&run.tracker).expect("config serializes").trim_end()
    );
    let reader = load_sequence(&run.seq)?;
    let n_frames = reader.frame_count();
    let band = run.band;
    let mut frames = reader.map(move |frame| -> Result<HyperCube> {
        match band {
            Some(b) => frame?.select_band(b),
            None => frame,
        }
    });
    if let Some(dir) = &run.dump_responses {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let started = Instant::now();
    let first = frames
        .next()
        .ok_or_else(|| Error::InvalidData(format!("{}: no frames", run.seq.display())))??;
    let mut state = TrackState::init(&first, run.init, &run.tracker)?;
    if let Some(path) = &run.save_bank {
        state.bank().save(path)?;
    }
    let mut boxes = Vec::with_capacity(n_frames);
    boxes.push(run.init);
    for frame in frames {
        let bbox = state.step(&frame?)?;
        boxes.push(bbox);
        if let (Some(dir), Some(det)) = (&run.dump_responses, state.last_detection()) {
            let (h, w) = det.response.dims();
            let path = dir.join(format!("frame_{:05}_{h}x{w}.f32", state.frame_index()));
            let bytes: Vec<u8> = det
                .response
                .as_slice()
                .iter()
                .flat_map(|&v| (v as f32).to_le_bytes())
                .collect();
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    info!(
        "tracked {} frames in {:.2} s ({:.1} frames/s)",
        boxes.len(),
        elapsed,
        boxes.len() as f64 / elapsed.max(1e-9)
    );
    write_boxes(&run.out, &boxes)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = SceneSpec::load(&args.config)?;
    let scene = render(&spec)?;
    let saved = scene.save(&args.out)?;
    info!("wrote {}", saved.header.display());
    match &saved.truth {
        Some(path) => info!("wrote {}", path.display()),
        None => warn!("scene has no objects; no ground truth written"),
    }
    Ok(())
}

/// Writes the precision curve and returns the headline precision.
pub fn cmd_eval(args: &EvalArgs) -> Result<f64> {
    let mut pred = read_boxes(&args.pred)?;
    let mut gt = read_boxes(&args.gt)?;
    if args.exclude_first {
        if pred.len() < 2 || gt.len() < 2 {
            return Err(Error::InvalidData(
                "--exclude-first needs at least two frames".into(),
            ));
        }
        pred.remove(0);
        gt.remove(0);
    }
    let curve = bench::precision_curve(&pred, &gt, &bench::threshold_grid(args.thresholds))?;
    curve.save(&args.out)?;
    bench::precision_at(&pred, &gt, HEADLINE_THRESHOLD)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();

    let result = match &cli.command {
        Command::Track(a) => cmd_track(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a).map(|p| {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "precision@{HEADLINE_THRESHOLD}={p:.3}");
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::moving_disk_scene;

    fn args(line: &str) -> Vec<String> {
        std::iter::once("hsi-track".to_string())
            .chain(line.split_whitespace().map(String::from))
            .collect()
    }

    fn track_args(line: &str) -> TrackArgs {
        match Cli::try_parse_from(args(line)).unwrap().command {
            Command::Track(a) => a,
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn flags_override_config_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("s.hdr");
        fs::write(&seq, "").unwrap();
        let cfg = dir.path().join("t.toml");
        fs::write(&cfg, "sigma = 0.3\nlambda = 0.01\nfilter_count = 4\n").unwrap();
        let a = track_args(&format!(
            "track --seq {} --init 1,2,8,9 --out o.csv --config {} --sigma 0.7",
            seq.display(),
            cfg.display()
        ));
        let run = RunConfig::from_args(&a).unwrap();
        assert_eq!(run.tracker.sigma, 0.7);
        assert_eq!(run.tracker.lambda, 0.01);
        assert_eq!(run.tracker.filter_count, 4);
        assert_eq!(run.tracker.filter_w, 6);
        assert_eq!(run.init, BoundingBox::new(1, 2, 8, 9).unwrap());
    }

    #[test]
    fn init_from_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("s.hdr");
        fs::write(&seq, "").unwrap();
        let gt = dir.path().join("gt.csv");
        let boxes = vec![
            BoundingBox::new(3, 4, 5, 6).unwrap(),
            BoundingBox::new(4, 4, 5, 6).unwrap(),
        ];
        write_boxes(&gt, &boxes).unwrap();
        let a = track_args(&format!(
            "track --seq {} --gt {} --out o.csv",
            seq.display(),
            gt.display()
        ));
        assert_eq!(RunConfig::from_args(&a).unwrap().init, boxes[0]);
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o.csv");
        // missing sequence: I/O
        let missing = dir.path().join("nope.hdr");
        assert_eq!(
            run(args(&format!(
                "track --seq {} --init 1,1,8,8 --out {}",
                missing.display(),
                out.display()
            ))),
            2
        );
        // unparseable box and missing start: configuration
        assert_eq!(run(args("track --seq x --init 1,2,3 --out o.csv")), 1);
        assert_eq!(run(args("track --seq x --out o.csv")), 1);
        assert_eq!(run(args("--help")), 0);

        let seq = dir.path().join("s.hdr");
        fs::write(&seq, "").unwrap();
        assert_eq!(
            run(args(&format!(
                "track --seq {} --init 1,1,8,8 --out {} --padding 9",
                seq.display(),
                out.display()
            ))),
            1
        );
        // header without required keys: parse error
        assert_eq!(
            run(args(&format!(
                "track --seq {} --init 1,1,8,8 --out {}",
                seq.display(),
                out.display()
            ))),
            2
        );
    }

    #[test]
    fn degenerate_target_exits_3() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = moving_disk_scene(0.0, 0);
        spec.frames = 3;
        spec.objects.clear();
        spec.background = vec![0.3; 8];
        let prefix = dir.path().join("flat");
        render(&spec).unwrap().save(&prefix).unwrap();
        let code = run(args(&format!(
            "track --seq {} --init 10,10,12,12 --out {}",
            prefix.with_extension("hdr").display(),
            dir.path().join("o.csv").display()
        )));
        assert_eq!(code, 3);
    }

    #[test]
    fn band_flag_equals_presliced_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = moving_disk_scene(0.01, 3);
        spec.frames = 12;
        let scene = render(&spec).unwrap();
        let full = dir.path().join("full");
        scene.save(&full).unwrap();

        let mut sliced = scene.clone();
        sliced.frames = scene.frames.iter().map(|f| f.select_band(3).unwrap()).collect();
        sliced.header.bands = 1;
        let one = dir.path().join("one");
        sliced.save(&one).unwrap();

        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let gt = full.with_extension("gt.csv");
        assert_eq!(
            run(args(&format!(
                "track --seq {} --gt {} --out {} --band 3",
                full.with_extension("hdr").display(),
                gt.display(),
                a.display()
            ))),
            0
        );
        assert_eq!(
            run(args(&format!(
                "track --seq {} --gt {} --out {}",
                one.with_extension("hdr").display(),
                gt.display(),
                b.display()
            ))),
            0
        );
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(read_boxes(&a).unwrap().len(), 12);

        assert_eq!(
            run(args(&format!(
                "track --seq {} --gt {} --out {} --band 8",
                full.with_extension("hdr").display(),
                gt.display(),
                a.display()
            ))),
            1
        );
    }

    #[test]
    fn eval_identity_and_exclusion() {
        let dir = tempfile::tempdir().unwrap();
        let gt = dir.path().join("gt.csv");
        let pred = dir.path().join("pred.csv");
        let truth: Vec<BoundingBox> = (0..4).map(|i| BoundingBox::new(i, 0, 4, 4).unwrap()).collect();
        write_boxes(&gt, &truth).unwrap();
        let mut off = truth.clone();
        off[0].x += 30;
        write_boxes(&pred, &off).unwrap();
        let out = dir.path().join("p.csv");
        let mut a = EvalArgs {
            pred: gt.clone(),
            gt: gt.clone(),
            out: out.clone(),
            thresholds: 5,
            exclude_first: false,
        };
        assert_eq!(cmd_eval(&a).unwrap(), 1.0);
        let text = fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert_eq!(text.lines().nth(1), Some("1,1.000000"));

        a.pred = pred;
        assert_eq!(cmd_eval(&a).unwrap(), 0.75);
        a.exclude_first = true;
        assert_eq!(cmd_eval(&a).unwrap(), 1.0);
    }

    #[test]
    fn dumps_responses_and_bank() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = moving_disk_scene(0.0, 0);
        spec.frames = 3;
        let prefix = dir.path().join("s");
        render(&spec).unwrap().save(&prefix).unwrap();
        let dump = dir.path().join("resp");
        let bank = dir.path().join("bank.bin");
        let code = run(args(&format!(
            "track --seq {} --gt {} --out {} --dump-responses {} --save-bank {}",
            prefix.with_extension("hdr").display(),
            prefix.with_extension("gt.csv").display(),
            dir.path().join("o.csv").display(),
            dump.display(),
            bank.display()
        )));
        assert_eq!(code, 0);
        let mut names: Vec<String> = fs::read_dir(&dump)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["frame_00001_30x30.f32", "frame_00002_30x30.f32"]);
        assert_eq!(fs::metadata(dump.join(&names[0])).unwrap().len(), 30 * 30 * 4);
        let loaded = crate::convfeat::FilterBank::load(&bank).unwrap();
        assert_eq!(loaded.len(), 10);
    }
}
