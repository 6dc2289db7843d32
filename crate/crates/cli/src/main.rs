mod args;
mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};

use args::{BenchArgs, Cli, Command, DetectorArgs, EvalArgs, InputArgs, RunArgs, Synthetic};
use unmask_core::evaluation::{cube_score_map, frame_auc, load_maps, pixel_auc, write_maps, CellFill, RocLevel};
use unmask_core::ingest::{load_frame_labels, load_masks, raw_header_path, ActivationReader, FrameFormat, FrameReader};
use unmask_core::pipeline::{
    benchmark, read_score_column, run_detector, write_bins_json, zip_inputs, DetectorConfig, Execution, FrameInput,
};
use unmask_core::synth::{noise_frames, random_activations, twin_stream, BlockVideo};
use unmask_core::unmasking::write_profiles_csv;
use unmask_core::{Channel, Error, Frame, Result};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: {kind}: {message}");
            ExitCode::from(code)
        }
    }
}

/// Exit code and diagnostic tag: 2 for usage problems, 3 for bad input data.
fn classify(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Argument(_) => (2, "argument"),
        Error::Capability(_) => (2, "capability"),
        Error::Configuration(_) => (2, "configuration"),
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => (2, "argument"),
        Error::Io { .. } => (3, "io"),
        Error::Format { .. } | Error::Truncated { .. } | Error::Ordering(_) | Error::Data(_) => (3, "format"),
        Error::Alignment(_) => (3, "alignment"),
        Error::StreamTooShort { .. } | Error::DegenerateBatch { .. } | Error::UndefinedAuc => (3, "data"),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn finish(path: &Path, mut out: BufWriter<File>) -> Result<()> {
    out.flush().map_err(|e| io_error(path, e))
}

fn build_config(args: &DetectorArgs) -> Result<DetectorConfig> {
    let mut config = DetectorConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        config.apply_kv(&text)?;
    }
    for (key, value) in args.overrides() {
        config.set(key, value)?;
    }
    config.validate()?;
    Ok(config)
}

type Stream = Box<dyn Iterator<Item = Result<FrameInput>> + Send>;

struct Inputs {
    stream: Stream,
    described: Vec<Value>,
    labels: Option<Vec<bool>>,
}

fn open_inputs(args: &InputArgs, config: &DetectorConfig) -> Result<Inputs> {
    let motion = config.channel.uses(Channel::Motion);
    let appearance = config.channel.uses(Channel::Appearance);
    if let Some(kind) = args.synthetic {
        return Ok(synthetic_inputs(kind, args, config, motion, appearance));
    }
    if motion && args.frames.is_none() {
        return Err(Error::Argument(format!("channel {} requires --frames (or --synthetic)", config.channel)));
    }
    if appearance && args.activations.is_none() {
        return Err(Error::Argument(format!(
            "channel {} requires --activations (or --synthetic)",
            config.channel
        )));
    }
    let mut described = Vec::new();
    let frames: Option<Box<dyn Iterator<Item = Result<Frame>> + Send>> = if motion {
        let path = args.frames.as_deref().expect("checked above");
        let format = match &args.frame_format {
            Some(f) => f.parse()?,
            None => FrameFormat::detect(path),
        };
        if !path.exists() {
            return Err(Error::Argument(format!("--frames {}: no such file or directory", path.display())));
        }
        described.push(manifest::input_entry("frames", path)?);
        if format == FrameFormat::RawY8 {
            described.push(manifest::input_entry("frames-header", &raw_header_path(path))?);
        }
        Some(Box::new(FrameReader::open(path, format)?))
    } else {
        None
    };
    let activations: Option<Box<dyn Iterator<Item = Result<unmask_core::ActivationFrame>> + Send>> = if appearance {
        let path = args.activations.as_deref().expect("checked above");
        if !path.exists() {
            return Err(Error::Argument(format!("--activations {}: no such file", path.display())));
        }
        described.push(manifest::input_entry("activations", path)?);
        Some(Box::new(ActivationReader::open(path)?))
    } else {
        None
    };
    Ok(Inputs {
        stream: Box::new(zip_inputs(frames, activations)),
        described,
        labels: None,
    })
}

fn synthetic_inputs(kind: Synthetic, args: &InputArgs, config: &DetectorConfig, motion: bool, appearance: bool) -> Inputs {
    let n = args.synthetic_frames;
    let mut labels = None;
    let frames = match kind {
        Synthetic::Block => {
            let video = BlockVideo {
                frames: n,
                seed: args.seed,
                ..BlockVideo::default()
            };
            labels = Some(video.labels());
            video.render()
        }
        Synthetic::Twin => twin_stream(n, config.w, args.seed),
        Synthetic::Noise => noise_frames(n, args.seed),
    };
    let acts = appearance.then(|| random_activations(n, 256, 13, args.seed));
    let frames: Option<Box<dyn Iterator<Item = Result<Frame>> + Send>> =
        motion.then(|| Box::new(frames.into_iter().map(Ok)) as Box<_>);
    let acts: Option<Box<dyn Iterator<Item = Result<unmask_core::ActivationFrame>> + Send>> =
        acts.map(|a| Box::new(a.into_iter().map(Ok)) as Box<_>);
    let name = format!("{kind:?}").to_lowercase();
    Inputs {
        stream: Box::new(zip_inputs(frames, acts)),
        described: vec![json!({ "role": "synthetic", "kind": name, "frames": n, "seed": args.seed })],
        labels,
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = build_config(&args.detector)?;
    let fill: CellFill = args.map_fill.parse()?;
    let inputs = open_inputs(&args.input, &config)?;
    let exec = Execution {
        workers: if args.single_core { 1 } else { args.workers.unwrap_or(0) },
        keep_profiles: args.profiles_out.is_some(),
        ..Execution::default()
    };
    let out = run_detector(inputs.stream, &config, &exec)?;
    let series = &out.series;

    let mut outputs = serde_json::Map::new();
    let mut csv = create(&args.out)?;
    series.write_csv(&mut csv).map_err(|e| io_error(&args.out, e))?;
    finish(&args.out, csv)?;
    outputs.insert("scores".into(), json!(args.out.display().to_string()));

    if let Some(path) = &args.maps_out {
        let maps = cube_score_map(&out.records, series.len(), &series.channels, &config.bins, fill)?;
        write_maps(path, &maps)?;
        outputs.insert("maps".into(), json!(path.display().to_string()));
    }
    if let (Some(path), Some(profiles)) = (&args.profiles_out, &out.profiles) {
        let mut f = create(path)?;
        write_profiles_csv(&mut f, profiles).map_err(|e| io_error(path, e))?;
        finish(path, f)?;
        outputs.insert("profiles".into(), json!(path.display().to_string()));
    }
    if let Some(path) = &args.bins_out {
        let mut f = create(path)?;
        write_bins_json(&mut f, &out.records, &series.channels, config.bins.count())
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        finish(path, f)?;
        outputs.insert("bins".into(), json!(path.display().to_string()));
    }
    if let Some(path) = &args.labels_out {
        let labels = inputs
            .labels
            .as_ref()
            .ok_or_else(|| Error::Argument("--labels-out needs --synthetic block".into()))?;
        let text: String = labels.iter().map(|&l| if l { "1\n" } else { "0\n" }).collect();
        std::fs::write(path, text).map_err(|e| io_error(path, e))?;
        outputs.insert("labels".into(), json!(path.display().to_string()));
    }

    let t = out.timing;
    let manifest = json!({
        "tool": "unmask",
        "version": VERSION,
        "command": "run",
        "config": config,
        "config_kv": config.to_kv(),
        "inputs": inputs.described,
        "outputs": outputs,
        "frames": series.len(),
        "windows": out.records.len(),
        "execution": { "workers": exec.workers, "queue": exec.queue },
        "timing": {
            "wall_seconds": t.wall_seconds,
            "feature_seconds": t.feature_seconds,
            "prediction_seconds": t.prediction_seconds,
            "feature_fps": finite(t.feature_fps()),
            "prediction_fps": finite(t.prediction_fps()),
            "end_to_end_fps": finite(t.end_to_end_fps()),
        },
        "method_notes": [
            "motion descriptor: per-voxel 3D gradient magnitude, central differences inside the cube and one-sided at its faces",
            "static cubes: max |dI/dt| below 1e-4 are dropped",
            format!("temporal smoothing: Gaussian, sigma {} frames, radius ceil(3 sigma), renormalized at the borders", config.smooth_sigma),
            "frames outside every examined half copy the nearest scored frame",
        ],
    });
    let manifest_path = args.manifest.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    manifest::write_json(&manifest_path, &manifest)
}

/// Prints to stdout; a closed pipe is not an error.
fn print_json(value: &Value) {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn is_mask_source(path: &Path) -> bool {
    path.is_dir()
        || matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("pgm" | "ppm" | "pnm")
        )
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let level: RocLevel = args.level.parse()?;
    let text = std::fs::read_to_string(&args.scores).map_err(|e| io_error(&args.scores, e))?;
    let column = if level == RocLevel::Pixel { "frame" } else { args.column.as_str() };
    let rows = read_score_column(&text, column)?.len();
    if !args.gt.exists() {
        return Err(Error::Argument(format!("--gt {}: no such file or directory", args.gt.display())));
    }
    let gt = if is_mask_source(&args.gt) {
        load_masks(&args.gt, None)?
    } else {
        load_frame_labels(&args.gt)?
    };
    gt.check_frame_count(rows)?;
    let report = match level {
        RocLevel::Frame => frame_auc(&read_score_column(&text, &args.column)?, gt.frame_labels())?,
        RocLevel::Pixel => {
            if gt.pixel_masks().is_none() {
                return Err(Error::Capability(
                    "pixel-level evaluation needs pixel masks; --gt holds frame labels only".into(),
                ));
            }
            let path = args
                .maps
                .as_deref()
                .ok_or_else(|| Error::Argument("pixel level requires --maps (see run --maps-out)".into()))?;
            let maps = load_maps(path)?;
            if maps.len() != rows {
                return Err(Error::Alignment(format!("{} score maps for {rows} score rows", maps.len())));
            }
            pixel_auc(&maps, &gt, args.sigma_px)?
        }
    };
    let json = report.to_json();
    match &args.out {
        Some(path) => manifest::write_json(path, &json)?,
        None => print_json(&json),
    }
    if let Some(path) = &args.curve_out {
        let mut f = create(path)?;
        report.write_curve_csv(&mut f).map_err(|e| io_error(path, e))?;
        finish(path, f)?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let config = build_config(&args.detector)?;
    let mut input = args.input.clone();
    if input.frames.is_none() && input.activations.is_none() && input.synthetic.is_none() {
        input.synthetic = Some(Synthetic::Noise);
    }
    let inputs = open_inputs(&input, &config)?;
    let frames: Vec<FrameInput> = inputs.stream.collect::<Result<_>>()?;
    let report = benchmark(&frames, &config, args.repeat)?;
    let json = json!({
        "tool": "unmask",
        "version": VERSION,
        "command": "bench",
        "single_core": true,
        "config": config,
        "inputs": inputs.described,
        "frames": report.frames,
        "repeats": report.repeats,
        "feature_fps": report.feature_fps,
        "prediction_fps": report.prediction_fps,
        "feature_runs": report.feature_runs,
        "prediction_runs": report.prediction_runs,
        "reference": { "feature_fps": 726.3, "prediction_fps": 34.9 },
    });
    match &args.out {
        Some(path) => manifest::write_json(path, &json),
        None => {
            print_json(&json);
            Ok(())
        }
    }
}
