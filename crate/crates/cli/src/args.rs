use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "unmask", version, about = "Online video anomaly detection by unmasking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a video and write the per-frame score CSV plus a run manifest.
    Run(RunArgs),
    /// Compute a frame- or pixel-level ROC report from a score CSV.
    Eval(EvalArgs),
    /// Measure single-core throughput of feature extraction and prediction.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Synthetic {
    /// Textured block with a 4x speed-up in frames 300..360.
    Block,
    /// A repeated half-window of noise; every window scores 0.5.
    Twin,
    /// Independent uniform noise frames.
    Noise,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Frames: a directory of PGM/PPM files, a multi-image PGM file, or a
    /// raw-y8 file with its `.hdr` sidecar.
    #[arg(long, value_name = "PATH")]
    pub frames: Option<PathBuf>,

    /// Frame container; detected from the path when omitted.
    #[arg(long, value_name = "pgm|raw-y8")]
    pub frame_format: Option<String>,

    /// UMK1 activation file for the appearance channel.
    #[arg(long, value_name = "PATH")]
    pub activations: Option<PathBuf>,

    /// Generate the input instead of reading it.
    #[arg(long, value_enum, conflicts_with_all = ["frames", "activations"])]
    pub synthetic: Option<Synthetic>,

    /// Length of the synthetic video.
    #[arg(long, default_value_t = 600)]
    pub synthetic_frames: usize,

    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DetectorArgs {
    /// Flat `key=value` file; flags given on the command line win.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[arg(long, value_name = "motion|appearance|fusion")]
    pub channel: Option<String>,

    /// Frames per window half.
    #[arg(long)]
    pub w: Option<String>,

    #[arg(long)]
    pub stride: Option<String>,

    /// Unmasking loops.
    #[arg(long)]
    pub k: Option<String>,

    /// Features removed per loop (even).
    #[arg(long)]
    pub m: Option<String>,

    #[arg(long)]
    pub lambda: Option<String>,

    /// Temporal smoothing sigma in frames; 0 disables it.
    #[arg(long)]
    pub smooth_sigma: Option<String>,

    /// Spatial bins as ROWSxCOLS.
    #[arg(long, value_name = "RxC")]
    pub bins: Option<String>,
}

impl DetectorArgs {
    /// Flag values keyed like the config file.
    pub fn overrides(&self) -> Vec<(&'static str, &str)> {
        [
            ("channel", &self.channel),
            ("w", &self.w),
            ("stride", &self.stride),
            ("k", &self.k),
            ("m", &self.m),
            ("lambda", &self.lambda),
            ("smooth-sigma", &self.smooth_sigma),
            ("bins", &self.bins),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub detector: DetectorArgs,

    /// Score CSV destination.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,

    /// Manifest destination; defaults to `<out>.manifest.json`.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    /// Write per-frame 16x12 score maps (UMK1) for pixel-level evaluation.
    #[arg(long, value_name = "PATH")]
    pub maps_out: Option<PathBuf>,

    /// Value of motion cells without a surviving cube in the score maps.
    #[arg(long, value_name = "bin-score|zero", default_value = "bin-score")]
    pub map_fill: String,

    /// Write every unmasking accuracy profile as CSV.
    #[arg(long, value_name = "PATH")]
    pub profiles_out: Option<PathBuf>,

    /// Write per-window, per-bin scores as JSON.
    #[arg(long, value_name = "PATH")]
    pub bins_out: Option<PathBuf>,

    /// Write the injected frame labels of a synthetic block video.
    #[arg(long, value_name = "PATH", requires = "synthetic")]
    pub labels_out: Option<PathBuf>,

    /// Run both stages on one thread.
    #[arg(long, conflicts_with = "workers")]
    pub single_core: bool,

    /// Worker threads (0 = one per core).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Score CSV written by `unmask run`.
    #[arg(long, value_name = "CSV")]
    pub scores: PathBuf,

    /// Ground truth: a mask directory or multi-image PGM, or a text file of
    /// 0/1 frame labels.
    #[arg(long, value_name = "PATH")]
    pub gt: PathBuf,

    #[arg(long, value_name = "frame|pixel", default_value = "frame")]
    pub level: String,

    /// Score maps written by `unmask run --maps-out` (pixel level).
    #[arg(long, value_name = "PATH")]
    pub maps: Option<PathBuf>,

    /// Score column to evaluate at frame level.
    #[arg(long, default_value = "score_smoothed")]
    pub column: String,

    /// Spatial smoothing of upsampled maps, in pixels at 160x120.
    #[arg(long, default_value_t = unmask_core::evaluation::DEFAULT_SIGMA_PX)]
    pub sigma_px: f64,

    /// Report JSON destination; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// ROC curve as `fpr,tpr` CSV.
    #[arg(long, value_name = "PATH")]
    pub curve_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub detector: DetectorArgs,

    /// Timed runs; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub repeat: usize,

    /// Report JSON destination; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}
