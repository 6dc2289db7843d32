//! The online detector: sliding windows, per-bin and per-channel unmasking,
//! per-frame aggregation, temporal smoothing and streaming emission.
//!
//! Work is split into two stages joined by a bounded queue. The feature
//! stage turns frames into per-window batches; the change stage unmasks them
//! and emits frame scores in increasing frame order.

mod aggregate;
mod config;
mod smooth;
mod stages;
mod windows;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate, live_smoothed, read_score_column, write_bins_json, ScoreAccumulator, ScoreSeries, SettledFrame, WindowRecord};
pub use config::{ChannelSelection, DetectorConfig, CONFIG_KEYS};
pub use smooth::{blur_2d, gaussian_kernel, kernel_radius, smooth, smooth_at};
pub use stages::{
    run_detector, run_detector_with, zip_inputs, ChangeStage, DetectorOutput, Execution, FeatureStage, FrameInput,
    FrameScore, OnlineDetector, StageTiming, WindowJob,
};
pub use windows::{plan_windows, Window};

use crate::error::{Error, Result};

/// Single-core throughput of the two stages, as the median over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: usize,
    pub repeats: usize,
    /// Frames per second through the feature stage.
    pub feature_fps: f64,
    /// Frames per second through unmasking and aggregation.
    pub prediction_fps: f64,
    pub feature_runs: Vec<f64>,
    pub prediction_runs: Vec<f64>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times both stages on one thread over `inputs`, `repeat` times each.
///
/// The feature stage is timed alone over the whole stream; the change stage
/// is then timed on the window jobs it produced, so neither measurement
/// includes the other.
pub fn benchmark(inputs: &[FrameInput], config: &DetectorConfig, repeat: usize) -> Result<BenchReport> {
    if repeat == 0 {
        return Err(Error::Argument("repeat must be at least 1".into()));
    }
    let frames = inputs.len();
    let mut feature_runs = Vec::with_capacity(repeat);
    let mut prediction_runs = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let mut stage = FeatureStage::new(*config)?;
        let mut jobs = Vec::new();
        let started = Instant::now();
        for input in inputs {
            jobs.extend(stage.push(input.clone())?);
        }
        let feature_secs = started.elapsed().as_secs_f64();
        if frames < 2 * config.w {
            return Err(Error::StreamTooShort {
                frames,
                needed: 2 * config.w,
            });
        }
        let mut change = ChangeStage::new(*config, false, None)?;
        let started = Instant::now();
        for job in jobs {
            change.process(job)?;
        }
        change.finish(frames, std::time::Duration::ZERO)?;
        let prediction_secs = started.elapsed().as_secs_f64();
        feature_runs.push(frames as f64 / feature_secs.max(f64::MIN_POSITIVE));
        prediction_runs.push(frames as f64 / prediction_secs.max(f64::MIN_POSITIVE));
    }
    Ok(BenchReport {
        frames,
        repeats: repeat,
        feature_fps: median(&feature_runs),
        prediction_fps: median(&prediction_runs),
        feature_runs,
        prediction_runs,
    })
}
