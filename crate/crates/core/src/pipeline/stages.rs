use std::collections::{BTreeMap, VecDeque};
use std::sync::mpsc::sync_channel;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{empty_cells, live_smoothed, ScoreAccumulator, ScoreSeries, WindowRecord};
use super::config::DetectorConfig;
use super::smooth::smooth;
use super::windows::Window;
use crate::error::{Error, Result};
use crate::features::{
    bin_activation_windows, extract_cubes, AppearanceFeature, Channel, CubeFeature, CUBE_DIM, GRID_COLS,
    SLOT_FRAMES, WORK_HEIGHT, WORK_WIDTH,
};
use crate::ingest::{resize_bilinear, ActivationFrame, Frame};
use crate::unmasking::{unmask_with, LogisticConfig, ProfileRecord, WindowBatch};

/// One time step of input: a frame for the motion channel and/or an
/// activation tensor for the appearance channel.
#[derive(Debug, Clone, Default)]
pub struct FrameInput {
    pub frame: Option<Frame>,
    pub activation: Option<ActivationFrame>,
}

impl FrameInput {
    pub fn motion(frame: Frame) -> Self {
        Self {
            frame: Some(frame),
            activation: None,
        }
    }

    pub fn appearance(activation: ActivationFrame) -> Self {
        Self {
            frame: None,
            activation: Some(activation),
        }
    }
}

/// Everything the change stage needs for one closed window. Batches are
/// ordered `channel_idx * bins + bin`.
#[derive(Debug, Clone)]
pub struct WindowJob {
    pub window: Window,
    pub batches: Vec<WindowBatch>,
    pub motion_cells: Vec<bool>,
}

/// Stage one: resizes frames, extracts cubes and appearance vectors, and
/// assembles a [`WindowJob`] each time a window closes.
pub struct FeatureStage {
    config: DetectorConfig,
    channels: Vec<Channel>,
    seen: usize,
    next_window: usize,
    frames: VecDeque<Frame>,
    cubes: BTreeMap<usize, Vec<CubeFeature>>,
    appearance: BTreeMap<usize, Vec<AppearanceFeature>>,
    appearance_dim: Option<usize>,
    busy: Duration,
}

impl FeatureStage {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            channels: config.channels(),
            seen: 0,
            next_window: 0,
            frames: VecDeque::new(),
            cubes: BTreeMap::new(),
            appearance: BTreeMap::new(),
            appearance_dim: None,
            busy: Duration::ZERO,
        })
    }

    /// Frames consumed so far.
    pub fn frames_seen(&self) -> usize {
        self.seen
    }

    /// Time spent inside [`Self::push`].
    pub fn busy(&self) -> Duration {
        self.busy
    }

    fn window_start(&self) -> usize {
        self.next_window * self.config.stride
    }

    /// Consumes the next time step; returns the window it closes, if any.
    pub fn push(&mut self, input: FrameInput) -> Result<Option<WindowJob>> {
        let started = Instant::now();
        let out = self.push_inner(input);
        self.busy += started.elapsed();
        out
    }

    fn push_inner(&mut self, input: FrameInput) -> Result<Option<WindowJob>> {
        let index = self.seen;
        let motion = self.channels.contains(&Channel::Motion);
        let appearance = self.channels.contains(&Channel::Appearance);
        let keep = index >= self.window_start();
        if motion {
            let frame = input.frame.ok_or_else(|| {
                Error::Alignment(format!("frame {index}: motion channel enabled but no frame given"))
            })?;
            if keep {
                let frame = if (frame.width, frame.height) == (WORK_WIDTH, WORK_HEIGHT) {
                    frame.with_index(index)
                } else {
                    resize_bilinear(&frame, WORK_WIDTH, WORK_HEIGHT)?.with_index(index)
                };
                self.frames.push_back(frame);
            }
        }
        if appearance {
            let act = input.activation.ok_or_else(|| {
                Error::Alignment(format!(
                    "frame {index}: appearance channel enabled but no activation tensor given"
                ))
            })?;
            if keep {
                let feats = bin_activation_windows(&act, &self.config.bins);
                let dim = feats.first().map_or(0, |f| f.values.len());
                match self.appearance_dim {
                    Some(d) if d != dim => {
                        return Err(Error::Data(format!(
                            "activation frame {index} yields {dim}-dim bins, earlier frames {d}"
                        )))
                    }
                    _ => self.appearance_dim = Some(dim),
                }
                self.appearance.insert(index, feats);
            }
        }
        self.seen += 1;
        let start = self.window_start();
        if self.seen != start + 2 * self.config.w {
            return Ok(None);
        }
        let window = Window {
            id: self.next_window,
            start,
            half: self.config.w,
        };
        let job = self.build_job(window)?;
        self.next_window += 1;
        self.evict();
        Ok(Some(job))
    }

    fn slot_cubes(&mut self, slot: usize) -> Result<&[CubeFeature]> {
        if !self.cubes.contains_key(&slot) {
            let base = self.frames.front().map_or(0, |f| f.index);
            let frames: Vec<Frame> = self
                .frames
                .range(slot - base..slot - base + SLOT_FRAMES)
                .cloned()
                .collect();
            let cubes = extract_cubes(&frames, &self.config.bins)?;
            self.cubes.insert(slot, cubes);
        }
        Ok(&self.cubes[&slot])
    }

    fn build_job(&mut self, window: Window) -> Result<WindowJob> {
        let bins = self.config.bins.count();
        let mut batches = Vec::with_capacity(self.channels.len() * bins);
        let mut motion_cells = Vec::new();
        for channel in self.channels.clone() {
            match channel {
                Channel::Motion => {
                    let mut per_bin: Vec<WindowBatch> = (0..bins)
                        .map(|b| WindowBatch::new(window.id, b, Channel::Motion, CUBE_DIM))
                        .collect();
                    motion_cells = empty_cells();
                    let slots = 2 * window.half / SLOT_FRAMES;
                    for j in 0..slots {
                        let slot = window.start + j * SLOT_FRAMES;
                        let abnormal = slot >= window.start + window.half;
                        for cube in self.slot_cubes(slot)?.to_vec() {
                            per_bin[cube.bin].push(&cube.values, abnormal)?;
                            if abnormal {
                                motion_cells[cube.grid_y * GRID_COLS + cube.grid_x] = true;
                            }
                        }
                    }
                    batches.extend(per_bin);
                }
                Channel::Appearance => {
                    let dim = self.appearance_dim.unwrap_or(0);
                    let mut per_bin: Vec<WindowBatch> = (0..bins)
                        .map(|b| WindowBatch::new(window.id, b, Channel::Appearance, dim))
                        .collect();
                    for f in window.start..window.end() {
                        let abnormal = window.is_examined(f);
                        for feat in &self.appearance[&f] {
                            per_bin[feat.bin].push(&feat.values, abnormal)?;
                        }
                    }
                    batches.extend(per_bin);
                }
            }
        }
        Ok(WindowJob {
            window,
            batches,
            motion_cells,
        })
    }

    fn evict(&mut self) {
        let start = self.window_start();
        while self.frames.front().is_some_and(|f| f.index < start) {
            self.frames.pop_front();
        }
        self.cubes = self.cubes.split_off(&start);
        self.appearance = self.appearance.split_off(&start);
    }
}

/// A frame's values at the moment it is emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame: usize,
    pub per_channel: Vec<f64>,
    pub fused: f64,
    /// Smoothed over the frames emitted so far (truncated kernel at the live
    /// edge).
    pub smoothed: f64,
}

/// Wall-clock split between the two stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub frames: usize,
    pub feature_seconds: f64,
    pub prediction_seconds: f64,
    pub wall_seconds: f64,
}

impl StageTiming {
    fn fps(frames: usize, secs: f64) -> f64 {
        if secs > 0.0 {
            frames as f64 / secs
        } else {
            f64::INFINITY
        }
    }

    pub fn feature_fps(&self) -> f64 {
        Self::fps(self.frames, self.feature_seconds)
    }

    pub fn prediction_fps(&self) -> f64 {
        Self::fps(self.frames, self.prediction_seconds)
    }

    pub fn end_to_end_fps(&self) -> f64 {
        Self::fps(self.frames, self.wall_seconds)
    }
}

/// Result of a complete detector run.
#[derive(Debug, Clone)]
pub struct DetectorOutput {
    pub series: ScoreSeries,
    pub records: Vec<WindowRecord>,
    pub profiles: Option<Vec<ProfileRecord>>,
    pub timing: StageTiming,
}

/// Stage two: unmasks every batch of a window, folds the scores into the
/// per-frame accumulator and emits frames once they are final.
pub struct ChangeStage {
    config: DetectorConfig,
    channels: Vec<Channel>,
    acc: ScoreAccumulator,
    fused: Vec<f64>,
    records: Vec<WindowRecord>,
    profiles: Option<Vec<ProfileRecord>>,
    pool: Option<Arc<rayon::ThreadPool>>,
    busy: Duration,
}

impl ChangeStage {
    /// `pool` fans the `(bin, channel)` unmasking calls of one window out
    /// over its threads; `None` runs them in order on the caller's thread.
    pub fn new(config: DetectorConfig, keep_profiles: bool, pool: Option<Arc<rayon::ThreadPool>>) -> Result<Self> {
        config.validate()?;
        let channels = config.channels();
        Ok(Self {
            acc: ScoreAccumulator::new(channels.clone(), config.bins.count()),
            config,
            channels,
            fused: Vec::new(),
            records: Vec::new(),
            profiles: keep_profiles.then(Vec::new),
            pool,
            busy: Duration::ZERO,
        })
    }

    pub fn busy(&self) -> Duration {
        self.busy
    }

    pub fn process(&mut self, job: WindowJob) -> Result<Vec<FrameScore>> {
        let started = Instant::now();
        let params = self.config.unmask_params();
        let solver = LogisticConfig::new(self.config.lambda);
        let run = |b: &WindowBatch| unmask_with(b, &params, solver);
        let profiles: Vec<_> = match &self.pool {
            Some(pool) => pool.install(|| job.batches.par_iter().map(run).collect::<Result<Vec<_>>>())?,
            None => job.batches.iter().map(run).collect::<Result<Vec<_>>>()?,
        };
        let record = WindowRecord {
            window: job.window,
            scores: profiles.iter().map(|p| p.score()).collect(),
            motion_cells: job.motion_cells,
        };
        if let Some(out) = &mut self.profiles {
            out.extend(job.batches.iter().zip(profiles).map(|(b, profile)| ProfileRecord {
                window_id: b.window_id,
                bin: b.bin,
                channel: b.channel,
                profile,
            }));
        }
        self.acc.add(&record);
        let boundary = job.window.start + self.config.stride + self.config.w;
        self.records.push(record);
        let out = self.emit(boundary, false);
        self.busy += started.elapsed();
        Ok(out)
    }

    fn emit(&mut self, boundary: usize, end: bool) -> Vec<FrameScore> {
        let from = self.acc.settled().len();
        self.acc.settle(boundary, end);
        let fresh = &self.acc.settled()[from..];
        self.fused.extend(fresh.iter().map(|s| s.fused));
        fresh
            .iter()
            .map(|s| FrameScore {
                frame: s.frame,
                per_channel: s.per_channel.clone(),
                fused: s.fused,
                smoothed: live_smoothed(&self.fused, s.frame, self.config.smooth_sigma),
            })
            .collect()
    }

    /// Closes the stream at `frames` frames and returns the remaining
    /// emissions with the final output.
    pub fn finish(mut self, frames: usize, feature_time: Duration) -> Result<(Vec<FrameScore>, DetectorOutput)> {
        let needed = 2 * self.config.w;
        if frames < needed {
            return Err(Error::StreamTooShort { frames, needed });
        }
        let started = Instant::now();
        let tail = self.emit(frames, true);
        self.busy += started.elapsed();
        let series = self.acc.series();
        let smoothed = smooth(&series.fused, self.config.smooth_sigma);
        let series = ScoreSeries { smoothed, ..series };
        debug_assert_eq!(series.channels, self.channels);
        let timing = StageTiming {
            frames,
            feature_seconds: feature_time.as_secs_f64(),
            prediction_seconds: self.busy.as_secs_f64(),
            wall_seconds: 0.0,
        };
        Ok((
            tail,
            DetectorOutput {
                series,
                records: self.records,
                profiles: self.profiles,
                timing,
            },
        ))
    }
}

/// Single-threaded streaming detector: push time steps, receive frames as
/// soon as their scores are final.
pub struct OnlineDetector {
    features: FeatureStage,
    change: ChangeStage,
    started: Instant,
}

impl OnlineDetector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        Self::with_options(config, false)
    }

    pub fn with_options(config: DetectorConfig, keep_profiles: bool) -> Result<Self> {
        Ok(Self {
            features: FeatureStage::new(config)?,
            change: ChangeStage::new(config, keep_profiles, None)?,
            started: Instant::now(),
        })
    }

    pub fn push(&mut self, input: FrameInput) -> Result<Vec<FrameScore>> {
        match self.features.push(input)? {
            Some(job) => self.change.process(job),
            None => Ok(Vec::new()),
        }
    }

    pub fn finish(self) -> Result<(Vec<FrameScore>, DetectorOutput)> {
        let frames = self.features.frames_seen();
        let (tail, mut out) = self.change.finish(frames, self.features.busy())?;
        out.timing.wall_seconds = self.started.elapsed().as_secs_f64();
        Ok((tail, out))
    }
}

/// Threading of a detector run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Execution {
    /// Worker threads; 1 runs both stages on the calling thread, 0 uses one
    /// per available core.
    pub workers: usize,
    /// Capacity of the queue of window jobs between the stages.
    pub queue: usize,
    pub keep_profiles: bool,
}

impl Default for Execution {
    fn default() -> Self {
        Self {
            workers: 0,
            queue: 4,
            keep_profiles: false,
        }
    }
}

impl Execution {
    pub fn single_core() -> Self {
        Self {
            workers: 1,
            ..Self::default()
        }
    }
}

/// Runs the detector over a whole stream.
pub fn run_detector<I>(inputs: I, config: &DetectorConfig, exec: &Execution) -> Result<DetectorOutput>
where
    I: Iterator<Item = Result<FrameInput>> + Send,
{
    run_detector_with(inputs, config, exec, |_| {})
}

/// As [`run_detector`], calling `emit` for every frame in increasing frame
/// order as soon as its score is final.
pub fn run_detector_with<I, F>(
    inputs: I,
    config: &DetectorConfig,
    exec: &Execution,
    mut emit: F,
) -> Result<DetectorOutput>
where
    I: Iterator<Item = Result<FrameInput>> + Send,
    F: FnMut(&FrameScore),
{
    config.validate()?;
    let started = Instant::now();
    if exec.workers == 1 {
        let mut det = OnlineDetector::with_options(*config, exec.keep_profiles)?;
        for input in inputs {
            det.push(input?)?.iter().for_each(&mut emit);
        }
        let (tail, mut out) = det.finish()?;
        tail.iter().for_each(&mut emit);
        out.timing.wall_seconds = started.elapsed().as_secs_f64();
        return Ok(out);
    }

    let mut builder = rayon::ThreadPoolBuilder::new();
    if exec.workers > 1 {
        builder = builder.num_threads(exec.workers - 1);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Configuration(format!("cannot start worker pool: {e}")))?;
    let mut change = ChangeStage::new(*config, exec.keep_profiles, Some(Arc::new(pool)))?;

    enum Msg {
        Job(Box<WindowJob>),
        End { frames: usize, busy: Duration },
    }

    let (tx, rx) = sync_channel::<Result<Msg>>(exec.queue.max(1));
    let mut features = FeatureStage::new(*config)?;
    let (frames, feature_busy) = std::thread::scope(|scope| -> Result<(usize, Duration)> {
        scope.spawn(move || {
            for input in inputs {
                let step = input.and_then(|i| features.push(i));
                match step {
                    Ok(Some(job)) => {
                        if tx.send(Ok(Msg::Job(Box::new(job)))).is_err() {
                            return;
                        }
                    }
                    Ok(None) => {}
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                }
            }
            let _ = tx.send(Ok(Msg::End {
                frames: features.frames_seen(),
                busy: features.busy(),
            }));
        });
        for msg in rx.iter() {
            match msg? {
                Msg::Job(job) => change.process(*job)?.iter().for_each(&mut emit),
                Msg::End { frames, busy } => return Ok((frames, busy)),
            }
        }
        Err(Error::Configuration("feature stage stopped without a result".into()))
    })?;
    let (tail, mut out) = change.finish(frames, feature_busy)?;
    tail.iter().for_each(&mut emit);
    out.timing.wall_seconds = started.elapsed().as_secs_f64();
    Ok(out)
}

/// Pairs a frame stream and an activation stream step by step. Either may be
/// absent; when both are present they must have the same length.
pub fn zip_inputs<'a>(
    frames: Option<Box<dyn Iterator<Item = Result<Frame>> + Send + 'a>>,
    activations: Option<Box<dyn Iterator<Item = Result<ActivationFrame>> + Send + 'a>>,
) -> impl Iterator<Item = Result<FrameInput>> + Send + 'a {
    let mut frames = frames;
    let mut activations = activations;
    let mut index = 0usize;
    let mut done = false;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let f = frames.as_mut().map(|it| it.next());
        let a = activations.as_mut().map(|it| it.next());
        let out = match (f, a) {
            (None, None) | (Some(None), None) | (None, Some(None)) | (Some(None), Some(None)) => {
                done = true;
                return None;
            }
            (Some(Some(Err(e))), _) | (_, Some(Some(Err(e)))) => Err(e),
            (Some(Some(Ok(_))), Some(None)) => Err(Error::Alignment(format!(
                "activation stream ends at {index} frames, frame stream continues"
            ))),
            (Some(None), Some(Some(Ok(_)))) => Err(Error::Alignment(format!(
                "frame stream ends at {index} frames, activation stream continues"
            ))),
            (f, a) => Ok(FrameInput {
                frame: f.flatten().map(|r| r.expect("errors handled above")),
                activation: a.flatten().map(|r| r.expect("errors handled above")),
            }),
        };
        if out.is_err() {
            done = true;
        }
        index += 1;
        Some(out)
    })
}
