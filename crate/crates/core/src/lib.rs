//! Online video anomaly detection by unmasking.
//!
//! Each sliding window of `2w` frames is split into a reference half and an
//! examined half. Per spatial bin and feature channel, a regularized linear
//! classifier is trained to separate the halves while the most discriminative
//! features are repeatedly removed; the mean training accuracy becomes the
//! anomaly score of the examined frames.
//!
//! The crate is organised along the processing chain:
//!
//! * [`ingest`]: frame, mask and activation decoding;
//! * [`features`]: motion cubes and appearance vectors;
//! * [`unmasking`]: the classifier loop and its score;
//! * [`pipeline`]: windows, aggregation, smoothing and the online detector;
//! * [`evaluation`]: frame- and pixel-level ROC analysis;
//! * [`synth`]: synthetic videos with known answers.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod ingest;
pub mod pipeline;
pub mod synth;
pub mod unmasking;

pub use error::{Error, Result};
pub use evaluation::{cube_score_map, frame_auc, pixel_auc, RocLevel, RocReport, ScoreMap};
pub use features::{BinLayout, Channel, CubeFeature, AppearanceFeature};
pub use ingest::{ActivationFrame, Frame, FrameFormat, GroundTruth, Mask};
pub use unmasking::{
    eliminate_features, score, train_logistic, unmask, ActiveSet, ClassifierState, UnmaskingProfile,
    WindowBatch,
};
pub use pipeline::{
    aggregate, plan_windows, run_detector, smooth, ChannelSelection, DetectorConfig, DetectorOutput, Execution,
    FrameInput, FrameScore, OnlineDetector, ScoreSeries, Window,
};
