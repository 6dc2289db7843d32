//! Shared inputs for the benchmarks.

use unmask_core::pipeline::{DetectorConfig, FeatureStage, FrameInput, WindowJob};
use unmask_core::synth::noise_frames;
use unmask_core::Frame;

/// Noise frames at the working resolution; every cube is non-static, which
/// is the slowest case for both stages.
pub fn noise_inputs(count: usize) -> Vec<FrameInput> {
    noise_frames(count, 1).into_iter().map(FrameInput::motion).collect()
}

pub fn noise_slot() -> Vec<Frame> {
    noise_frames(5, 2)
}

/// The window jobs the feature stage produces for `inputs`.
pub fn window_jobs(inputs: &[FrameInput], config: DetectorConfig) -> Vec<WindowJob> {
    let mut stage = FeatureStage::new(config).expect("valid config");
    inputs
        .iter()
        .filter_map(|i| stage.push(i.clone()).expect("feature stage"))
        .collect()
}
