//! Synthetic videos with known answers, used by tests, benches and the
//! `--synthetic` CLI input.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{WORK_HEIGHT, WORK_WIDTH};
use crate::ingest::{ActivationFrame, Frame};

fn frame(index: usize, pixels: Vec<f32>) -> Frame {
    Frame::new(index, WORK_WIDTH, WORK_HEIGHT, pixels).expect("synthetic frame geometry")
}

/// Uniform noise frames at the working resolution.
pub fn noise_frames(count: usize, seed: u64) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let px = (0..WORK_WIDTH * WORK_HEIGHT).map(|_| rng.random::<f32>()).collect();
            frame(i, px)
        })
        .collect()
}

/// A video that repeats one `period`-frame noise segment. With `period`
/// equal to the half-window, both halves of every window are identical.
pub fn twin_stream(count: usize, period: usize, seed: u64) -> Vec<Frame> {
    let segment = noise_frames(period, seed);
    (0..count)
        .map(|i| segment[i % period].clone().with_index(i))
        .collect()
}

/// A textured square sliding left and right over a flat background.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVideo {
    pub frames: usize,
    /// Side of the square in pixels.
    pub size: usize,
    /// Normal speed in pixels per frame.
    pub velocity: f64,
    /// Frames moving at `velocity * speedup`.
    pub anomaly: Range<usize>,
    pub speedup: f64,
    /// Amplitude of per-pixel noise added to every frame.
    pub noise: f32,
    pub seed: u64,
}

impl Default for BlockVideo {
    fn default() -> Self {
        Self {
            frames: 600,
            size: 30,
            velocity: 2.0,
            anomaly: 300..360,
            speedup: 4.0,
            noise: 0.0,
            seed: 7,
        }
    }
}

impl BlockVideo {
    pub fn labels(&self) -> Vec<bool> {
        (0..self.frames).map(|i| self.anomaly.contains(&i)).collect()
    }

    /// Horizontal offset of the square in each frame. The square bounces
    /// between the borders; its path length grows by the current speed.
    pub fn positions(&self) -> Vec<f64> {
        let span = (WORK_WIDTH - self.size) as f64;
        let mut travelled = 0.0;
        (0..self.frames)
            .map(|i| {
                let x = travelled % (2.0 * span);
                let speed = if self.anomaly.contains(&i) {
                    self.velocity * self.speedup
                } else {
                    self.velocity
                };
                travelled += speed;
                if x <= span {
                    x
                } else {
                    2.0 * span - x
                }
            })
            .collect()
    }

    pub fn render(&self) -> Vec<Frame> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let texture: Vec<f32> = (0..self.size * self.size)
            .map(|_| 0.4 + 0.6 * rng.random::<f32>())
            .collect();
        let y0 = (WORK_HEIGHT - self.size) / 2;
        let positions = self.positions();
        positions
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let mut px = vec![0.1f32; WORK_WIDTH * WORK_HEIGHT];
                let (xi, frac) = (x.floor() as usize, (x - x.floor()) as f32);
                for ty in 0..self.size {
                    let row = (y0 + ty) * WORK_WIDTH;
                    for tx in 0..self.size {
                        let v = texture[ty * self.size + tx];
                        // split each texel over two pixels for sub-pixel motion
                        px[row + xi + tx] += (1.0 - frac) * (v - 0.1);
                        if xi + tx + 1 < WORK_WIDTH {
                            px[row + xi + tx + 1] += frac * (v - 0.1);
                        }
                    }
                }
                if self.noise > 0.0 {
                    for p in &mut px {
                        *p = (*p + self.noise * (rng.random::<f32>() - 0.5)).clamp(0.0, 1.0);
                    }
                }
                frame(i, px)
            })
            .collect()
    }
}

/// Random non-negative activation tensors, like post-ReLU conv maps.
pub fn random_activations(count: usize, channels: usize, size: usize, seed: u64) -> Vec<ActivationFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let values = (0..channels * size * size)
                .map(|_| (rng.random::<f32>() - 0.3).max(0.0))
                .collect();
            ActivationFrame::new(i, channels, size, size, values).expect("synthetic activation")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twin_stream_repeats() {
        let v = twin_stream(25, 10, 1);
        assert_eq!(v[3].pixels(), v[13].pixels());
        assert_eq!(v[23].index, 23);
    }

    #[test]
    fn block_speeds_up_inside_anomaly() {
        let b = BlockVideo::default();
        let p = b.positions();
        assert!(((p[11] - p[10]).abs() - 2.0).abs() < 1e-12);
        assert!(((p[311] - p[310]).abs() - 8.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| (0.0..=(WORK_WIDTH - b.size) as f64).contains(&x)));
        let frames = b.render();
        assert_eq!(frames.len(), 600);
        assert!(frames[0].pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
