use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A window of `2w` frames: `[start, start + w)` is the reference half and
/// `[start + w, start + 2w)` the examined half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub id: usize,
    pub start: usize,
    pub half: usize,
}

impl Window {
    pub fn end(&self) -> usize {
        self.start + 2 * self.half
    }

    pub fn examined(&self) -> std::ops::Range<usize> {
        self.start + self.half..self.end()
    }

    pub fn reference(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.half
    }

    /// Whether `frame` falls in the examined half.
    pub fn is_examined(&self, frame: usize) -> bool {
        self.examined().contains(&frame)
    }
}

/// Windows at `0, s, 2s, ...` that fit in `frames`; there are
/// `(frames - 2w) / s + 1` of them.
pub fn plan_windows(frames: usize, w: usize, s: usize) -> Result<Vec<Window>> {
    if w == 0 || s == 0 {
        return Err(Error::Argument("window half and stride must be positive".into()));
    }
    if frames < 2 * w {
        return Err(Error::StreamTooShort {
            frames,
            needed: 2 * w,
        });
    }
    Ok((0..=(frames - 2 * w) / s)
        .map(|id| Window {
            id,
            start: id * s,
            half: w,
        })
        .collect())
}
