//! Motion and appearance descriptors.
//!
//! Motion: frames at the 160x120 working resolution are cut into a 16x12 grid
//! of 10x10 patches; the same patch over 5 consecutive frames forms a
//! 10x10x5 cube, summarised by the 3D gradient magnitude of every voxel
//! (500 values) and L2-normalized. Cubes without temporal change are
//! dropped.
//!
//! Appearance: a 256x13x13 activation tensor is cut into four 7x7 windows
//! that share the centre row and column; each window flattens to 49 values
//! per channel, concatenated over channels into 12544 values.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ActivationFrame, Frame};

pub const WORK_WIDTH: usize = 160;
pub const WORK_HEIGHT: usize = 120;
pub const PATCH: usize = 10;
pub const SLOT_FRAMES: usize = 5;
pub const GRID_COLS: usize = WORK_WIDTH / PATCH;
pub const GRID_ROWS: usize = WORK_HEIGHT / PATCH;
pub const CUBE_DIM: usize = PATCH * PATCH * SLOT_FRAMES;

/// A cube whose largest per-voxel `|d/dt|` stays below this is static.
pub const STATIC_EPSILON: f64 = 1e-4;

pub const ACT_CHANNELS: usize = 256;
pub const ACT_SIZE: usize = 13;

/// The two feature streams a detector can run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Motion,
    Appearance,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Motion => "motion",
            Channel::Appearance => "appearance",
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Spatial bin grid shared by both feature channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinLayout {
    pub rows: usize,
    pub cols: usize,
}

impl Default for BinLayout {
    fn default() -> Self {
        Self { rows: 2, cols: 2 }
    }
}

impl std::fmt::Display for BinLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl std::str::FromStr for BinLayout {
    type Err = Error;

    /// Parses `RxC`, e.g. `2x2`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("bin layout `{s}` is not ROWSxCOLS"));
        let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let layout = BinLayout {
            rows: r.trim().parse().map_err(|_| bad())?,
            cols: c.trim().parse().map_err(|_| bad())?,
        };
        layout.validate()?;
        Ok(layout)
    }
}

impl BinLayout {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        let layout = Self { rows, cols };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.rows > GRID_ROWS || self.cols > GRID_COLS {
            return Err(Error::Argument(format!(
                "bin layout {self} must lie within 1x1..{GRID_ROWS}x{GRID_COLS}"
            )));
        }
        if self.rows > ACT_SIZE / 2 || self.cols > ACT_SIZE / 2 {
            return Err(Error::Argument(format!(
                "bin layout {self} is too fine for {ACT_SIZE}x{ACT_SIZE} activation maps"
            )));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Bin of a patch on the 16x12 motion grid.
    pub fn bin_of_patch(&self, grid_x: usize, grid_y: usize) -> Result<usize> {
        if grid_x >= GRID_COLS || grid_y >= GRID_ROWS {
            return Err(Error::Argument(format!(
                "patch ({grid_x}, {grid_y}) outside the {GRID_COLS}x{GRID_ROWS} grid"
            )));
        }
        Ok(self.patch_bin_unchecked(grid_x, grid_y))
    }

    #[inline]
    fn patch_bin_unchecked(&self, grid_x: usize, grid_y: usize) -> usize {
        let row = grid_y * self.rows / GRID_ROWS;
        let col = grid_x * self.cols / GRID_COLS;
        row * self.cols + col
    }

    /// Pixel extent `(x0, y0, x1, y1)` (exclusive ends) of a motion bin at
    /// working resolution.
    pub fn motion_extent(&self, bin: usize) -> (usize, usize, usize, usize) {
        let (row, col) = (bin / self.cols, bin % self.cols);
        let cells = |i: usize, n: usize, total: usize| (i * total).div_ceil(n);
        let x0 = cells(col, self.cols, GRID_COLS) * PATCH;
        let x1 = cells(col + 1, self.cols, GRID_COLS) * PATCH;
        let y0 = cells(row, self.rows, GRID_ROWS) * PATCH;
        let y1 = cells(row + 1, self.rows, GRID_ROWS) * PATCH;
        (x0, y0, x1, y1)
    }

    /// Windows over an activation map of side `size`: `(start, len)` per bin
    /// along one axis. Adjacent windows share one row/column; with two bins
    /// on a 13-wide map they are `[0, 7)` and `[6, 13)`.
    fn activation_spans(parts: usize, size: usize) -> Vec<(usize, usize)> {
        let len = (size + parts - 1).div_ceil(parts);
        if parts == 1 {
            return vec![(0, size)];
        }
        (0..parts)
            .map(|i| {
                let start = (i * (size - len) + (parts - 1) / 2) / (parts - 1);
                (start, len)
            })
            .collect()
    }

    /// `(row0, col0, rows, cols)` of each appearance bin window.
    pub fn activation_windows(&self, height: usize, width: usize) -> Vec<(usize, usize, usize, usize)> {
        let rs = Self::activation_spans(self.rows, height);
        let cs = Self::activation_spans(self.cols, width);
        rs.iter()
            .flat_map(|&(r0, rl)| cs.iter().map(move |&(c0, cl)| (r0, c0, rl, cl)))
            .collect()
    }
}

/// A 10x10x5 voxel block; index `t * 100 + y * 10 + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelBlock(pub [f64; CUBE_DIM]);

impl VoxelBlock {
    pub fn from_fn(mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut v = [0.0; CUBE_DIM];
        for t in 0..SLOT_FRAMES {
            for y in 0..PATCH {
                for x in 0..PATCH {
                    v[voxel_index(x, y, t)] = f(x, y, t);
                }
            }
        }
        Self(v)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, t: usize) -> f64 {
        self.0[voxel_index(x, y, t)]
    }

    fn from_frames(frames: &[Frame], grid_x: usize, grid_y: usize) -> Self {
        let (x0, y0) = (grid_x * PATCH, grid_y * PATCH);
        let mut v = [0.0; CUBE_DIM];
        for (t, frame) in frames.iter().enumerate() {
            let px = frame.pixels();
            for y in 0..PATCH {
                let row = &px[(y0 + y) * frame.width + x0..][..PATCH];
                let dst = &mut v[voxel_index(0, y, t)..][..PATCH];
                for (d, &s) in dst.iter_mut().zip(row) {
                    *d = f64::from(s);
                }
            }
        }
        Self(v)
    }
}

#[inline]
pub const fn voxel_index(x: usize, y: usize, t: usize) -> usize {
    (t * PATCH + y) * PATCH + x
}

/// Finite difference at `i` of a sequence of length `n` read through `f`:
/// central inside, one-sided at the two ends.
#[inline]
fn diff(i: usize, n: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n < 2 {
        0.0
    } else if i == 0 {
        f(1) - f(0)
    } else if i == n - 1 {
        f(n - 1) - f(n - 2)
    } else {
        (f(i + 1) - f(i - 1)) * 0.5
    }
}

/// Per-voxel gradient `(gx, gy, gt)` of a block.
pub fn gradient_components(block: &VoxelBlock) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(CUBE_DIM);
    for t in 0..SLOT_FRAMES {
        for y in 0..PATCH {
            for x in 0..PATCH {
                let gx = diff(x, PATCH, |i| block.at(i, y, t));
                let gy = diff(y, PATCH, |i| block.at(x, i, t));
                let gt = diff(t, SLOT_FRAMES, |i| block.at(x, y, i));
                out.push([gx, gy, gt]);
            }
        }
    }
    out
}

/// The 500-value descriptor of one block, before normalization: the 3D
/// gradient magnitude of every voxel, in block order.
pub fn gradient_feature(block: &VoxelBlock) -> Vec<f64> {
    gradient_components(block)
        .into_iter()
        .map(|[gx, gy, gt]| (gx * gx + gy * gy + gt * gt).sqrt())
        .collect()
}

/// Largest `|d/dt|` over the block; compared against [`STATIC_EPSILON`].
pub fn max_temporal_gradient(block: &VoxelBlock) -> f64 {
    let mut max = 0.0f64;
    for y in 0..PATCH {
        for x in 0..PATCH {
            for t in 0..SLOT_FRAMES {
                let gt = diff(t, SLOT_FRAMES, |i| block.at(x, y, i));
                max = max.max(gt.abs());
            }
        }
    }
    max
}

/// Scales `v` to unit L2 norm. All-zero input is left as is.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeFeature {
    /// Index of the first of the five stacked frames.
    pub frame_start: usize,
    pub grid_x: usize,
    pub grid_y: usize,
    pub bin: usize,
    pub values: Vec<f64>,
}

/// Builds the motion descriptors for one 5-frame slot.
///
/// Frames must be consecutive and at the 160x120 working resolution. Static
/// cubes are omitted, so between 0 and 192 cubes come back, ordered by grid
/// row then column.
pub fn extract_cubes(frames: &[Frame], layout: &BinLayout) -> Result<Vec<CubeFeature>> {
    if frames.len() != SLOT_FRAMES {
        return Err(Error::Argument(format!(
            "a cube needs {SLOT_FRAMES} frames, got {}",
            frames.len()
        )));
    }
    for (i, f) in frames.iter().enumerate() {
        if (f.width, f.height) != (WORK_WIDTH, WORK_HEIGHT) {
            return Err(Error::Argument(format!(
                "frame {} is {}x{}, cubes need {WORK_WIDTH}x{WORK_HEIGHT}",
                f.index, f.width, f.height
            )));
        }
        if f.index != frames[0].index + i {
            return Err(Error::Argument(format!(
                "cube frames are not consecutive: {} follows {}",
                f.index,
                frames[0].index + i - 1
            )));
        }
    }
    let mut cubes = Vec::new();
    for grid_y in 0..GRID_ROWS {
        for grid_x in 0..GRID_COLS {
            let block = VoxelBlock::from_frames(frames, grid_x, grid_y);
            if max_temporal_gradient(&block) < STATIC_EPSILON {
                continue;
            }
            let mut values = gradient_feature(&block);
            l2_normalize(&mut values);
            cubes.push(CubeFeature {
                frame_start: frames[0].index,
                grid_x,
                grid_y,
                bin: layout.patch_bin_unchecked(grid_x, grid_y),
                values,
            });
        }
    }
    Ok(cubes)
}

/// Writes cubes as CSV: `frame_start,grid_x,grid_y,bin,v0..v499`.
pub fn write_cubes_csv<W: Write>(mut out: W, cubes: &[CubeFeature]) -> std::io::Result<()> {
    write!(out, "frame_start,grid_x,grid_y,bin")?;
    for i in 0..CUBE_DIM {
        write!(out, ",v{i}")?;
    }
    writeln!(out)?;
    for c in cubes {
        write!(out, "{},{},{},{}", c.frame_start, c.grid_x, c.grid_y, c.bin)?;
        for v in &c.values {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppearanceFeature {
    pub frame: usize,
    pub bin: usize,
    pub values: Vec<f64>,
}

/// Cuts a 256x13x13 activation tensor into one vector per bin.
///
/// For each window, every channel's patch is flattened row-major and the
/// channel blocks are concatenated in channel order, then L2-normalized.
pub fn bin_activations(act: &ActivationFrame, layout: &BinLayout) -> Result<Vec<AppearanceFeature>> {
    if (act.channels, act.height, act.width) != (ACT_CHANNELS, ACT_SIZE, ACT_SIZE) {
        return Err(Error::Argument(format!(
            "activation frame {} is {}x{}x{}, expected {ACT_CHANNELS}x{ACT_SIZE}x{ACT_SIZE}",
            act.index, act.channels, act.height, act.width
        )));
    }
    Ok(bin_activation_windows(act, layout))
}

/// As [`bin_activations`] without the dimension check.
pub fn bin_activation_windows(act: &ActivationFrame, layout: &BinLayout) -> Vec<AppearanceFeature> {
    layout
        .activation_windows(act.height, act.width)
        .into_iter()
        .enumerate()
        .map(|(bin, (r0, c0, rows, cols))| {
            let mut values = Vec::with_capacity(act.channels * rows * cols);
            for ch in 0..act.channels {
                for r in r0..r0 + rows {
                    for c in c0..c0 + cols {
                        values.push(f64::from(act.at(ch, r, c)));
                    }
                }
            }
            l2_normalize(&mut values);
            AppearanceFeature {
                frame: act.index,
                bin,
                values,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn constant_block_has_zero_gradient() {
        let block = VoxelBlock::from_fn(|_, _, _| 0.37);
        assert!(gradient_feature(&block).iter().all(|&v| v == 0.0));
        assert_eq!(max_temporal_gradient(&block), 0.0);
    }

    #[test]
    fn temporal_ramp_gives_slope_everywhere() {
        let a = -0.03;
        let block = VoxelBlock::from_fn(|_, _, t| 0.5 + a * t as f64);
        for v in gradient_feature(&block) {
            assert!(approx(v, a.abs(), 1e-12));
        }
    }

    #[test]
    fn ramp_in_x_and_t() {
        let (a, b) = (0.02, 0.01);
        let block = VoxelBlock::from_fn(|x, _, t| 0.1 + b * x as f64 + a * t as f64);
        let g = gradient_feature(&block);
        let expected = (a * a + b * b).sqrt();
        for t in 1..SLOT_FRAMES - 1 {
            for y in 1..PATCH - 1 {
                for x in 1..PATCH - 1 {
                    assert!(approx(g[voxel_index(x, y, t)], expected, 1e-12));
                }
            }
        }
    }

    #[test]
    fn patch_bins() {
        let l = BinLayout::default();
        assert_eq!(l.bin_of_patch(0, 0).unwrap(), 0);
        assert_eq!(l.bin_of_patch(8, 0).unwrap(), 1);
        assert_eq!(l.bin_of_patch(7, 6).unwrap(), 2);
        assert_eq!(l.bin_of_patch(15, 11).unwrap(), 3);
        assert!(matches!(l.bin_of_patch(16, 0), Err(Error::Argument(_))));
        assert!(matches!(l.bin_of_patch(0, 12), Err(Error::Argument(_))));
    }

    #[test]
    fn patch_bin_matches_pixel_extents() {
        let l = BinLayout::default();
        for gy in 0..GRID_ROWS {
            for gx in 0..GRID_COLS {
                let bin = l.bin_of_patch(gx, gy).unwrap();
                let (x0, y0, x1, y1) = l.motion_extent(bin);
                let (px, py) = (gx * PATCH, gy * PATCH);
                assert!(px >= x0 && px + PATCH <= x1 && py >= y0 && py + PATCH <= y1);
            }
        }
        assert_eq!(l.motion_extent(0), (0, 0, 80, 60));
        assert_eq!(l.motion_extent(3), (80, 60, 160, 120));
    }

    #[test]
    fn activation_windows_share_centre() {
        let w = BinLayout::default().activation_windows(13, 13);
        assert_eq!(w, vec![(0, 0, 7, 7), (0, 6, 7, 7), (6, 0, 7, 7), (6, 6, 7, 7)]);
        let single = BinLayout::new(1, 1).unwrap().activation_windows(13, 13);
        assert_eq!(single, vec![(0, 0, 13, 13)]);
        let three = BinLayout::new(3, 3).unwrap().activation_windows(13, 13);
        assert_eq!(three[0], (0, 0, 5, 5));
        assert_eq!(three[4], (4, 4, 5, 5));
        assert_eq!(three[8], (8, 8, 5, 5));
    }

    #[test]
    fn layout_parsing() {
        assert_eq!("2x2".parse::<BinLayout>().unwrap(), BinLayout::default());
        assert_eq!("1x1".parse::<BinLayout>().unwrap().count(), 1);
        assert!("0x2".parse::<BinLayout>().is_err());
        assert!("2by2".parse::<BinLayout>().is_err());
    }

    #[test]
    fn zero_activations_stay_zero() {
        let act = ActivationFrame::new(0, 256, 13, 13, vec![0.0; 256 * 169]).unwrap();
        let bins = bin_activations(&act, &BinLayout::default()).unwrap();
        assert_eq!(bins.len(), 4);
        for b in bins {
            assert_eq!(b.values.len(), 12544);
            assert!(b.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn centre_unit_reaches_every_bin() {
        let mut vals = vec![0.0; 256 * 169];
        vals[6 * 13 + 6] = 2.5;
        let act = ActivationFrame::new(0, 256, 13, 13, vals).unwrap();
        // (6, 6) sits at local (6,6), (6,0), (0,6) and (0,0) of the four windows
        let local = [6 * 7 + 6, 6 * 7, 6, 0];
        for b in bin_activations(&act, &BinLayout::default()).unwrap() {
            assert_eq!(b.values[local[b.bin]], 1.0);
            assert_eq!(b.values.iter().filter(|&&v| v != 0.0).count(), 1);
        }
    }

    #[test]
    fn wrong_tensor_dims_rejected() {
        let act = ActivationFrame::new(0, 2, 13, 13, vec![0.0; 2 * 169]).unwrap();
        assert!(matches!(
            bin_activations(&act, &BinLayout::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn slot_validation() {
        let l = BinLayout::default();
        let frames: Vec<_> = (0..4).map(|i| Frame::filled(i, 160, 120, 0.0).unwrap()).collect();
        assert!(extract_cubes(&frames, &l).is_err());
        let small: Vec<_> = (0..5).map(|i| Frame::filled(i, 80, 60, 0.0).unwrap()).collect();
        assert!(extract_cubes(&small, &l).is_err());
        let gap: Vec<_> = [0, 1, 2, 3, 5]
            .iter()
            .map(|&i| Frame::filled(i, 160, 120, 0.0).unwrap())
            .collect();
        assert!(extract_cubes(&gap, &l).is_err());
    }

    #[test]
    fn identical_frames_give_no_cubes() {
        let px: Vec<f32> = (0..160 * 120).map(|i| ((i * 37) % 255) as f32 / 255.0).collect();
        let frames: Vec<_> = (0..5)
            .map(|i| Frame::new(i, 160, 120, px.clone()).unwrap())
            .collect();
        assert!(extract_cubes(&frames, &BinLayout::default()).unwrap().is_empty());
    }

    #[test]
    fn cube_csv_header() {
        let mut buf = Vec::new();
        let cube = CubeFeature {
            frame_start: 5,
            grid_x: 1,
            grid_y: 2,
            bin: 0,
            values: vec![0.5; CUBE_DIM],
        };
        write_cubes_csv(&mut buf, &[cube]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 4 + CUBE_DIM);
        assert!(lines.next().unwrap().starts_with("5,1,2,0,0.5,"));
    }
}
