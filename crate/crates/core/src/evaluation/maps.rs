use std::path::Path;

use serde::{Deserialize, Serialize};

use super::roc::{roc, RocLevel, RocReport};
use crate::error::{Error, Result};
use crate::features::{BinLayout, Channel, GRID_COLS, GRID_ROWS, PATCH, WORK_HEIGHT, WORK_WIDTH};
use crate::ingest::{load_activations, write_activations, ActivationFrame, GroundTruth};
use crate::pipeline::{blur_2d, WindowRecord};

/// Default spatial smoothing of upsampled maps, in working-resolution pixels.
pub const DEFAULT_SIGMA_PX: f64 = 10.0;

/// What a motion cell without a surviving cube receives from a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellFill {
    /// The window's score for the cell's bin.
    #[default]
    BinScore,
    Zero,
}

impl std::str::FromStr for CellFill {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bin-score" | "bin" => Ok(Self::BinScore),
            "zero" => Ok(Self::Zero),
            other => Err(Error::Argument(format!("cell fill `{other}` is not bin-score or zero"))),
        }
    }
}

/// Per-frame scores on the 16x12 cube grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub frame: usize,
    pub grid: Vec<f64>,
}

impl ScoreMap {
    pub fn uniform(frame: usize, value: f64) -> Self {
        Self {
            frame,
            grid: vec![value; GRID_COLS * GRID_ROWS],
        }
    }

    pub fn cell(&self, grid_x: usize, grid_y: usize) -> f64 {
        self.grid[grid_y * GRID_COLS + grid_x]
    }

    /// The 160x120 view: each cell copied over its 10x10 patch, then a
    /// Gaussian blur with `sigma_px` (0 skips it).
    pub fn upsample(&self, sigma_px: f64) -> Vec<f64> {
        let mut px = vec![0.0; WORK_WIDTH * WORK_HEIGHT];
        for y in 0..WORK_HEIGHT {
            for x in 0..WORK_WIDTH {
                px[y * WORK_WIDTH + x] = self.cell(x / PATCH, y / PATCH);
            }
        }
        blur_2d(&px, WORK_WIDTH, WORK_HEIGHT, sigma_px)
    }

    /// The upsampled view rescaled (nearest neighbour) to `width x height`.
    pub fn at_resolution(&self, width: usize, height: usize, sigma_px: f64) -> Vec<f64> {
        let px = self.upsample(sigma_px);
        if (width, height) == (WORK_WIDTH, WORK_HEIGHT) {
            return px;
        }
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = ((2 * y + 1) * WORK_HEIGHT / (2 * height)).min(WORK_HEIGHT - 1);
            for x in 0..width {
                let sx = ((2 * x + 1) * WORK_WIDTH / (2 * width)).min(WORK_WIDTH - 1);
                out.push(px[sy * WORK_WIDTH + sx]);
            }
        }
        out
    }
}

fn cell_bins(layout: &BinLayout) -> Vec<usize> {
    (0..GRID_ROWS)
        .flat_map(|gy| (0..GRID_COLS).map(move |gx| (gx, gy)))
        .map(|(gx, gy)| layout.bin_of_patch(gx, gy).expect("cell inside the grid"))
        .collect()
}

/// Spatial score maps for every frame.
///
/// A window gives each cell the score of the cell's bin; on the motion
/// channel, cells without a surviving cube in the examined half get `fill`
/// instead. Per frame the cell values are averaged over covering windows and
/// then over channels. Frames no window covers copy the nearest covered
/// frame, the earlier one on ties.
pub fn cube_score_map(
    records: &[WindowRecord],
    frame_count: usize,
    channels: &[Channel],
    layout: &BinLayout,
    fill: CellFill,
) -> Result<Vec<ScoreMap>> {
    if records.is_empty() {
        return Err(Error::Configuration(
            "no window scores retained; rerun the detector with map output enabled".into(),
        ));
    }
    let bins = layout.count();
    let cells = GRID_COLS * GRID_ROWS;
    let motion = channels.iter().position(|&c| c == Channel::Motion);
    if motion.is_some() && records.iter().any(|r| r.motion_cells.len() != cells) {
        return Err(Error::Configuration(
            "window records lack cube locations; rerun the detector with map output enabled".into(),
        ));
    }
    if records.iter().any(|r| r.scores.len() != channels.len() * bins) {
        return Err(Error::Configuration(format!(
            "window records do not hold {} scores each",
            channels.len() * bins
        )));
    }
    let bin_of = cell_bins(layout);
    let mut sums = vec![vec![0.0; cells]; frame_count];
    let mut counts = vec![0u32; frame_count];
    let mut ordered: Vec<&WindowRecord> = records.iter().collect();
    ordered.sort_by_key(|r| (r.window.start, r.window.id));
    for r in ordered {
        let values: Vec<f64> = (0..cells)
            .map(|cell| {
                let per_channel = channels.iter().enumerate().map(|(c, &ch)| {
                    let s = r.scores[c * bins + bin_of[cell]];
                    match (ch, fill) {
                        (Channel::Motion, CellFill::Zero) if !r.motion_cells[cell] => 0.0,
                        _ => s,
                    }
                });
                per_channel.sum::<f64>() / channels.len() as f64
            })
            .collect();
        for f in r.window.examined().filter(|&f| f < frame_count) {
            for (s, v) in sums[f].iter_mut().zip(&values) {
                *s += v;
            }
            counts[f] += 1;
        }
    }
    let covered: Vec<usize> = (0..frame_count).filter(|&f| counts[f] > 0).collect();
    if covered.is_empty() {
        return Err(Error::Configuration("no frame is covered by a window".into()));
    }
    Ok((0..frame_count)
        .map(|f| {
            let src = nearest(&covered, f);
            let n = f64::from(counts[src]);
            ScoreMap {
                frame: f,
                grid: sums[src].iter().map(|s| s / n).collect(),
            }
        })
        .collect())
}

/// Element of the sorted, non-empty `covered` nearest to `f`; the smaller on ties.
fn nearest(covered: &[usize], f: usize) -> usize {
    match covered.binary_search(&f) {
        Ok(_) => f,
        Err(0) => covered[0],
        Err(i) if i == covered.len() => covered[i - 1],
        Err(i) => {
            let (l, r) = (covered[i - 1], covered[i]);
            if f - l <= r - f {
                l
            } else {
                r
            }
        }
    }
}

/// Detection score of one frame for the pixel-level ROC.
///
/// A positive frame counts as detected at threshold `t` when more than 40%
/// of its anomalous pixels have map value `>= t`, which holds exactly for
/// `t` up to the `q`-th largest of those values with `q = floor(2n/5) + 1`.
/// A negative frame is a false positive as soon as any pixel reaches `t`,
/// i.e. up to its maximum.
pub fn pixel_frame_score(map: &[f64], mask: &[bool]) -> f64 {
    let n = mask.iter().filter(|&&b| b).count();
    if n == 0 {
        return map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    let mut hits: Vec<f64> = map.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    let q = 2 * n / 5 + 1;
    let (_, kth, _) = hits.select_nth_unstable_by(q - 1, |a, b| b.total_cmp(a));
    *kth
}

/// Pixel-level ROC over frames with the 40% overlap rule. Maps are
/// upsampled with blur `sigma_px` and rescaled to the mask resolution.
pub fn pixel_auc(maps: &[ScoreMap], gt: &GroundTruth, sigma_px: f64) -> Result<RocReport> {
    let masks = gt
        .pixel_masks()
        .ok_or_else(|| Error::Capability("pixel-level evaluation needs pixel masks".into()))?;
    if masks.len() != maps.len() {
        return Err(Error::Alignment(format!(
            "{} score maps for {} ground-truth masks",
            maps.len(),
            masks.len()
        )));
    }
    let scores: Vec<f64> = maps
        .iter()
        .zip(masks)
        .map(|(map, mask)| pixel_frame_score(&map.at_resolution(mask.width, mask.height, sigma_px), &mask.bits))
        .collect();
    let labels: Vec<bool> = masks.iter().map(|m| m.is_anomalous()).collect();
    roc(RocLevel::Pixel, &scores, &labels)
}

/// Stores maps as a `UMK1` file with one 1x12x16 tensor per frame.
pub fn write_maps(path: &Path, maps: &[ScoreMap]) -> Result<()> {
    let frames = maps
        .iter()
        .enumerate()
        .map(|(i, m)| {
            ActivationFrame::new(i, 1, GRID_ROWS, GRID_COLS, m.grid.iter().map(|&v| v as f32).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    write_activations(path, &frames)
}

pub fn load_maps(path: &Path) -> Result<Vec<ScoreMap>> {
    load_activations(path)?
        .into_iter()
        .map(|a| {
            if (a.channels, a.height, a.width) != (1, GRID_ROWS, GRID_COLS) {
                return Err(Error::format(
                    4,
                    format!(
                        "map file holds {}x{}x{} tensors, expected 1x{GRID_ROWS}x{GRID_COLS}",
                        a.channels, a.height, a.width
                    ),
                ));
            }
            Ok(ScoreMap {
                frame: a.index,
                grid: a.values().iter().map(|&v| f64::from(v)).collect(),
            })
        })
        .collect()
}
