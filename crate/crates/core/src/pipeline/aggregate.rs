use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::smooth::{gaussian_kernel, smooth_at};
use super::windows::Window;
use crate::features::{Channel, GRID_COLS, GRID_ROWS};

/// Scores of one window: one value per `(channel, bin)`, indexed
/// `channel_idx * bins + bin`, plus which grid cells held a surviving motion
/// cube in the examined half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: Window,
    pub scores: Vec<f64>,
    /// Row-major 16x12 flags; empty when the motion channel is off.
    pub motion_cells: Vec<bool>,
}

/// Per-frame score chain, from per-bin values to the final smoothed score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub channels: Vec<Channel>,
    pub bins: usize,
    /// `[frame][channel_idx * bins + bin]`.
    pub per_bin_channel: Vec<Vec<f64>>,
    /// `[frame][channel_idx]`: maximum over bins.
    pub per_channel: Vec<Vec<f64>>,
    /// Mean over channels.
    pub fused: Vec<f64>,
    pub smoothed: Vec<f64>,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.fused.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fused.is_empty()
    }

    pub fn channel(&self, channel: Channel) -> Option<Vec<f64>> {
        let c = self.channels.iter().position(|&ch| ch == channel)?;
        Some(self.per_channel.iter().map(|v| v[c]).collect())
    }

    /// Replaces `smoothed` with the Gaussian-smoothed `fused` series.
    pub fn with_smoothing(mut self, sigma: f64) -> Self {
        self.smoothed = super::smooth::smooth(&self.fused, sigma);
        self
    }

    /// Score CSV: `frame,score_motion,score_appearance,score_fused,score_smoothed`;
    /// columns of disabled channels stay empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frame,score_motion,score_appearance,score_fused,score_smoothed")?;
        let col = |ch: Channel| self.channels.iter().position(|&c| c == ch);
        let (mc, ac) = (col(Channel::Motion), col(Channel::Appearance));
        for f in 0..self.len() {
            let cell = |c: Option<usize>| c.map(|c| self.per_channel[f][c].to_string()).unwrap_or_default();
            writeln!(
                out,
                "{f},{},{},{},{}",
                cell(mc),
                cell(ac),
                self.fused[f],
                self.smoothed[f]
            )?;
        }
        Ok(())
    }
}

/// Reads one column of a score CSV (as written by [`ScoreSeries::write_csv`])
/// in row order. Empty cells are an error.
pub fn read_score_column(text: &str, column: &str) -> crate::Result<Vec<f64>> {
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("");
    let idx = header
        .trim_end()
        .split(',')
        .position(|c| c == column)
        .ok_or_else(|| crate::Error::format(0, format!("score CSV has no `{column}` column")))?;
    let mut offset = header.len() as u64;
    let mut out = Vec::new();
    for line in lines {
        let row = line.trim_end();
        if !row.is_empty() {
            let cell = row.split(',').nth(idx).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                crate::Error::format(offset, format!("row {}: `{cell}` is not a score", out.len() + 1))
            })?;
            out.push(v);
        }
        offset += line.len() as u64;
    }
    Ok(out)
}

/// Values of one frame once no later window can change them.
#[derive(Debug, Clone, PartialEq)]
pub struct SettledFrame {
    pub frame: usize,
    pub per_bin_channel: Vec<f64>,
    pub per_channel: Vec<f64>,
    pub fused: f64,
    /// False for frames outside every examined half, which copy the nearest
    /// scored frame.
    pub scored: bool,
}

#[derive(Debug, Clone)]
struct FrameAccum {
    sums: Vec<f64>,
    count: u32,
}

/// Running per-frame means over the windows whose examined half contains
/// the frame. Windows must be added in order of their start.
///
/// The same accumulator serves the batch and the streaming paths, so both
/// produce bit-identical frame values.
#[derive(Debug, Clone)]
pub struct ScoreAccumulator {
    channels: Vec<Channel>,
    bins: usize,
    frames: Vec<FrameAccum>,
    next_settle: usize,
    last_scored: Option<usize>,
    settled: Vec<SettledFrame>,
}

impl ScoreAccumulator {
    pub fn new(channels: Vec<Channel>, bins: usize) -> Self {
        Self {
            channels,
            bins,
            frames: Vec::new(),
            next_settle: 0,
            last_scored: None,
            settled: Vec::new(),
        }
    }

    fn width(&self) -> usize {
        self.channels.len() * self.bins
    }

    fn ensure(&mut self, len: usize) {
        let width = self.width();
        if self.frames.len() < len {
            self.frames.resize(
                len,
                FrameAccum {
                    sums: vec![0.0; width],
                    count: 0,
                },
            );
        }
    }

    pub fn add(&mut self, record: &WindowRecord) {
        debug_assert_eq!(record.scores.len(), self.width());
        let examined = record.window.examined();
        self.ensure(examined.end);
        for f in examined {
            debug_assert!(f >= self.next_settle, "window added after frame {f} settled");
            let acc = &mut self.frames[f];
            for (s, v) in acc.sums.iter_mut().zip(&record.scores) {
                *s += v;
            }
            acc.count += 1;
        }
    }

    fn mean(&self, f: usize) -> Vec<f64> {
        let acc = &self.frames[f];
        let n = f64::from(acc.count);
        acc.sums.iter().map(|s| s / n).collect()
    }

    fn settle_frame(&mut self, frame: usize, source: usize) {
        let per_bin_channel = self.mean(source);
        let per_channel: Vec<f64> = per_bin_channel
            .chunks(self.bins)
            .map(|bins| bins.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let fused = per_channel.iter().sum::<f64>() / per_channel.len() as f64;
        self.settled.push(SettledFrame {
            frame,
            per_bin_channel,
            per_channel,
            fused,
            scored: frame == source,
        });
    }

    fn first_scored_after(&self, f: usize) -> Option<usize> {
        (f + 1..self.frames.len()).find(|&j| self.frames[j].count > 0)
    }

    /// Settles frames below `boundary`, whose coverage is final. With `end`
    /// set, `boundary` is the stream length and every frame is resolved.
    ///
    /// Frames outside every examined half take the nearest scored frame
    /// (the earlier one on ties); a frame is held back while that choice
    /// still depends on windows not yet seen. Returns the number of frames
    /// newly settled.
    pub fn settle(&mut self, boundary: usize, end: bool) -> usize {
        let before = self.settled.len();
        if end {
            self.ensure(boundary);
        }
        while self.next_settle < boundary.min(self.frames.len()) {
            let f = self.next_settle;
            let source = if self.frames[f].count > 0 {
                f
            } else {
                let right = self.first_scored_after(f).filter(|&r| r < boundary || end);
                match (self.last_scored, right) {
                    (Some(l), Some(r)) => {
                        if f - l <= r - f {
                            l
                        } else if r < boundary {
                            r
                        } else {
                            break;
                        }
                    }
                    (Some(l), None) if end || f - l <= boundary - f => l,
                    (None, Some(r)) if r < boundary => r,
                    _ => break,
                }
            };
            if source > f && self.frames[source].count == 0 {
                break;
            }
            self.settle_frame(f, source);
            if source == f {
                self.last_scored = Some(f);
            }
            self.next_settle += 1;
        }
        self.settled.len() - before
    }

    pub fn settled(&self) -> &[SettledFrame] {
        &self.settled
    }

    /// Assembles the settled frames into a series (smoothing = identity).
    pub fn series(&self) -> ScoreSeries {
        ScoreSeries {
            channels: self.channels.clone(),
            bins: self.bins,
            per_bin_channel: self.settled.iter().map(|s| s.per_bin_channel.clone()).collect(),
            per_channel: self.settled.iter().map(|s| s.per_channel.clone()).collect(),
            fused: self.settled.iter().map(|s| s.fused).collect(),
            smoothed: self.settled.iter().map(|s| s.fused).collect(),
        }
    }
}

/// Turns per-window scores into per-frame scores for a `frame_count`-frame
/// video: mean over covering windows per `(channel, bin)`, nearest-frame
/// backfill, maximum over bins, mean over channels.
pub fn aggregate(
    records: &[WindowRecord],
    frame_count: usize,
    channels: &[Channel],
    bins: usize,
) -> ScoreSeries {
    let mut acc = ScoreAccumulator::new(channels.to_vec(), bins);
    let mut ordered: Vec<&WindowRecord> = records.iter().collect();
    ordered.sort_by_key(|r| (r.window.start, r.window.id));
    for r in ordered {
        acc.add(r);
    }
    acc.settle(frame_count, true);
    acc.series()
}

/// Live smoothing: the value at `i` over the frames available so far.
pub fn live_smoothed(fused: &[f64], i: usize, sigma: f64) -> f64 {
    smooth_at(fused, i, &gaussian_kernel(sigma)).clamp(0.0, 1.0)
}

/// Debug dump of per-window, per-bin scores keyed by window id.
pub fn write_bins_json<W: Write>(
    out: W,
    records: &[WindowRecord],
    channels: &[Channel],
    bins: usize,
) -> serde_json::Result<()> {
    #[derive(Serialize)]
    struct Entry<'a> {
        start: usize,
        end: usize,
        scores: BTreeMap<&'a str, &'a [f64]>,
    }
    let map: BTreeMap<usize, Entry<'_>> = records
        .iter()
        .map(|r| {
            let scores = channels
                .iter()
                .enumerate()
                .map(|(c, ch)| (ch.name(), &r.scores[c * bins..(c + 1) * bins]))
                .collect();
            (
                r.window.id,
                Entry {
                    start: r.window.start,
                    end: r.window.end(),
                    scores,
                },
            )
        })
        .collect();
    serde_json::to_writer_pretty(out, &map)
}

pub(crate) fn empty_cells() -> Vec<bool> {
    vec![false; GRID_COLS * GRID_ROWS]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: usize, start: usize, w: usize, scores: Vec<f64>) -> WindowRecord {
        WindowRecord {
            window: Window { id, start, half: w },
            scores,
            motion_cells: Vec::new(),
        }
    }

    #[test]
    fn single_window_backfills() {
        let s = aggregate(&[rec(0, 0, 10, vec![0.7])], 20, &[Channel::Motion], 1);
        assert_eq!(s.len(), 20);
        assert!(s.fused.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn overlapping_windows_average() {
        let recs = [rec(0, 0, 10, vec![0.4]), rec(1, 5, 10, vec![0.6])];
        let s = aggregate(&recs, 25, &[Channel::Motion], 1);
        assert_eq!(s.fused[12], 0.4);
        assert!((s.fused[17] - 0.5).abs() < 1e-15);
        assert_eq!(s.fused[22], 0.6);
        assert_eq!(s.fused[3], 0.4);
    }

    #[test]
    fn max_over_bins_then_mean_over_channels() {
        let s = aggregate(
            &[rec(0, 0, 10, vec![0.5, 0.9, 0.5, 0.5, 0.6, 0.5, 0.5, 0.7])],
            20,
            &[Channel::Motion, Channel::Appearance],
            4,
        );
        assert_eq!(s.per_channel[15], vec![0.9, 0.7]);
        assert!((s.fused[15] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn gaps_take_the_nearest_frame() {
        // stride 15 > w leaves frames 20..25 outside every examined half
        let recs = [rec(0, 0, 10, vec![0.2]), rec(1, 15, 10, vec![0.8])];
        let s = aggregate(&recs, 40, &[Channel::Motion], 1);
        assert_eq!(&s.fused[19..26], &[0.2, 0.2, 0.2, 0.2, 0.8, 0.8, 0.8]);
        assert_eq!(s.fused[39], 0.8);
    }

    #[test]
    fn streaming_settles_only_final_frames() {
        let mut acc = ScoreAccumulator::new(vec![Channel::Motion], 1);
        acc.add(&rec(0, 0, 10, vec![0.4]));
        // next window starts at 5, so frames < 15 are final
        assert_eq!(acc.settle(15, false), 15);
        acc.add(&rec(1, 5, 10, vec![0.6]));
        assert_eq!(acc.settle(20, false), 5);
        assert_eq!(acc.settle(25, true), 5);
        let s = acc.series();
        assert_eq!(s.fused[..15], [0.4; 15]);
        assert!((s.fused[15] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn csv_leaves_disabled_channels_blank() {
        let s = aggregate(&[rec(0, 0, 1, vec![0.25])], 2, &[Channel::Appearance], 1);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "frame,score_motion,score_appearance,score_fused,score_smoothed\n0,,0.25,0.25,0.25\n1,,0.25,0.25,0.25\n"
        );
    }

    #[test]
    fn score_column_round_trip() {
        let s = aggregate(&[rec(0, 0, 1, vec![0.25])], 3, &[Channel::Motion], 1);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(read_score_column(&text, "score_motion").unwrap(), vec![0.25; 3]);
        assert!(matches!(read_score_column(&text, "score_appearance"), Err(crate::Error::Format { .. })));
        assert!(matches!(read_score_column(&text, "nope"), Err(crate::Error::Format { offset: 0, .. })));
    }

    #[test]
    fn bins_json_keys_by_window() {
        let mut buf = Vec::new();
        write_bins_json(&mut buf, &[rec(3, 15, 10, vec![0.5, 0.75])], &[Channel::Motion], 2).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["3"]["scores"]["motion"][1], 0.75);
        assert_eq!(v["3"]["end"], 35);
    }
}
