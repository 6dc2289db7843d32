//! Decoding of frames, ground-truth masks and exported CNN activation maps.
//!
//! Three on-disk formats are understood:
//!
//! * binary PGM (`P5`) and PPM (`P6`, converted to luma with BT.601 weights),
//!   either one image per file in a directory or several images concatenated
//!   in one file;
//! * raw 8-bit luma (`raw-y8`): a data file of `COUNT*W*H` bytes, frame-major
//!   and row-major, with a sidecar text header `W H COUNT\n` stored next to it
//!   as `<data>.hdr`;
//! * `UMK1` activation tensors: the magic `UMK1`, four little-endian `u32`
//!   (`count`, `channels`, `height`, `width`) and then the `f32` payload,
//!   frame-major, channel-major, row-major.

mod activations;
mod masks;
mod pgm;
mod raw;
mod resize;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use activations::{load_activations, write_activations, ActivationReader, UMK1_HEADER_LEN};
pub use masks::{load_frame_labels, load_masks};
pub use pgm::{decode_pnm, encode_pgm, list_pgm_sequence, GrayImage};
pub use raw::{raw_header_path, write_raw_y8, RawY8Reader};
pub use resize::resize_bilinear;

/// One grayscale frame with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pixels: Vec<f32>,
}

impl Frame {
    pub fn new(index: usize, width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "frame {index} has empty geometry {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Data(format!(
                "frame {index}: {} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Data(format!(
                "frame {index}: intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            index,
            width,
            height,
            pixels,
        })
    }

    /// Builds a frame from 8-bit samples, mapping byte `b` to `b / 255`.
    pub fn from_bytes(index: usize, width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let pixels = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        Self::new(index, width, height, pixels)
    }

    pub fn filled(index: usize, width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(index, width, height, vec![value; width * height])
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    /// Quantizes back to bytes (`round(v * 255)`).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Activation maps of one frame: `channels` maps of `height x width` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationFrame {
    pub index: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    values: Vec<f32>,
}

impl ActivationFrame {
    pub fn new(
        index: usize,
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::Data(format!(
                "activation frame {index}: {} values for {channels}x{height}x{width}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "activation frame {index}: non-finite value at element {pos}"
            )));
        }
        Ok(Self {
            index,
            channels,
            height,
            width,
            values,
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn at(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.values[(channel * self.height + row) * self.width + col]
    }
}

/// A binary per-pixel anomaly mask at the ground truth's native resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn anomalous_pixels(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_anomalous(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }
}

/// Per-frame anomaly labels, optionally backed by pixel masks.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    frame_labels: Vec<bool>,
    pixel_masks: Option<Vec<Mask>>,
}

impl GroundTruth {
    pub fn from_labels(frame_labels: Vec<bool>) -> Self {
        Self {
            frame_labels,
            pixel_masks: None,
        }
    }

    /// Labels are derived from the masks: a frame is anomalous iff its mask
    /// has at least one nonzero pixel.
    pub fn from_masks(masks: Vec<Mask>) -> Self {
        Self {
            frame_labels: derive_frame_labels(&masks),
            pixel_masks: Some(masks),
        }
    }

    pub fn frame_labels(&self) -> &[bool] {
        &self.frame_labels
    }

    pub fn pixel_masks(&self) -> Option<&[Mask]> {
        self.pixel_masks.as_deref()
    }

    pub fn len(&self) -> usize {
        self.frame_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_labels.is_empty()
    }

    pub fn check_frame_count(&self, frames: usize) -> Result<()> {
        if self.len() != frames {
            return Err(Error::Alignment(format!(
                "ground truth covers {} frames, video has {frames}",
                self.len()
            )));
        }
        Ok(())
    }
}

pub fn derive_frame_labels(masks: &[Mask]) -> Vec<bool> {
    masks.iter().map(Mask::is_anomalous).collect()
}

/// How a frame source is laid out on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameFormat {
    PgmSequence,
    RawY8,
}

impl std::str::FromStr for FrameFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm" | "pgm-sequence" => Ok(FrameFormat::PgmSequence),
            "raw-y8" | "y8" => Ok(FrameFormat::RawY8),
            other => Err(Error::Argument(format!("unknown frame format `{other}`"))),
        }
    }
}

impl FrameFormat {
    /// Guesses the format from the path: directories and `.pgm`/`.ppm` files
    /// are PGM sequences, anything else is raw-y8.
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            return FrameFormat::PgmSequence;
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some("pgm" | "ppm" | "pnm") => FrameFormat::PgmSequence,
            _ => FrameFormat::RawY8,
        }
    }
}

/// Streams frames in index order without holding the whole video in memory.
pub struct FrameReader {
    inner: FrameReaderInner,
}

enum FrameReaderInner {
    Files {
        files: std::vec::IntoIter<std::path::PathBuf>,
        pending: std::vec::IntoIter<Frame>,
        next_index: usize,
        geometry: Option<(usize, usize)>,
    },
    Raw(RawY8Reader),
}

impl FrameReader {
    pub fn open(source: &Path, format: FrameFormat) -> Result<Self> {
        let inner = match format {
            FrameFormat::PgmSequence => {
                let files = if source.is_dir() {
                    list_pgm_sequence(source)?
                } else if source.exists() {
                    vec![source.to_path_buf()]
                } else {
                    return Err(Error::io(
                        source,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
                    ));
                };
                FrameReaderInner::Files {
                    files: files.into_iter(),
                    pending: Vec::new().into_iter(),
                    next_index: 0,
                    geometry: None,
                }
            }
            FrameFormat::RawY8 => FrameReaderInner::Raw(RawY8Reader::open(source)?),
        };
        Ok(Self { inner })
    }

    /// Frame count when it is known without decoding (raw-y8 only).
    pub fn declared_len(&self) -> Option<usize> {
        match &self.inner {
            FrameReaderInner::Raw(r) => Some(r.count()),
            FrameReaderInner::Files { .. } => None,
        }
    }
}

impl Iterator for FrameReader {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            FrameReaderInner::Raw(r) => r.next(),
            FrameReaderInner::Files {
                files,
                pending,
                next_index,
                geometry,
            } => loop {
                if let Some(frame) = pending.next() {
                    let frame = frame.with_index(*next_index);
                    *next_index += 1;
                    match geometry {
                        Some(g) if *g != (frame.width, frame.height) => {
                            return Some(Err(Error::Data(format!(
                                "frame {} is {}x{}, earlier frames are {}x{}",
                                frame.index, frame.width, frame.height, g.0, g.1
                            ))))
                        }
                        _ => *geometry = Some((frame.width, frame.height)),
                    }
                    return Some(Ok(frame));
                }
                let path = files.next()?;
                match read_pnm_frames(&path) {
                    Ok(frames) => *pending = frames.into_iter(),
                    Err(e) => return Some(Err(e)),
                }
            },
        }
    }
}

fn read_pnm_frames(path: &Path) -> Result<Vec<Frame>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)?
        .into_iter()
        .map(|img| img.to_frame(0))
        .collect()
}

/// Loads a whole frame sequence into memory.
pub fn load_frames(source: &Path, format: FrameFormat) -> Result<Vec<Frame>> {
    FrameReader::open(source, format)?.collect()
}
