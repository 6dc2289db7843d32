use std::path::{Path, PathBuf};

use super::Frame;
use crate::error::{Error, Result};

/// Decoded PNM raster, single channel, samples in `0..=maxval`.
///
/// Colour (`P6`) input is reduced to luma with BT.601 weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<f32>,
}

impl GrayImage {
    pub fn to_frame(&self, index: usize) -> Result<Frame> {
        let scale = f32::from(self.maxval);
        let pixels = self
            .samples
            .iter()
            .map(|&s| (s / scale).clamp(0.0, 1.0))
            .collect();
        Frame::new(index, self.width, self.height, pixels)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start as u64, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start as u64, format!("{what} out of range")))
    }
}

/// Decodes every image in a `P5`/`P6` byte stream (multi-image files are allowed).
pub fn decode_pnm(bytes: &[u8]) -> Result<Vec<GrayImage>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let mut images = Vec::new();
    loop {
        cur.skip_whitespace_and_comments();
        if cur.pos >= bytes.len() {
            break;
        }
        images.push(decode_one(&mut cur)?);
    }
    if images.is_empty() {
        return Err(Error::format(0, "empty PNM stream"));
    }
    Ok(images)
}

fn decode_one(cur: &mut Cursor<'_>) -> Result<GrayImage> {
    let magic_at = cur.pos;
    let magic = cur.bytes.get(cur.pos..cur.pos + 2);
    let channels = match magic {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(_) => {
            return Err(Error::format(
                magic_at as u64,
                "unsupported magic (only binary P5 and P6)",
            ))
        }
        None => return Err(Error::format(magic_at as u64, "truncated magic")),
    };
    cur.pos += 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(magic_at as u64, "zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(
            maxval_at as u64,
            format!("maxval {maxval} unsupported (8-bit samples only)"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    match cur.bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(Error::format(
                cur.pos as u64,
                "missing whitespace after header",
            ))
        }
    }
    let needed = width * height * channels;
    let available = cur.bytes.len() - cur.pos;
    if available < needed {
        return Err(Error::format(
            cur.bytes.len() as u64,
            format!("raster truncated: {needed} bytes needed, {available} present"),
        ));
    }
    let raster = &cur.bytes[cur.pos..cur.pos + needed];
    cur.pos += needed;
    let samples = if channels == 1 {
        raster.iter().map(|&b| f32::from(b)).collect()
    } else {
        raster
            .chunks_exact(3)
            .map(|rgb| {
                0.299 * f32::from(rgb[0]) + 0.587 * f32::from(rgb[1]) + 0.114 * f32::from(rgb[2])
            })
            .collect()
    };
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

/// Encodes a frame as binary `P5` with maxval 255.
pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.to_bytes());
    out
}

/// Lists the `.pgm`/`.ppm` files of a directory ordered by the number embedded
/// in each file stem (the last run of digits).
///
/// Files without a number, or two files with the same number, make the order
/// ambiguous and are rejected.
pub fn list_pgm_sequence(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut numbered = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !matches!(ext.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let number = trailing_number(stem).ok_or_else(|| {
            Error::Ordering(format!("`{}` carries no frame number", path.display()))
        })?;
        numbered.push((number, path));
    }
    if numbered.is_empty() {
        return Err(Error::format(
            0,
            format!("no PGM files in {}", dir.display()),
        ));
    }
    numbered.sort();
    for pair in numbered.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::Ordering(format!(
                "`{}` and `{}` share frame number {}",
                pair[0].1.display(),
                pair[1].1.display(),
                pair[0].0
            )));
        }
    }
    Ok(numbered.into_iter().map(|(_, p)| p).collect())
}

fn trailing_number(stem: &str) -> Option<u64> {
    let bytes = stem.as_bytes();
    let end = bytes.iter().rposition(u8::is_ascii_digit)? + 1;
    let start = bytes[..end]
        .iter()
        .rposition(|b| !b.is_ascii_digit())
        .map_or(0, |p| p + 1);
    stem[start..end].parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_p5_with_comments() {
        let mut bytes = b"P5\n# made by hand\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let imgs = decode_pnm(&bytes).unwrap();
        assert_eq!(imgs.len(), 1);
        let f = imgs[0].to_frame(0).unwrap();
        assert_eq!(f.pixels()[0], 0.0);
        assert_eq!(f.pixels()[1], 1.0);
        assert_eq!(f.pixels()[2], 128.0 / 255.0);
    }

    #[test]
    fn decodes_concatenated_images() {
        let a = encode_pgm(&Frame::filled(0, 3, 2, 0.0).unwrap());
        let b = encode_pgm(&Frame::filled(1, 3, 2, 1.0).unwrap());
        let imgs = decode_pnm(&[a, b].concat()).unwrap();
        assert_eq!(imgs.len(), 2);
        assert!(imgs[1].samples.iter().all(|&s| s == 255.0));
    }

    #[test]
    fn p6_uses_bt601_luma() {
        let mut bytes = b"P6 1 1 255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0]);
        let img = &decode_pnm(&bytes).unwrap()[0];
        assert!((img.samples[0] - 0.299 * 255.0).abs() < 1e-4);
    }

    #[test]
    fn truncated_raster_reports_offset() {
        let mut bytes = b"P5 4 4 255\n".to_vec();
        bytes.extend_from_slice(&[1; 10]);
        match decode_pnm(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, bytes.len() as u64),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_ascii_and_wide_samples() {
        assert!(matches!(
            decode_pnm(b"P2 1 1 255\n0"),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(matches!(
            decode_pnm(b"P5 1 1 65535\n\0\0"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn trailing_numbers() {
        assert_eq!(trailing_number("frame_0012"), Some(12));
        assert_eq!(trailing_number("cam2_frame7"), Some(7));
        assert_eq!(trailing_number("7"), Some(7));
        assert_eq!(trailing_number("frame"), None);
    }
}
