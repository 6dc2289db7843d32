use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::ActivationFrame;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"UMK1";
pub const UMK1_HEADER_LEN: u64 = 20;

/// Frame-by-frame reader for `UMK1` activation files.
pub struct ActivationReader {
    reader: BufReader<File>,
    path: PathBuf,
    count: usize,
    channels: usize,
    height: usize,
    width: usize,
    next: usize,
}

impl ActivationReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let found = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut reader = BufReader::new(file);
        let mut header = [0u8; UMK1_HEADER_LEN as usize];
        if found < UMK1_HEADER_LEN {
            return Err(Error::Truncated {
                expected: UMK1_HEADER_LEN,
                found,
            });
        }
        reader
            .read_exact(&mut header)
            .map_err(|e| Error::io(path, e))?;
        if &header[..4] != MAGIC {
            return Err(Error::format(0, "bad magic, expected `UMK1`"));
        }
        let field = |i: usize| {
            let at = 4 + 4 * i;
            u32::from_le_bytes(header[at..at + 4].try_into().expect("4-byte slice")) as usize
        };
        let (count, channels, height, width) = (field(0), field(1), field(2), field(3));
        let expected = (count as u64)
            .checked_mul((channels * height * width) as u64)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(UMK1_HEADER_LEN))
            .ok_or_else(|| Error::format(4, "declared dimensions overflow"))?;
        if expected != found {
            return Err(Error::Truncated { expected, found });
        }
        Ok(Self {
            reader,
            path: path.to_path_buf(),
            count,
            channels,
            height,
            width,
            next: 0,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `(channels, height, width)` as declared in the header.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

impl Iterator for ActivationReader {
    type Item = Result<ActivationFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.count {
            return None;
        }
        let index = self.next;
        self.next += 1;
        let n = self.channels * self.height * self.width;
        let mut bytes = vec![0u8; n * 4];
        if let Err(e) = self.reader.read_exact(&mut bytes) {
            return Some(Err(Error::io(&self.path, e)));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let offset = UMK1_HEADER_LEN + ((index * n + pos) * 4) as u64;
            return Some(Err(Error::Data(format!(
                "non-finite activation in frame {index} at byte {offset}"
            ))));
        }
        Some(ActivationFrame::new(
            index,
            self.channels,
            self.height,
            self.width,
            values,
        ))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.count - self.next;
        (left, Some(left))
    }
}

pub fn load_activations(path: &Path) -> Result<Vec<ActivationFrame>> {
    ActivationReader::open(path)?.collect()
}

/// Writes frames in `UMK1` layout. All frames must share dimensions.
pub fn write_activations(path: &Path, frames: &[ActivationFrame]) -> Result<()> {
    let (c, h, w) = frames
        .first()
        .map(|f| (f.channels, f.height, f.width))
        .unwrap_or((0, 0, 0));
    if frames
        .iter()
        .any(|f| (f.channels, f.height, f.width) != (c, h, w))
    {
        return Err(Error::Argument("activation frames differ in dimensions".into()));
    }
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut header = Vec::with_capacity(UMK1_HEADER_LEN as usize);
    header.extend_from_slice(MAGIC);
    for v in [frames.len(), c, h, w] {
        let v = u32::try_from(v).map_err(|_| Error::Argument("dimension exceeds u32".into()))?;
        header.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&header).map_err(|e| Error::io(path, e))?;
    for f in frames {
        for v in f.values() {
            out.write_all(&v.to_le_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(count: u32, c: u32, h: u32, w: u32) -> Vec<u8> {
        let mut v = b"UMK1".to_vec();
        for x in [count, c, h, w] {
            v.extend_from_slice(&x.to_le_bytes());
        }
        v
    }

    #[test]
    fn reads_declared_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.umk");
        let mut bytes = header(2, 256, 13, 13);
        bytes.resize(bytes.len() + 2 * 256 * 13 * 13 * 4, 0);
        std::fs::write(&path, &bytes).unwrap();
        let frames = load_activations(&path).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].index, 1);
        assert!(frames[0].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn size_formula_mismatch_is_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.umk");
        let mut bytes = header(2, 4, 3, 3);
        bytes.resize(bytes.len() + 4 * 3 * 3 * 4, 0);
        std::fs::write(&path, &bytes).unwrap();
        match ActivationReader::open(&path) {
            Err(Error::Truncated { expected, found }) => {
                assert_eq!(expected, 20 + 2 * 4 * 3 * 3 * 4);
                assert_eq!(found, 20 + 4 * 3 * 3 * 4);
            }
            Err(e) => panic!("unexpected {e}"),
            Ok(_) => panic!("accepted short file"),
        }
    }

    #[test]
    fn bad_magic_and_nan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.umk");
        let mut bytes = header(1, 1, 1, 1);
        bytes[0] = b'X';
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            ActivationReader::open(&path),
            Err(Error::Format { offset: 0, .. })
        ));

        let mut bytes = header(1, 1, 1, 2);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_activations(&path), Err(Error::Data(_))));
    }

    #[test]
    fn writer_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.umk");
        let frames: Vec<_> = (0..3)
            .map(|i| {
                let vals = (0..2 * 3 * 4).map(|v| (v * (i + 1)) as f32 * 0.25).collect();
                ActivationFrame::new(i, 2, 3, 4, vals).unwrap()
            })
            .collect();
        write_activations(&path, &frames).unwrap();
        assert_eq!(load_activations(&path).unwrap(), frames);
    }
}
