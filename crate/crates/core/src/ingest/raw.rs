use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::Frame;
use crate::error::{Error, Result};

/// Sidecar header location for a raw-y8 data file: `<data>.hdr`.
pub fn raw_header_path(data: &Path) -> PathBuf {
    let mut name = data.as_os_str().to_owned();
    name.push(".hdr");
    PathBuf::from(name)
}

fn split_source(source: &Path) -> (PathBuf, PathBuf) {
    if source.extension().and_then(|e| e.to_str()) == Some("hdr") {
        (source.with_extension(""), source.to_path_buf())
    } else {
        (source.to_path_buf(), raw_header_path(source))
    }
}

fn parse_header(path: &Path) -> Result<(usize, usize, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fields: Vec<usize> = text
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(0, format!("{}: header is not `W H COUNT`", path.display())))?;
    match fields[..] {
        [w, h, count] if w > 0 && h > 0 => Ok((w, h, count)),
        _ => Err(Error::format(
            0,
            format!("{}: header is not `W H COUNT`", path.display()),
        )),
    }
}

/// Streaming reader over a raw-y8 file; the body length is checked up front.
pub struct RawY8Reader {
    reader: BufReader<File>,
    data_path: PathBuf,
    width: usize,
    height: usize,
    count: usize,
    next: usize,
}

impl RawY8Reader {
    /// `source` is the data file or its `.hdr` sidecar.
    pub fn open(source: &Path) -> Result<Self> {
        let (data_path, header_path) = split_source(source);
        let (width, height, count) = parse_header(&header_path)?;
        let file = File::open(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let found = file
            .metadata()
            .map_err(|e| Error::io(&data_path, e))?
            .len();
        let expected = (width * height * count) as u64;
        if found != expected {
            return Err(Error::Truncated { expected, found });
        }
        Ok(Self {
            reader: BufReader::new(file),
            data_path,
            width,
            height,
            count,
            next: 0,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn geometry(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Iterator for RawY8Reader {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.count {
            return None;
        }
        let size = self.width * self.height;
        let mut buf = vec![0u8; size];
        let index = self.next;
        self.next += 1;
        if let Err(e) = self.reader.read_exact(&mut buf) {
            let offset = (index * size) as u64;
            return Some(Err(if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(offset, format!("{}: frame {index} truncated", self.data_path.display()))
            } else {
                Error::io(&self.data_path, e)
            }));
        }
        Some(Frame::from_bytes(index, self.width, self.height, &buf))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.count - self.next;
        (left, Some(left))
    }
}

/// Writes frames as raw-y8 plus its `.hdr` sidecar. All frames must share geometry.
pub fn write_raw_y8(data: &Path, frames: &[Frame]) -> Result<()> {
    let (w, h) = frames
        .first()
        .map(|f| (f.width, f.height))
        .ok_or_else(|| Error::Argument("no frames to write".into()))?;
    if frames.iter().any(|f| (f.width, f.height) != (w, h)) {
        return Err(Error::Argument("frames differ in geometry".into()));
    }
    let header = raw_header_path(data);
    std::fs::write(&header, format!("{w} {h} {}\n", frames.len()))
        .map_err(|e| Error::io(&header, e))?;
    let mut out = std::io::BufWriter::new(File::create(data).map_err(|e| Error::io(data, e))?);
    for f in frames {
        out.write_all(&f.to_bytes()).map_err(|e| Error::io(data, e))?;
    }
    out.flush().map_err(|e| Error::io(data, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_shorter_than_header_is_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("clip.y8");
        std::fs::write(raw_header_path(&data), "160 120 2\n").unwrap();
        std::fs::write(&data, vec![0u8; 19200]).unwrap();
        match RawY8Reader::open(&data) {
            Err(Error::Truncated { expected, found }) => {
                assert_eq!(expected, 160 * 120 * 2);
                assert_eq!(found, 19200);
            }
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("truncated body accepted"),
        }
        std::fs::write(&data, vec![0u8; 38400]).unwrap();
        assert_eq!(RawY8Reader::open(&data).unwrap().count(), 2);
    }

    #[test]
    fn header_path_is_accepted_as_source() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("v.y8");
        let frames = vec![Frame::filled(0, 2, 2, 0.0).unwrap(); 3];
        write_raw_y8(&data, &frames).unwrap();
        let read: Vec<_> = RawY8Reader::open(&raw_header_path(&data))
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(read.len(), 3);
        assert_eq!(read[2].index, 2);
    }

    #[test]
    fn malformed_header() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("v.y8");
        std::fs::write(raw_header_path(&data), "160 x 2\n").unwrap();
        std::fs::write(&data, b"").unwrap();
        assert!(matches!(RawY8Reader::open(&data), Err(Error::Format { .. })));
    }
}
