use std::path::Path;

use super::{decode_pnm, list_pgm_sequence, GroundTruth, Mask};
use crate::error::{Error, Result};

/// Loads per-frame pixel masks (a directory of PGMs or one multi-image file).
///
/// Any nonzero sample marks an anomalous pixel. When `expected_frames` is
/// given, the mask count must match it.
pub fn load_masks(source: &Path, expected_frames: Option<usize>) -> Result<GroundTruth> {
    let files = if source.is_dir() {
        list_pgm_sequence(source)?
    } else {
        vec![source.to_path_buf()]
    };
    let mut masks = Vec::new();
    for path in files {
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        for img in decode_pnm(&bytes)? {
            masks.push(Mask {
                width: img.width,
                height: img.height,
                bits: img.samples.iter().map(|&s| s > 0.0).collect(),
            });
        }
    }
    if let Some(n) = expected_frames {
        if masks.len() != n {
            return Err(Error::Alignment(format!(
                "{} masks for a {n}-frame video",
                masks.len()
            )));
        }
    }
    Ok(GroundTruth::from_masks(masks))
}

/// Reads frame-level labels from text: one `0`/`1` token per frame,
/// separated by whitespace or commas. Lines starting with `#` are ignored.
pub fn load_frame_labels(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        if !line.trim_start().starts_with('#') {
            for token in line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
            {
                labels.push(match token {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::format(
                            offset,
                            format!("label `{other}` is not 0 or 1"),
                        ))
                    }
                });
            }
        }
        offset += line.len() as u64;
    }
    Ok(GroundTruth::from_labels(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{encode_pgm, Frame};

    fn write_masks(dir: &Path, n: usize, hot: Option<usize>) {
        for i in 0..n {
            let mut f = vec![0.0f32; 16];
            if hot == Some(i) {
                f[5] = 1.0;
            }
            let frame = Frame::new(i, 4, 4, f).unwrap();
            std::fs::write(dir.join(format!("{i:03}.pgm")), encode_pgm(&frame)).unwrap();
        }
    }

    #[test]
    fn all_zero_masks_are_normal() {
        let dir = tempfile::tempdir().unwrap();
        write_masks(dir.path(), 6, None);
        let gt = load_masks(dir.path(), Some(6)).unwrap();
        assert!(gt.frame_labels().iter().all(|&l| !l));
    }

    #[test]
    fn single_pixel_marks_frame() {
        let dir = tempfile::tempdir().unwrap();
        write_masks(dir.path(), 8, Some(5));
        let gt = load_masks(dir.path(), None).unwrap();
        let expected: Vec<bool> = (0..8).map(|i| i == 5).collect();
        assert_eq!(gt.frame_labels(), &expected[..]);
        assert_eq!(gt.pixel_masks().unwrap()[5].anomalous_pixels(), 1);
    }

    #[test]
    fn count_mismatch_is_alignment_error() {
        let dir = tempfile::tempdir().unwrap();
        write_masks(dir.path(), 10, None);
        assert!(matches!(
            load_masks(dir.path(), Some(9)),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn label_text() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.txt");
        std::fs::write(&p, "# gt\n0 0 1\n1,0\n").unwrap();
        let gt = load_frame_labels(&p).unwrap();
        assert_eq!(gt.frame_labels(), &[false, false, true, true, false]);
        std::fs::write(&p, "0 2\n").unwrap();
        assert!(matches!(load_frame_labels(&p), Err(Error::Format { offset: 0, .. })));
    }
}
