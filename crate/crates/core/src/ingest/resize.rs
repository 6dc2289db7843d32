use super::Frame;
use crate::error::{Error, Result};

/// Source coordinate for output sample `i`, mapping the centres of the first
/// and last output pixels onto the centres of the first and last input pixels.
#[inline]
fn source_coord(i: usize, in_len: usize, out_len: usize) -> (usize, usize, f32) {
    if out_len == 1 || in_len == 1 {
        let c = (in_len - 1) as f64 / 2.0;
        let lo = c.floor() as usize;
        return (lo, (lo + 1).min(in_len - 1), (c - lo as f64) as f32);
    }
    let pos = i as f64 * (in_len - 1) as f64 / (out_len - 1) as f64;
    let lo = (pos.floor() as usize).min(in_len - 1);
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, (pos - lo as f64) as f32)
}

/// Bilinear resampling with edge clamping. Same-size input is returned unchanged.
pub fn resize_bilinear(frame: &Frame, out_w: usize, out_h: usize) -> Result<Frame> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Argument(format!(
            "resize target {out_w}x{out_h} is empty"
        )));
    }
    if (out_w, out_h) == (frame.width, frame.height) {
        return Ok(frame.clone());
    }
    let xs: Vec<_> = (0..out_w)
        .map(|x| source_coord(x, frame.width, out_w))
        .collect();
    let src = frame.pixels();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = source_coord(y, frame.height, out_h);
        let row0 = &src[y0 * frame.width..(y0 + 1) * frame.width];
        let row1 = &src[y1 * frame.width..(y1 + 1) * frame.width];
        for &(x0, x1, fx) in &xs {
            let top = row0[x0] + (row0[x1] - row0[x0]) * fx;
            let bottom = row1[x0] + (row1[x1] - row1[x0]) * fx;
            let v = top + (bottom - top) * fy;
            out.push(v.clamp(0.0, 1.0));
        }
    }
    Frame::new(frame.index, out_w, out_h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_stays_constant() {
        let f = Frame::filled(3, 7, 5, 0.25).unwrap();
        let r = resize_bilinear(&f, 160, 120).unwrap();
        assert_eq!(r.index, 3);
        assert!(r.pixels().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn two_by_two_to_four_by_two() {
        let f = Frame::new(0, 2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = resize_bilinear(&f, 4, 2).unwrap();
        let expected = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for row in r.pixels().chunks(4) {
            for (a, b) in row.iter().zip(expected) {
                assert!((a - b).abs() < 1e-6, "{row:?}");
            }
        }
    }

    #[test]
    fn identity_is_bit_identical() {
        let f = Frame::new(0, 3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(resize_bilinear(&f, 3, 2).unwrap(), f);
    }

    #[test]
    fn zero_target_rejected() {
        let f = Frame::filled(0, 2, 2, 0.0).unwrap();
        assert!(matches!(resize_bilinear(&f, 0, 3), Err(Error::Argument(_))));
    }

    proptest! {
        #[test]
        fn output_within_input_range(
            w in 1usize..9, h in 1usize..9, ow in 1usize..20, oh in 1usize..20,
            seed in prop::collection::vec(0u8..=255, 64),
        ) {
            let bytes: Vec<u8> = (0..w * h).map(|i| seed[i % seed.len()]).collect();
            let f = Frame::from_bytes(0, w, h, &bytes).unwrap();
            let lo = f.pixels().iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = f.pixels().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let r = resize_bilinear(&f, ow, oh).unwrap();
            for &p in r.pixels() {
                prop_assert!(p >= lo - 1e-6 && p <= hi + 1e-6);
            }
        }
    }
}
