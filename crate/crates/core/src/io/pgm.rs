//! Binary greyscale PGM (P5) export.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ScanImage;

/// Encodes `img` with its range min-max mapped onto `[0, maxval]`, row 0 first.
/// 16-bit samples are big-endian. A constant image encodes as all zeros and
/// returns a warning.
pub fn encode_pgm(img: &ScanImage, bit_depth: u8) -> Result<(Vec<u8>, Option<String>)> {
    let maxval: u32 = match bit_depth {
        8 => 255,
        16 => 65535,
        other => {
            return Err(Error::InvalidArgument(format!("PGM bit depth must be 8 or 16, got {other}")));
        }
    };
    if img.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{} image has non-finite values", img.channel)));
    }
    let (lo, hi) = img.finite_range().ok_or(Error::DegenerateRange)?;
    let span = hi - lo;
    let warning = (span <= 0.0).then(|| format!("{} image is constant; PGM pixels set to 0", img.channel));
    let mut out = format!("P5\n{} {}\n{}\n", img.nx, img.ny, maxval).into_bytes();
    for &v in &img.values {
        let level = if span > 0.0 {
            ((v - lo) / span * maxval as f64).round().clamp(0.0, maxval as f64) as u32
        } else {
            0
        };
        if bit_depth == 8 {
            out.push(level as u8);
        } else {
            out.extend_from_slice(&(level as u16).to_be_bytes());
        }
    }
    Ok((out, warning))
}

pub fn export_pgm(img: &ScanImage, path: &Path, bit_depth: u8) -> Result<Option<String>> {
    let (bytes, warning) = encode_pgm(img, bit_depth)?;
    if let Some(w) = &warning {
        log::warn!("{}: {w}", path.display());
    }
    fs::write(path, bytes)?;
    Ok(warning)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Channel, GridMeta};

    /// Minimal independent P5 reader: header tokens, then raw samples.
    fn decode(bytes: &[u8]) -> (usize, usize, u32, Vec<u32>) {
        let mut tokens = Vec::new();
        let mut pos = 0;
        while tokens.len() < 4 {
            while bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            tokens.push(String::from_utf8(bytes[start..pos].to_vec()).unwrap());
        }
        pos += 1;
        assert_eq!(tokens[0], "P5");
        let w: usize = tokens[1].parse().unwrap();
        let h: usize = tokens[2].parse().unwrap();
        let maxval: u32 = tokens[3].parse().unwrap();
        let data = &bytes[pos..];
        let px = if maxval < 256 {
            data.iter().map(|&b| b as u32).collect()
        } else {
            data.chunks(2).map(|c| (c[0] as u32) << 8 | c[1] as u32).collect()
        };
        (w, h, maxval, px)
    }

    #[test]
    fn checkerboard_bytes() {
        let img = ScanImage::from_rows(Channel::R, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let (bytes, warning) = encode_pgm(&img, 8).unwrap();
        assert!(warning.is_none());
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 255, 255, 0]);
    }

    #[test]
    fn constant_image_is_black_with_warning() {
        let img = ScanImage::from_rows(Channel::R, &[vec![3.0, 3.0]]).unwrap();
        let (bytes, warning) = encode_pgm(&img, 16).unwrap();
        assert!(warning.is_some());
        assert!(bytes.ends_with(&[0, 0, 0, 0]));
    }

    #[test]
    fn decoded_values_within_one_level() {
        let vals: Vec<f64> = (0..35).map(|k| ((k * 7919) % 101) as f64 / 13.0 - 2.0).collect();
        let img = ScanImage::new(Channel::Delta, 7, 5, vals.clone(), GridMeta::default()).unwrap();
        let (lo, hi) = img.finite_range().unwrap();
        for depth in [8u8, 16] {
            let (bytes, _) = encode_pgm(&img, depth).unwrap();
            let (w, h, maxval, px) = decode(&bytes);
            assert_eq!((w, h, px.len()), (7, 5, 35));
            for (p, v) in px.iter().zip(&vals) {
                let back = lo + *p as f64 / maxval as f64 * (hi - lo);
                assert!((back - v).abs() / (hi - lo) <= 1.0 / maxval as f64);
            }
        }
        assert!(encode_pgm(&img, 12).is_err());
    }
}
