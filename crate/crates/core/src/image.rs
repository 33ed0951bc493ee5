//! Grayscale rasters, their flattened vector form, and 8-bit PGM coding.
//!
//! Pixels are kept as reals in `[0, 255]` exactly as stored; nothing is
//! rescaled or normalized. Only `maxval ≤ 255` is accepted.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::float;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Row-major pixels; every value must be finite and in `[0, 255]`.
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!("dimensions {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(Error::DimensionMismatch { expected: height * width, found: pixels.len() });
        }
        if let Some(bad) = pixels.iter().find(|p| !(p.is_finite() && (0.0..=255.0).contains(*p))) {
            return Err(Error::InvalidImage(format!("pixel value {bad} outside [0, 255]")));
        }
        Ok(GrayImage { height, width, pixels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    /// Row-major concatenation of the pixels.
    pub fn flatten(&self) -> FaceVector {
        FaceVector { height: self.height, width: self.width, values: self.pixels.clone() }
    }

    /// Applies `f(row, col, value)` to every pixel, validating the result.
    pub fn map<F: Fn(usize, usize, f64) -> f64>(&self, f: F) -> Result<GrayImage> {
        let pixels = self
            .pixels
            .iter()
            .enumerate()
            .map(|(i, v)| f(i / self.width, i % self.width, *v))
            .collect();
        GrayImage::new(self.height, self.width, pixels)
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }
}

/// A flattened image, `Γ` in the eigenface literature. Remembers the raster
/// shape it came from so it can be turned back into an image.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVector {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FaceVector {
    /// A `1 × D` vector; for feature data that never was an image.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(FaceVector { height: 1, width: values.len(), values })
    }

    pub fn with_shape(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::DimensionMismatch { expected: height * width, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(FaceVector { height, width, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn unflatten(&self) -> Result<GrayImage> {
        GrayImage::new(self.height, self.width, self.values.clone())
    }
}

impl AsRef<[f64]> for FaceVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
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

    fn number(&mut self, what: &'static str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader(what));
        }
        core::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::MalformedHeader(what))
    }
}

/// Decodes a binary (`P5`) or ASCII (`P2`) PGM with `maxval ≤ 255`.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::MalformedHeader("missing P2/P5 magic"));
    }
    let binary = match bytes[1] {
        b'5' => true,
        b'2' => false,
        _ => return Err(Error::MalformedHeader("missing P2/P5 magic")),
    };
    let mut h = Header { bytes, pos: 2 };
    if h.pos < bytes.len() && !bytes[h.pos].is_ascii_whitespace() && bytes[h.pos] != b'#' {
        return Err(Error::MalformedHeader("missing P2/P5 magic"));
    }
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage(format!("dimensions {height}x{width}")));
    }
    if maxval > 255 {
        return Err(Error::MaxvalTooLarge(maxval));
    }
    if maxval == 0 {
        return Err(Error::MalformedHeader("maxval"));
    }
    let count = width * height;

    let pixels: Vec<f64> = if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        if h.pos >= bytes.len() || !bytes[h.pos].is_ascii_whitespace() {
            return Err(Error::TruncatedPixelData { expected: count, found: 0 });
        }
        let data = &bytes[h.pos + 1..];
        if data.len() < count {
            return Err(Error::TruncatedPixelData { expected: count, found: data.len() });
        }
        data[..count].iter().map(|&b| f64::from(b)).collect()
    } else {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            h.skip_whitespace_and_comments();
            if h.pos >= bytes.len() {
                return Err(Error::TruncatedPixelData { expected: count, found: out.len() });
            }
            let v = h.number("pixel")?;
            out.push(f64::from(v));
        }
        out
    };
    if let Some(bad) = pixels.iter().find(|&&p| p > f64::from(maxval)) {
        return Err(Error::InvalidImage(format!("pixel {bad} exceeds maxval {maxval}")));
    }
    GrayImage::new(height, width, pixels)
}

/// Encodes as binary `P5` with maxval 255. Pixels are rounded to the
/// nearest integer, so images with integral pixels round-trip exactly.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.pixels.iter().map(|&p| float::round(p).clamp(0.0, 255.0) as u8));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn binary_example() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.row(0), &[0.0, 255.0]);
        assert_eq!(img.row(1), &[128.0, 64.0]);
    }

    #[test]
    fn ascii_example() {
        let img = decode_pgm(b"P2\n1 1\n255\n7").unwrap();
        assert_eq!(img.pixels(), &[7.0]);
    }

    #[test]
    fn ascii_with_comments() {
        let img = decode_pgm(b"P2 # comment\n3 1 # w h\n9\n1 2\n3\n").unwrap();
        assert_eq!(img.pixels(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn truncated_binary() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert_eq!(
            decode_pgm(&bytes),
            Err(Error::TruncatedPixelData { expected: 4, found: 3 })
        );
    }

    #[test]
    fn header_errors() {
        assert!(matches!(decode_pgm(b"P6\n1 1\n255\n\0"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_pgm(b"P5\nx 1\n255\n\0"), Err(Error::MalformedHeader(_))));
        assert_eq!(decode_pgm(b"P5\n1 1\n65535\n\0\0"), Err(Error::MaxvalTooLarge(65535)));
        assert!(matches!(decode_pgm(b"P5\n0 1\n255\n"), Err(Error::InvalidImage(_))));
        assert!(matches!(decode_pgm(b"P2\n2 1\n255\n7"), Err(Error::TruncatedPixelData { .. })));
    }

    #[test]
    fn flatten_is_row_major() {
        let img = GrayImage::new(2, 2, vec![0.0, 255.0, 128.0, 64.0]).unwrap();
        assert_eq!(img.flatten().values(), &[0.0, 255.0, 128.0, 64.0]);
        let one = GrayImage::new(1, 1, vec![7.0]).unwrap();
        assert_eq!(one.flatten().values(), &[7.0]);
        let column = GrayImage::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(column.flatten().values(), &[1.0, 2.0, 3.0]);
        assert_eq!(column.flatten().dim(), 3);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(GrayImage::new(1, 1, vec![256.0]).is_err());
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
        assert!(GrayImage::new(1, 2, vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn p5_round_trip(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            let pixels: Vec<f64> = (0..h * w)
                .map(|i| ((seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407)) >> 33) % 256) as f64)
                .collect();
            let img = GrayImage::new(h, w, pixels).unwrap();
            let bytes = encode_pgm(&img);
            prop_assert_eq!(decode_pgm(&bytes).unwrap(), img.clone());
            prop_assert_eq!(img.flatten().unflatten().unwrap(), img);
        }
    }
}
