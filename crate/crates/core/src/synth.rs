//! Seeded synthetic face sets.
//!
//! `banded_faces` gives every subject its own top-to-bottom sequence of
//! horizontal intensity bands, the structure a top-to-bottom HMM models.
//! `illumination_faces` puts a faint identity pattern under strong linear
//! lighting gradients, so lighting dominates the pixel variance.
//! Both are pure functions of their arguments.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::LabeledImage;
use crate::error::Result;
use crate::float;
use crate::image::GrayImage;

fn subject_label(index: usize) -> alloc::string::String {
    format!("s{:02}", index + 1)
}

fn clamp_pixel(v: f64) -> f64 {
    float::round(v).clamp(0.0, 255.0)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// `subjects × per_subject` images of size `height × width`, labelled
/// `s01, s02, …`, paths `label/NNN.pgm`.
pub fn banded_faces(subjects: usize, per_subject: usize, height: usize, width: usize, seed: u64) -> Result<Vec<LabeledImage>> {
    let noise = Normal::new(0.0, 4.0).expect("valid deviation");
    let mut out = Vec::with_capacity(subjects * per_subject);
    for s in 0..subjects {
        let mut rng = rng_for(seed, s as u64 + 1);
        let bands = rng.random_range(4..=6usize);
        let levels: Vec<f64> = (0..bands).map(|_| rng.random_range(60.0..190.0)).collect();
        let freq = rng.random_range(0.5..2.5);
        let phase = rng.random_range(0.0..core::f64::consts::TAU);
        let label = subject_label(s);
        for k in 0..per_subject {
            let shift: i64 = rng.random_range(-1..=1);
            let gain = rng.random_range(-6.0..6.0);
            let pixels = (0..height * width)
                .map(|i| {
                    let (r, c) = ((i / width) as i64, (i % width) as f64);
                    let row = (r - shift).clamp(0, height as i64 - 1) as usize;
                    let band = (row * bands / height).min(bands - 1);
                    let texture = 12.0 * float::sin(freq * c * core::f64::consts::TAU / width as f64 + phase);
                    clamp_pixel(levels[band] + texture + gain + noise.sample(&mut rng))
                })
                .collect();
            out.push(LabeledImage {
                path: format!("{label}/{k:03}.pgm"),
                label: label.clone(),
                image: GrayImage::new(height, width, pixels)?,
            });
        }
    }
    Ok(out)
}

/// Identity pattern `N(0, 10²)` per pixel on a base of 128, under a linear
/// gradient `a·x + b·y` with `a, b ~ U(−60, 60)` across the image and
/// noise of deviation 3.
pub fn illumination_faces(
    subjects: usize,
    per_subject: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<Vec<LabeledImage>> {
    let identity = Normal::new(0.0, 10.0).expect("valid deviation");
    let noise = Normal::new(0.0, 3.0).expect("valid deviation");
    let mut out = Vec::with_capacity(subjects * per_subject);
    for s in 0..subjects {
        let mut rng = rng_for(seed, 1000 + s as u64);
        let pattern: Vec<f64> = (0..height * width).map(|_| identity.sample(&mut rng)).collect();
        let label = subject_label(s);
        for k in 0..per_subject {
            let a = rng.random_range(-60.0..60.0);
            let b = rng.random_range(-60.0..60.0);
            let pixels = pattern
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let x = (i % width) as f64 / (width - 1).max(1) as f64 - 0.5;
                    let y = (i / width) as f64 / (height - 1).max(1) as f64 - 0.5;
                    clamp_pixel(128.0 + p + a * x + b * y + noise.sample(&mut rng))
                })
                .collect();
            out.push(LabeledImage {
                path: format!("{label}/{k:03}.pgm"),
                label: label.clone(),
                image: GrayImage::new(height, width, pixels)?,
            });
        }
    }
    Ok(out)
}

/// Adds a left-to-right lighting ramp of total swing `strength`.
pub fn apply_gradient(image: &GrayImage, strength: f64) -> Result<GrayImage> {
    let w = image.width();
    image.map(|_, c, v| clamp_pixel(v + strength * (c as f64 / (w - 1).max(1) as f64 - 0.5)))
}

/// Zeroes the bottom `fraction` of the rows.
pub fn occlude_bottom(image: &GrayImage, fraction: f64) -> Result<GrayImage> {
    let h = image.height();
    let first = h - float::round(fraction.clamp(0.0, 1.0) * h as f64) as usize;
    image.map(|r, _, v| if r >= first { 0.0 } else { v })
}

/// Adds a constant to every pixel, clamped to `[0, 255]`.
pub fn offset(image: &GrayImage, delta: f64) -> Result<GrayImage> {
    image.map(|_, _, v| clamp_pixel(v + delta))
}
