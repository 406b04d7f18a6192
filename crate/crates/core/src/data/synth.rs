use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{HsiCube, LabelRaster};
use crate::error::{Error, Result};

/// Smooth class spectra: one Gaussian absorption-like bump per class with
/// centers spread evenly over the bands, plus a small seeded ripple.
pub fn synth_signatures(bands: usize, classes: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5167_6e61_7475_7265);
    let width = (bands as f64 / (2.0 * classes as f64)).max(1.0);
    (0..classes)
        .map(|k| {
            let center = (k as f64 + 0.5) * bands as f64 / classes as f64;
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            (0..bands)
                .map(|b| {
                    let x = b as f64 - center;
                    let bump = 0.6 * (-(x * x) / (2.0 * width * width)).exp();
                    let ripple = 0.03 * (std::f64::consts::TAU * b as f64 / bands as f64 + phase).sin();
                    (0.2 + bump + ripple) as f32
                })
                .collect()
        })
        .collect()
}

/// Class of pixel `(row, col)` in the synthetic block layout: the image is
/// cut into a 4×4 grid of tiles and tile `(ty, tx)` takes class
/// `(tx + ty) mod classes + 1`.
pub fn synth_class_at(h: usize, w: usize, classes: usize, row: usize, col: usize) -> u16 {
    let tile_h = h.div_ceil(4).max(1);
    let tile_w = w.div_ceil(4).max(1);
    ((row / tile_h + col / tile_w) % classes + 1) as u16
}

/// Cube of class signatures plus Gaussian noise, every pixel labeled.
pub fn synth_dataset(
    h: usize,
    w: usize,
    bands: usize,
    classes: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(HsiCube, LabelRaster)> {
    if classes < 2 {
        return Err(Error::config(format!("synthetic data needs at least 2 classes, got {classes}")));
    }
    if classes > u16::MAX as usize {
        return Err(Error::config("too many classes"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::config(format!("noise sigma must be finite and >= 0, got {noise_sigma}")));
    }
    let signatures = synth_signatures(bands, classes, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut labels = Vec::with_capacity(h * w);
    let mut data = Vec::with_capacity(h * w * bands);
    for row in 0..h {
        for col in 0..w {
            let class = synth_class_at(h, w, classes, row, col);
            labels.push(class);
            for &s in &signatures[class as usize - 1] {
                let n = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                data.push((s as f64 + n) as f32);
            }
        }
    }
    Ok((HsiCube::new(h, w, bands, data)?, LabelRaster::new(h, w, labels)?))
}
