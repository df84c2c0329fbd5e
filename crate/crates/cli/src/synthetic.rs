//! Generated image-directory fixture: three classes of noisy textures saved as
//! PNGs of varying size and color mode.

use std::path::Path;

use complens::data::{write_png, Image};
use complens::rng::Rng;

pub const SYNTHETIC_CLASSES: [&str; 3] = ["disk", "horizontal", "vertical"];

fn pattern(class: usize, y: f64, x: f64, phase: f64, period: f64) -> f64 {
    match class {
        0 => {
            let (dy, dx) = (y - 0.5, x - 0.5);
            if (dy * dy + dx * dx).sqrt() < 0.3 + 0.1 * phase {
                1.0
            } else {
                0.0
            }
        }
        1 => (((y * period + phase) * std::f64::consts::TAU).sin() > 0.0) as u8 as f64,
        _ => (((x * period + phase) * std::f64::consts::TAU).sin() > 0.0) as u8 as f64,
    }
}

/// Writes `per_class` images per class under `root/<class>/NNNN.png`.
///
/// Image sides vary between 20 and 36 pixels; every fourth image is
/// grayscale, the rest are tinted RGB. `noise` is the standard deviation of
/// additive pixel noise.
pub fn write_synthetic_dataset(root: &Path, per_class: usize, noise: f64, seed: u64) -> complens::Result<()> {
    let mut rng = Rng::new(seed);
    for (class, name) in SYNTHETIC_CLASSES.iter().enumerate() {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir)?;
        for i in 0..per_class {
            let height = 20 + rng.below(17) as usize;
            let width = 20 + rng.below(17) as usize;
            let phase = rng.uniform();
            let period = 2.0 + 2.0 * rng.uniform();
            let channels = if i % 4 == 3 { 1 } else { 3 };
            let tint: Vec<f64> = (0..channels).map(|_| 0.5 + 0.5 * rng.uniform()).collect();
            let mut data = Vec::with_capacity(channels * height * width);
            for t in &tint {
                for y in 0..height {
                    for x in 0..width {
                        let v = pattern(class, y as f64 / height as f64, x as f64 / width as f64, phase, period);
                        data.push((0.15 + 0.7 * v * t + noise * rng.normal()).clamp(0.0, 1.0));
                    }
                }
            }
            write_png(&dir.join(format!("{i:04}.png")), &Image { channels, height, width, data })?;
        }
    }
    Ok(())
}
