//! Spectrogram magnitude images.

use std::path::Path;

use cbss::Spectrogram;
use image::{GrayImage, Luma};

use crate::error::{CliError, CliResult};

/// Displayed dynamic range below the per-image peak.
pub const RANGE_DB: f64 = 100.0;

/// 8-bit grayscale image of channel `m`: one column per frame, one row per
/// bin with the highest bin on top, dB magnitude clipped to the top `RANGE_DB`.
pub fn spectrogram_image(spec: &Spectrogram, m: usize) -> GrayImage {
    let (frames, bins) = (spec.frames(), spec.bins());
    let db = |t: usize, f: usize| 20.0 * spec.data[[m, t, f]].norm().log10();
    let mut peak = f64::NEG_INFINITY;
    for t in 0..frames {
        for f in 0..bins {
            peak = peak.max(db(t, f));
        }
    }
    let mut img = GrayImage::new(frames as u32, bins as u32);
    for t in 0..frames {
        for f in 0..bins {
            let level = if peak.is_finite() {
                ((db(t, f) - peak + RANGE_DB) / RANGE_DB).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let y = (bins - 1 - f) as u32;
            img.put_pixel(t as u32, y, Luma([(level * 255.0).round() as u8]));
        }
    }
    img
}

pub fn save_spectrogram(path: &Path, spec: &Spectrogram, m: usize) -> CliResult<()> {
    spectrogram_image(spec, m)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CliError::output(path, e))
}
