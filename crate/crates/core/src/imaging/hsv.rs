use serde::{Deserialize, Serialize};

use super::{BinaryMask, Image};
use crate::error::{Error, Result};

/// Hexcone RGB → HSV. Hue is normalized to `[0, 1)` (degrees / 360);
/// achromatic pixels get hue 0.
pub fn rgb_to_hsv(img: &Image) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::InvalidInput(format!(
            "HSV conversion needs 3 channels, got {}",
            img.channels()
        )));
    }
    let pixels = img
        .pixels()
        .chunks_exact(3)
        .flat_map(|px| {
            let (h, s, v) = hsv_pixel(px[0], px[1], px[2]);
            [h / 360.0, s, v]
        })
        .collect();
    Image::new(img.width(), img.height(), 3, pixels)
}

/// Returns hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub(crate) fn hsv_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return (0.0, s, max);
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut h = 60.0 * sector;
    if h >= 360.0 {
        h -= 360.0;
    }
    (h, s, max)
}

/// Hue/saturation/value window that selects annotation strokes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenWindow {
    /// Degrees.
    pub hue_lo: f64,
    /// Degrees.
    pub hue_hi: f64,
    pub s_min: f64,
    pub v_min: f64,
}

impl Default for GreenWindow {
    fn default() -> Self {
        Self {
            hue_lo: 90.0,
            hue_hi: 150.0,
            s_min: 0.3,
            v_min: 0.2,
        }
    }
}

/// Marks pixels whose hue lies in `[hue_lo, hue_hi]` with enough saturation and value.
pub fn extract_green_mask(img: &Image, window: &GreenWindow) -> Result<BinaryMask> {
    if window.hue_lo > window.hue_hi {
        return Err(Error::InvalidInput(format!(
            "hue window [{}, {}] is inverted",
            window.hue_lo, window.hue_hi
        )));
    }
    if img.channels() != 3 {
        return Err(Error::InvalidInput(format!(
            "green mask needs an RGB image, got {} channels",
            img.channels()
        )));
    }
    let bits = img
        .pixels()
        .chunks_exact(3)
        .map(|px| {
            let (h, s, v) = hsv_pixel(px[0], px[1], px[2]);
            h >= window.hue_lo && h <= window.hue_hi && s >= window.s_min && v >= window.v_min
        })
        .collect();
    BinaryMask::from_bits(img.width(), img.height(), bits)
}
