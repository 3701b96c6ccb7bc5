use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{center_crop_resize, extract_green_mask, inpaint, GreenWindow, Image};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Output side length in pixels.
    pub target: usize,
    pub window: GreenWindow,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target: 32,
            window: GreenWindow::default(),
        }
    }
}

/// RGB inputs are treated as possibly annotated: green strokes are masked,
/// inpainted and the result collapsed to luma. Every image is then center
/// cropped and resized, so the output is always 1-channel `target × target`.
pub fn preprocess_image(img: &Image, cfg: &PreprocessConfig) -> Result<Image> {
    let gray = if img.channels() == 3 {
        let mask = extract_green_mask(img, &cfg.window)?;
        inpaint(img, &mask)?.to_grayscale()
    } else {
        img.clone()
    };
    center_crop_resize(&gray, cfg.target)
}

/// Order-preserving batch version of [`preprocess_image`].
pub fn preprocess_dataset(imgs: &[Image], cfg: &PreprocessConfig) -> Result<Vec<Image>> {
    imgs.par_iter().map(|img| preprocess_image(img, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_batch() {
        assert!(preprocess_dataset(&[], &PreprocessConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn grayscale_only_crops_and_resizes() {
        let img = Image::filled(40, 36, 1, 0.25);
        let cfg = PreprocessConfig {
            target: 36,
            ..Default::default()
        };
        let out = preprocess_image(&img, &cfg).unwrap();
        assert_eq!(out, Image::filled(36, 36, 1, 0.25));
    }

    #[test]
    fn strokes_are_removed_from_rgb() {
        let mut img = Image::filled(12, 12, 3, 0.5);
        for x in 2..10 {
            img.set(x, 6, 0, 0.05);
            img.set(x, 6, 1, 0.9);
            img.set(x, 6, 2, 0.1);
        }
        let cfg = PreprocessConfig {
            target: 12,
            ..Default::default()
        };
        let out = preprocess_image(&img, &cfg).unwrap();
        assert_eq!(out.channels(), 1);
        assert!(out.pixels().iter().all(|&p| (p - 0.5).abs() < 1e-12));
    }
}
