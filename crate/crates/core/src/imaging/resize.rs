use super::Image;
use crate::error::{Error, Result};

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // exact for a == b, so constant images stay constant
    a + t * (b - a)
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidInput("resize target must be non-empty".into()));
    }
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidInput("cannot resize an empty image".into()));
    }
    if out_w == img.width() && out_h == img.height() {
        return Ok(img.clone());
    }
    let ch = img.channels();
    let sx = img.width() as f64 / out_w as f64;
    let sy = img.height() as f64 / out_h as f64;
    let axis = |dst: usize, scale: f64, len: usize| {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, src - i0 as f64)
    };
    let mut pixels = Vec::with_capacity(out_w * out_h * ch);
    for y in 0..out_h {
        let (y0, y1, ty) = axis(y, sy, img.height());
        for x in 0..out_w {
            let (x0, x1, tx) = axis(x, sx, img.width());
            for c in 0..ch {
                let top = lerp(img.get(x0, y0, c), img.get(x1, y0, c), tx);
                let bottom = lerp(img.get(x0, y1, c), img.get(x1, y1, c), tx);
                pixels.push(lerp(top, bottom, ty).clamp(0.0, 1.0));
            }
        }
    }
    Image::new(out_w, out_h, ch, pixels)
}

/// Crops the centered square of side `min(width, height)` (offsets floored),
/// then resizes it bilinearly to `target × target`.
pub fn center_crop_resize(img: &Image, target: usize) -> Result<Image> {
    if target == 0 {
        return Err(Error::InvalidInput("target side must be >= 1".into()));
    }
    let (ox, oy, side) = crop_window(img.width(), img.height())?;
    let ch = img.channels();
    let mut pixels = Vec::with_capacity(side * side * ch);
    for y in oy..oy + side {
        let start = (y * img.width() + ox) * ch;
        pixels.extend_from_slice(&img.pixels()[start..start + side * ch]);
    }
    let cropped = Image::new(side, side, ch, pixels)?;
    resize_bilinear(&cropped, target, target)
}

pub(crate) fn crop_window(width: usize, height: usize) -> Result<(usize, usize, usize)> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput("image must be at least 1x1".into()));
    }
    let side = width.min(height);
    Ok(((width - side) / 2, (height - side) / 2, side))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = Rng::new(seed);
        Image::new(w, h, 1, (0..w * h).map(|_| rng.next_f64()).collect()).unwrap()
    }

    #[test]
    fn crop_offsets() {
        assert_eq!(crop_window(512, 300).unwrap(), (106, 0, 300));
        let out = center_crop_resize(&Image::filled(512, 300, 1, 0.3), 32).unwrap();
        assert_eq!((out.width(), out.height()), (32, 32));
    }

    #[test]
    fn crop_takes_the_center() {
        // 5x3 image whose column index is encoded in the value
        let px: Vec<f64> = (0..15).map(|i| (i % 5) as f64 / 10.0).collect();
        let img = Image::new(5, 3, 1, px).unwrap();
        let out = center_crop_resize(&img, 3).unwrap();
        assert_eq!(out.get(0, 0, 0), 0.1);
        assert_eq!(out.get(2, 2, 0), 0.3);
    }

    #[test]
    fn target_sized_input_is_bit_identical() {
        let img = noise(16, 16, 1);
        assert_eq!(center_crop_resize(&img, 16).unwrap(), img);
        let again = center_crop_resize(&center_crop_resize(&img, 16).unwrap(), 16).unwrap();
        assert_eq!(again, img);
    }

    #[test]
    fn constants_are_preserved() {
        for (w, h, t) in [(37, 21, 8), (8, 8, 31), (100, 64, 16)] {
            let out = center_crop_resize(&Image::filled(w, h, 3, 0.37), t).unwrap();
            assert!(out.pixels().iter().all(|&p| p == 0.37));
        }
    }

    #[test]
    fn zero_target_is_an_error() {
        assert!(center_crop_resize(&Image::filled(4, 4, 1, 0.0), 0).is_err());
    }

    #[test]
    fn output_stays_in_range() {
        let out = center_crop_resize(&noise(40, 33, 2), 17).unwrap();
        assert!(out.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
