use super::{BinaryMask, Image};
use crate::error::{Error, Result};

/// Onion-peel fill.
///
/// Each pass assigns every still-masked pixel that touches at least one
/// known 8-neighbor the per-channel mean of those neighbors, reading values
/// from the previous pass only. Filled pixels become known for the next pass.
/// Unmasked pixels are never written.
pub fn inpaint(img: &Image, mask: &BinaryMask) -> Result<Image> {
    if !mask.matches(img) {
        return Err(Error::Shape(format!(
            "mask {}x{} does not match image {}x{}",
            mask.width(),
            mask.height(),
            img.width(),
            img.height()
        )));
    }
    let total = img.width() * img.height();
    let masked = mask.count();
    if masked == 0 {
        return Ok(img.clone());
    }
    if masked == total {
        return Err(Error::InvalidInput(
            "cannot inpaint a fully masked image".into(),
        ));
    }

    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = img.clone();
    let mut known: Vec<bool> = mask.bits().iter().map(|&m| !m).collect();
    let mut remaining = masked;
    let mut layer: Vec<(usize, usize, Vec<f64>)> = Vec::new();

    while remaining > 0 {
        layer.clear();
        for y in 0..h {
            for x in 0..w {
                if known[y * w + x] {
                    continue;
                }
                let mut sum = vec![0.0; ch];
                let mut n = 0usize;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if known[ny * w + nx] {
                            for (c, s) in sum.iter_mut().enumerate() {
                                *s += out.get(nx, ny, c);
                            }
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    let mean = sum.into_iter().map(|s| (s / n as f64).clamp(0.0, 1.0)).collect();
                    layer.push((x, y, mean));
                }
            }
        }
        // a non-empty mask with at least one known pixel always has a frontier
        debug_assert!(!layer.is_empty());
        for (x, y, mean) in layer.drain(..) {
            for (c, v) in mean.into_iter().enumerate() {
                out.set(x, y, c, v);
            }
            known[y * w + x] = true;
            remaining -= 1;
        }
    }
    Ok(out)
}
