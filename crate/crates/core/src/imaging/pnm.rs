//! Binary PGM (P5) and PPM (P6) with maxval 255.

use std::fs;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_bytes());
    out
}

/// Parses an in-memory P5/P6 file. `origin` is only used in error messages.
pub fn decode_pnm(bytes: &[u8], origin: &Path) -> Result<Image> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur
        .token()
        .ok_or_else(|| Error::format(origin, "missing magic number"))?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::format(
                origin,
                format!("unsupported magic {:?}", String::from_utf8_lossy(other)),
            ))
        }
    };
    let mut field = |name: &str| -> Result<usize> {
        let tok = cur
            .token()
            .ok_or_else(|| Error::format(origin, format!("missing {name}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::format(origin, format!("bad {name}")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if maxval != 255 {
        return Err(Error::format(origin, format!("maxval {maxval} (only 255 supported)")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(origin, "zero image dimension"));
    }
    // exactly one whitespace byte separates the header from the raster
    match cur.bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::format(origin, "header not terminated by whitespace")),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format(origin, "dimensions overflow"))?;
    let payload = &cur.bytes[cur.pos..];
    if payload.len() < need {
        return Err(Error::format(
            origin,
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    let pixels = payload[..need].iter().map(|&b| f64::from(b) / 255.0).collect();
    Image::new(width, height, channels, pixels)
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, path)
}

pub fn write_pnm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(img)).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Next whitespace-delimited header token, skipping `#` comments.
    fn token(&mut self) -> Option<&'a [u8]> {
        loop {
            let b = *self.bytes.get(self.pos)?;
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        Some(&self.bytes[start..self.pos])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn here() -> &'static Path {
        Path::new("<memory>")
    }

    #[test]
    fn spec_header() {
        let mut bytes = b"P5 3 2 255 ".to_vec();
        bytes.extend([0, 51, 102, 153, 204, 255]);
        let img = decode_pnm(&bytes, here()).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (3, 2, 1));
        assert_eq!(img.pixels()[1], 0.2);
        assert_eq!(img.pixels()[5], 1.0);
    }

    #[test]
    fn comments_are_skipped() {
        let mut bytes = b"P6\n# made by hand\n1 1\n255\n".to_vec();
        bytes.extend([255, 0, 0]);
        let img = decode_pnm(&bytes, here()).unwrap();
        assert_eq!(img.pixels(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgm");
        let img = Image::new(2, 2, 1, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap();
        write_pnm(&img, &path).unwrap();
        let back = read_pnm(&path).unwrap();
        assert_eq!(back.to_bytes(), img.to_bytes());
        assert_eq!(back.to_bytes(), vec![0, 85, 170, 255]);
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let mut bytes = b"P5 3 2 255\n".to_vec();
        bytes.extend([1, 2, 3]);
        assert!(matches!(decode_pnm(&bytes, here()), Err(Error::Format { .. })));
    }

    #[test]
    fn malformed_headers() {
        for bad in [&b"P2 1 1 255\n\0"[..], b"P5 x 1 255\n\0", b"P5 1 1 65535\n\0\0", b"P5 1 1", b""] {
            assert!(decode_pnm(bad, here()).is_err(), "{:?}", String::from_utf8_lossy(bad));
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read_pnm("/nonexistent/x.pgm"), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn quantized_round_trip(
            w in 1usize..6, h in 1usize..6, rgb in any::<bool>(), seed in any::<u64>()
        ) {
            let ch = if rgb { 3 } else { 1 };
            let mut rng = crate::numerics::Rng::new(seed);
            let px = (0..w * h * ch).map(|_| rng.below(256) as f64 / 255.0).collect();
            let img = Image::new(w, h, ch, px).unwrap();
            let back = decode_pnm(&encode_pnm(&img), here()).unwrap();
            prop_assert_eq!(back, img);
        }
    }
}
