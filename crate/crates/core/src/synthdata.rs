//! Radiograph-like phantoms: a dark field with a vertical gradient, a bright
//! thorax, two darker lung fields and a heart whose size relative to the
//! thorax encodes the label. Annotated phantoms carry a green stroke traced
//! over the heart boundary, the way a reader would mark it.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{write_pnm, Image};
use crate::numerics::{derive_seed, Rng};

/// Heart-ratio band for enlarged hearts.
pub const CARDIOMEGALY_BAND: (f64, f64) = (0.55, 0.75);
/// Heart-ratio band for normal hearts.
pub const NORMAL_BAND: (f64, f64) = (0.25, 0.45);
pub const MIN_SIDE: usize = 16;

/// Stroke color (RGB), hue ≈ 124°.
pub const STROKE_RGB: [f64; 3] = [0.1, 0.85, 0.15];

const THORAX_AXES: (f64, f64) = (0.40, 0.42);
const THORAX_LEVEL: f64 = 0.45;
const LUNG_LEVEL: f64 = 0.28;
const HEART_LEVEL: f64 = 0.80;
/// Brightness drop from heart center to rim, so interior pixels also vary
/// with the heart ratio (the rim itself is hidden under an annotation).
const HEART_SHADE: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Cardiomegaly,
    Normal,
}

impl Label {
    pub fn band(self) -> (f64, f64) {
        match self {
            Label::Cardiomegaly => CARDIOMEGALY_BAND,
            Label::Normal => NORMAL_BAND,
        }
    }

    /// Class index used by the classifier: disease first.
    pub fn index(self) -> usize {
        match self {
            Label::Cardiomegaly => 0,
            Label::Normal => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Cardiomegaly),
            1 => Some(Label::Normal),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Cardiomegaly => "cardiomegaly",
            Label::Normal => "normal",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cardiomegaly" => Ok(Label::Cardiomegaly),
            "normal" => Ok(Label::Normal),
            other => Err(Error::InvalidInput(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub label: Label,
    /// Heart semi-axis over thorax semi-axis.
    pub heart_ratio: f64,
    pub noise_sigma: f64,
    pub annotate: bool,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.heart_ratio > 0.0 && self.heart_ratio < 1.0) {
            return Err(Error::InvalidInput(format!(
                "heart_ratio {} outside (0, 1)",
                self.heart_ratio
            )));
        }
        let ok = match self.label {
            Label::Cardiomegaly => self.heart_ratio >= CARDIOMEGALY_BAND.0,
            Label::Normal => self.heart_ratio <= NORMAL_BAND.1,
        };
        if !ok {
            return Err(Error::InvalidInput(format!(
                "heart_ratio {} is inconsistent with label {}",
                self.heart_ratio, self.label
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("noise_sigma {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// A rendered phantom together with its ground truth.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    /// RGB when annotated, grayscale otherwise.
    pub image: Image,
    /// The same phantom without the stroke (always grayscale).
    pub clean: Image,
    /// Pixel coordinates `(x, y)` covered by the stroke, sorted and unique.
    pub stroke: Vec<(usize, usize)>,
}

pub fn make_phantom(spec: &PhantomSpec, side: usize) -> Result<Image> {
    render_phantom(spec, side).map(|p| p.image)
}

pub fn render_phantom(spec: &PhantomSpec, side: usize) -> Result<Phantom> {
    if side < MIN_SIDE {
        return Err(Error::InvalidInput(format!(
            "phantom side must be >= {MIN_SIDE}, got {side}"
        )));
    }
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let s = side as f64;
    let heart_axes = (
        spec.heart_ratio * THORAX_AXES.0,
        spec.heart_ratio * THORAX_AXES.1,
    );
    let inside = |u: f64, v: f64, cu: f64, cv: f64, a: f64, b: f64| {
        let du = (u - cu) / a;
        let dv = (v - cv) / b;
        du * du + dv * dv <= 1.0
    };

    let edge_px = s * heart_axes.0.min(heart_axes.1);
    let mut px = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let u = (x as f64 + 0.5) / s - 0.5;
            let v = (y as f64 + 0.5) / s - 0.5;
            let mut level = 0.06 + 0.10 * (v + 0.5);
            if inside(u, v, 0.0, 0.02, THORAX_AXES.0, THORAX_AXES.1) {
                level = THORAX_LEVEL;
                if inside(u, v, -0.2, -0.04, 0.12, 0.26) || inside(u, v, 0.2, -0.04, 0.12, 0.26) {
                    level = LUNG_LEVEL;
                }
            }
            // one-pixel linear ramp across the heart boundary, so the image
            // varies continuously with the heart ratio
            let r = ((u / heart_axes.0).powi(2) + (v / heart_axes.1).powi(2)).sqrt();
            let cover = (0.5 + (1.0 - r) * edge_px).clamp(0.0, 1.0);
            let heart = HEART_LEVEL - HEART_SHADE * r.min(1.0).powi(2);
            level += cover * (heart - level);
            let noisy = if spec.noise_sigma > 0.0 {
                level + spec.noise_sigma * rng.gauss()
            } else {
                level
            };
            px.push(noisy.clamp(0.0, 1.0));
        }
    }
    let clean = Image::new(side, side, 1, px)?;
    if !spec.annotate {
        return Ok(Phantom {
            spec: *spec,
            image: clean.clone(),
            clean,
            stroke: Vec::new(),
        });
    }

    let stroke = heart_outline(side, heart_axes);
    let mut image = clean.to_rgb();
    for &(x, y) in &stroke {
        for (c, &v) in STROKE_RGB.iter().enumerate() {
            image.set(x, y, c, v);
        }
    }
    Ok(Phantom {
        spec: *spec,
        image,
        clean,
        stroke,
    })
}

/// Closed polyline around the heart ellipse, rasterized with Bresenham and
/// thickened to 2 px on larger images.
fn heart_outline(side: usize, axes: (f64, f64)) -> Vec<(usize, usize)> {
    const VERTICES: usize = 32;
    let s = side as f64;
    let to_px = |u: f64| ((u + 0.5) * s - 0.5).round().clamp(0.0, s - 1.0) as i64;
    let pts: Vec<(i64, i64)> = (0..VERTICES)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / VERTICES as f64;
            (to_px(axes.0 * t.cos()), to_px(axes.1 * t.sin()))
        })
        .collect();
    let mut out = Vec::new();
    for k in 0..VERTICES {
        let (a, b) = (pts[k], pts[(k + 1) % VERTICES]);
        bresenham(a, b, &mut out);
    }
    if side >= 64 {
        let extra: Vec<_> = out
            .iter()
            .filter(|&&(x, _)| x + 1 < side as i64)
            .map(|&(x, y)| (x + 1, y))
            .collect();
        out.extend(extra);
    }
    let mut px: Vec<(usize, usize)> = out
        .into_iter()
        .map(|(x, y)| (x as usize, y as usize))
        .collect();
    px.sort_unstable_by_key(|&(x, y)| (y, x));
    px.dedup();
    px
}

fn bresenham((mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), out: &mut Vec<(i64, i64)>) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        out.push((x0, y0));
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_per_label: usize,
    pub side: usize,
    /// Fraction of all images that carry an annotation stroke.
    pub annotate_frac: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// `n_per_label` cardiomegaly phantoms followed by `n_per_label` normal ones.
///
/// Exactly `⌊annotate_frac · 2n⌋` images are annotated, spread evenly over
/// the sequence.
pub fn make_dataset(ds: &DatasetSpec) -> Result<Vec<Phantom>> {
    if ds.n_per_label == 0 {
        return Err(Error::InvalidInput("n_per_label must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&ds.annotate_frac) {
        return Err(Error::InvalidInput(format!(
            "annotate_frac {} outside [0, 1]",
            ds.annotate_frac
        )));
    }
    let total = 2 * ds.n_per_label;
    let quota = (ds.annotate_frac * total as f64).floor() as usize;
    let mut rng = Rng::new(derive_seed(ds.seed, "dataset"));
    let mut out = Vec::with_capacity(total);
    for i in 0..total {
        let label = if i < ds.n_per_label {
            Label::Cardiomegaly
        } else {
            Label::Normal
        };
        let (lo, hi) = label.band();
        let spec = PhantomSpec {
            label,
            heart_ratio: rng.uniform(lo, hi),
            noise_sigma: ds.noise_sigma,
            annotate: (i + 1) * quota / total > i * quota / total,
            seed: derive_seed(ds.seed, &format!("phantom:{i}")),
        };
        out.push(render_phantom(&spec, ds.side)?);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    filename: String,
    label: Label,
    heart_ratio: f64,
    annotated: bool,
    seed: u64,
}

/// Writes each phantom as PGM/PPM plus `manifest.csv`.
pub fn write_dataset(dir: &Path, phantoms: &[Phantom]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest)?;
    for (i, p) in phantoms.iter().enumerate() {
        let ext = if p.image.channels() == 3 { "ppm" } else { "pgm" };
        let filename = format!("phantom_{i:05}.{ext}");
        write_pnm(&p.image, dir.join(&filename))?;
        w.serialize(ManifestRow {
            filename,
            label: p.spec.label,
            heart_ratio: p.spec.heart_ratio,
            annotated: p.spec.annotate,
            seed: p.spec.seed,
        })?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(())
}

/// Reads a directory written by [`write_dataset`], returning images with labels.
pub fn read_dataset(dir: &Path) -> Result<Vec<(Image, Label)>> {
    let mut r = csv::Reader::from_path(dir.join("manifest.csv"))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: ManifestRow = row?;
        out.push((crate::imaging::read_pnm(dir.join(&row.filename))?, row.label));
    }
    Ok(out)
}

/// Mean intensity over the centered disc of radius `side / 4`.
pub fn center_disc_mean(img: &Image) -> f64 {
    let g = img.to_grayscale();
    let (w, h) = (g.width() as f64, g.height() as f64);
    let r = w.min(h) / 4.0;
    let (cx, cy) = (w / 2.0, h / 2.0);
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..g.height() {
        for x in 0..g.width() {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                sum += g.get(x, y, 0);
                n += 1;
            }
        }
    }
    sum / n.max(1) as f64
}
