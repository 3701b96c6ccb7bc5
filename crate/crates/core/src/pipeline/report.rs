use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Experiment, ExperimentConfig, InputHash};
use crate::classifier::{run_sessions, SessionResult, SessionSpec};
use crate::error::{Error, Result};
use crate::imaging::{read_pnm, write_pnm, Image};
use crate::metrics::ConfusionMatrix;
use crate::query::write_query_csv;
use crate::synthdata::Label;

/// Tiles per montage row.
pub const MONTAGE_COLS: usize = 10;
/// Border between montage tiles, in pixels.
pub const MONTAGE_PAD: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleSummary {
    pub cycle: usize,
    pub optimal_fid: f64,
    pub worst_fid: f64,
    pub size: usize,
    pub size_after: usize,
    pub saved_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSummary {
    pub session: usize,
    pub cm: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Schema of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub config: ExperimentConfig,
    pub vae_sha256: String,
    pub cycles: Vec<CycleSummary>,
    pub sessions: Vec<SessionSummary>,
}

impl Report {
    pub fn from_experiment(ex: &Experiment) -> Self {
        Self {
            config: ex.config.clone(),
            vae_sha256: ex.vae_sha256.clone(),
            cycles: ex
                .cycles
                .iter()
                .map(|c| CycleSummary {
                    cycle: c.cycle,
                    optimal_fid: c.optimal_fid,
                    worst_fid: c.worst_fid,
                    size: c.size,
                    size_after: c.size_after,
                    saved_epoch: c.saved_epoch,
                })
                .collect(),
            sessions: ex.sessions.iter().map(session_summary).collect(),
        }
    }
}

fn session_summary(s: &SessionResult) -> SessionSummary {
    SessionSummary {
        session: s.session,
        cm: s.cm,
        accuracy: s.scores.accuracy,
        precision: s.scores.precision,
        recall: s.scores.recall,
        f1: s.scores.f1,
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    vae_sha256: &'a str,
    inputs: &'a [InputHash],
}

#[derive(Serialize)]
struct FidRow {
    cycle: usize,
    optimal_fid: f64,
    worst_fid: f64,
    size: usize,
    size_after: usize,
    saved_epoch: usize,
}

#[derive(Serialize)]
struct FidHistoryRow {
    cycle: usize,
    epoch: usize,
    fid: f64,
}

#[derive(Serialize)]
struct SessionRow {
    session: usize,
    train_size: usize,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TestLabelRow {
    filename: String,
    label: Label,
}

/// Two rows of tiles on a white background: `top` above `bottom`, at most
/// [`MONTAGE_COLS`] each. All tiles must share one grayscale shape.
pub fn montage(top: &[Image], bottom: &[Image]) -> Result<Image> {
    let first = top
        .first()
        .or(bottom.first())
        .ok_or_else(|| Error::InvalidInput("montage of no images".into()))?;
    let (tw, th) = (first.width(), first.height());
    if let Some(bad) = top
        .iter()
        .chain(bottom)
        .find(|i| i.channels() != 1 || i.width() != tw || i.height() != th)
    {
        return Err(Error::Shape(format!(
            "montage tile {}x{}x{} differs from {tw}x{th}x1",
            bad.width(),
            bad.height(),
            bad.channels()
        )));
    }
    let cols = top.len().max(bottom.len()).min(MONTAGE_COLS);
    let width = cols * tw + (cols + 1) * MONTAGE_PAD;
    let height = 2 * th + 3 * MONTAGE_PAD;
    let mut out = Image::filled(width, height, 1, 1.0);
    for (row, tiles) in [top, bottom].into_iter().enumerate() {
        let y0 = MONTAGE_PAD + row * (th + MONTAGE_PAD);
        for (col, tile) in tiles.iter().take(cols).enumerate() {
            let x0 = MONTAGE_PAD + col * (tw + MONTAGE_PAD);
            for y in 0..th {
                for x in 0..tw {
                    out.set(x0 + x, y0 + y, 0, tile.get(x, y, 0));
                }
            }
        }
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_images(dir: &Path, prefix: &str, imgs: &[Image]) -> Result<()> {
    create_dir(dir)?;
    for (i, img) in imgs.iter().enumerate() {
        write_pnm(img, dir.join(format!("{prefix}_{i:05}.pgm")))?;
    }
    Ok(())
}

/// Writes `sessions.csv` and `classification_report.json` into `dir`.
pub fn write_sessions(dir: &Path, sessions: &[SessionResult]) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("classification_report.json"), &sessions)?;
    write_csv(
        &dir.join("sessions.csv"),
        sessions.iter().map(|s| SessionRow {
            session: s.session,
            train_size: s.train_size,
            tp: s.cm.tp,
            fp: s.cm.fp,
            fn_: s.cm.fn_,
            tn: s.cm.tn,
            accuracy: s.scores.accuracy,
            precision: s.scores.precision,
            recall: s.scores.recall,
            f1: s.scores.f1,
        }),
    )
}

/// Writes every report and artifact of a finished experiment under `dir`:
///
/// - `report.json`, `manifest.json`, `classification_report.json`
/// - `fid.csv` (one row per cycle), `fid_history.csv`, `sessions.csv`
/// - `vae.bin`, `cycle_<k>/checkpoint.{bin,json}`
/// - `cycle_<k>/selected/*.pgm`, `cycle_<k>/query.csv`, `cycle_<k>/montage.pgm`
/// - `data/` with the preprocessed real images, for rerunning `classify`
pub fn write_report(dir: &Path, ex: &Experiment) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("report.json"), &Report::from_experiment(ex))?;
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            config: &ex.config,
            vae_sha256: &ex.vae_sha256,
            inputs: &ex.real.input_hashes,
        },
    )?;
    write_csv(
        &dir.join("fid.csv"),
        ex.cycles.iter().map(|c| FidRow {
            cycle: c.cycle,
            optimal_fid: c.optimal_fid,
            worst_fid: c.worst_fid,
            size: c.size,
            size_after: c.size_after,
            saved_epoch: c.saved_epoch,
        }),
    )?;
    write_csv(
        &dir.join("fid_history.csv"),
        ex.cycles.iter().flat_map(|c| {
            c.fid_history.iter().map(|&(epoch, fid)| FidHistoryRow {
                cycle: c.cycle,
                epoch,
                fid,
            })
        }),
    )?;
    write_sessions(dir, &ex.sessions)?;
    ex.vae.save(&dir.join("vae.bin"))?;

    for (k, ck) in ex.checkpoints.iter().enumerate() {
        let cdir = dir.join(format!("cycle_{k}"));
        create_dir(&cdir)?;
        ck.save(&cdir.join("checkpoint.bin"))?;
        if let (Some(q), Some(kept)) = (ex.queries.get(k), ex.selected_images.get(k)) {
            write_query_csv(&cdir.join("query.csv"), q)?;
            create_dir(&cdir.join("selected"))?;
            for (&idx, img) in q.selected.iter().zip(kept) {
                write_pnm(img, cdir.join("selected").join(format!("gen_{idx:05}.pgm")))?;
            }
            write_pnm(&montage(kept, &ex.real.disease)?, cdir.join("montage.pgm"))?;
        }
    }

    let data = dir.join("data");
    write_images(&data.join("disease"), "train", &ex.real.disease)?;
    write_images(&data.join("normal"), "train", &ex.real.normal)?;
    let test_dir = data.join("test");
    create_dir(&test_dir)?;
    let mut rows = Vec::with_capacity(ex.real.test.len());
    for (i, (img, label)) in ex.real.test.iter().enumerate() {
        let filename = format!("test_{i:05}.pgm");
        write_pnm(img, test_dir.join(&filename))?;
        rows.push(TestLabelRow {
            filename,
            label: *label,
        });
    }
    write_csv(&data.join("test_labels.csv"), rows)
}

pub fn read_report(dir: &Path) -> Result<Report> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

fn read_images(dir: &Path) -> Result<Vec<Image>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "pgm"));
    paths.sort();
    paths.iter().map(read_pnm).collect()
}

/// Rebuilds every session from a run directory's saved images and retrains
/// the classifiers. Images come back 8-bit quantized, so scores can differ
/// slightly from the in-memory run.
pub fn classify_run_dir(dir: &Path, seed: Option<u64>) -> Result<Vec<SessionResult>> {
    let report = read_report(dir)?;
    let cfg = report.config;
    let data = dir.join("data");
    let mut disease = read_images(&data.join("disease"))?;
    let normal = read_images(&data.join("normal"))?;
    let labels_path = data.join("test_labels.csv");
    let mut rdr = csv::Reader::from_path(&labels_path)?;
    let mut test = Vec::new();
    for row in rdr.deserialize() {
        let row: TestLabelRow = row?;
        test.push((read_pnm(data.join("test").join(&row.filename))?, row.label));
    }
    let mut specs = vec![SessionSpec {
        index: 0,
        disease: disease.clone(),
        normal: normal.clone(),
    }];
    for s in 1..report.cycles.len() {
        disease.extend(read_images(
            &dir.join(format!("cycle_{}", s - 1)).join("selected"),
        )?);
        specs.push(SessionSpec {
            index: s,
            disease: disease.clone(),
            normal: normal.clone(),
        });
    }
    run_sessions(&specs, &test, &cfg.classifier(seed.unwrap_or(cfg.seed)))
}
