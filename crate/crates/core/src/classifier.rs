//! Downstream disease-vs-normal classifier trained once per session on the
//! augmented data and scored on a fixed held-out test set.
//!
//! Network: `side² → hidden (leaky ReLU) → 2 logits`, softmax cross-entropy.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::metrics::{confusion, scores, ConfusionMatrix, Scores};
use crate::nn::{
    leaky_relu, leaky_relu_backward, read_params_file, stack_rows, write_params_file, Adam, Dense,
    Network, KIND_CLASSIFIER,
};
use crate::numerics::{derive_seed, Matrix, Rng};
use crate::synthdata::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 30,
            batch: 16,
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch == 0 {
            return Err(Error::Config("classifier sizes and epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("classifier learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub side: usize,
    pub hidden: Dense,
    pub out: Dense,
}

impl Network for ClassifierParams {
    fn layers(&self) -> Vec<&Dense> {
        vec![&self.hidden, &self.out]
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        vec![&mut self.hidden, &mut self.out]
    }
}

impl ClassifierParams {
    pub fn zeros(side: usize, hidden: usize) -> Self {
        Self {
            side,
            hidden: Dense::zeros(side * side, hidden),
            out: Dense::zeros(hidden, 2),
        }
    }

    pub fn init(side: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            side,
            hidden: Dense::he_init(side * side, hidden, rng),
            out: Dense::he_init(hidden, 2, rng),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let dims = [self.side as u64, self.hidden.fan_out() as u64];
        write_params_file(path, KIND_CLASSIFIER, &dims, &self.flatten())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (kind, dims, flat) = read_params_file(path)?;
        if kind != KIND_CLASSIFIER || dims.len() != 2 {
            return Err(Error::format(path, "not a classifier parameter file"));
        }
        let mut p = Self::zeros(dims[0] as usize, dims[1] as usize);
        p.unflatten(&flat)
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(p)
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.channels() != 1 || img.width() != self.side || img.height() != self.side {
            return Err(Error::Shape(format!(
                "classifier expects {s}x{s} grayscale, got {}x{}x{}",
                img.width(),
                img.height(),
                img.channels(),
                s = self.side
            )));
        }
        Ok(())
    }
}

fn logits(p: &ClassifierParams, x: &Matrix) -> Matrix {
    p.out.forward(&leaky_relu(&p.hidden.forward(x)))
}

/// Mean softmax cross-entropy of `x` against class indices `y`, and its gradient.
pub fn clf_loss_and_grad(p: &ClassifierParams, x: &Matrix, y: &[usize]) -> (f64, ClassifierParams) {
    let b = x.rows() as f64;
    let pre = p.hidden.forward(x);
    let h = leaky_relu(&pre);
    let z = p.out.forward(&h);
    let mut dz = z.clone();
    let mut loss = 0.0;
    for (r, &label) in y.iter().enumerate() {
        let row = z.row(r);
        let m = row[0].max(row[1]);
        let lse = m + ((row[0] - m).exp() + (row[1] - m).exp()).ln();
        loss += (lse - row[label]) / b;
        for (c, d) in dz.row_mut(r).iter_mut().enumerate() {
            let prob = (row[c] - lse).exp();
            *d = (prob - if c == label { 1.0 } else { 0.0 }) / b;
        }
    }
    let mut grad = p.zeros_like();
    let dh = p
        .out
        .backward(&h, &dz, &mut grad.out, true)
        .expect("input grad requested");
    let dpre = leaky_relu_backward(&pre, &dh);
    p.hidden.backward(x, &dpre, &mut grad.hidden, false);
    (loss, grad)
}

/// Content hash of an image: SHA-256 over its shape and pixel bytes.
pub fn content_hash(img: &Image) -> [u8; 32] {
    let mut h = Sha256::new();
    for d in [img.width(), img.height(), img.channels()] {
        h.update((d as u64).to_le_bytes());
    }
    for p in img.pixels() {
        h.update(p.to_le_bytes());
    }
    h.finalize().into()
}

/// Fails if any test image also appears in the training data.
pub fn check_disjoint<'a>(
    train: impl IntoIterator<Item = &'a Image>,
    test: impl IntoIterator<Item = &'a Image>,
) -> Result<()> {
    let seen: HashSet<[u8; 32]> = train.into_iter().map(content_hash).collect();
    for (i, img) in test.into_iter().enumerate() {
        if seen.contains(&content_hash(img)) {
            return Err(Error::InvalidInput(format!(
                "test image {i} also appears in the training data"
            )));
        }
    }
    Ok(())
}

/// Adam on softmax cross-entropy over the union of both classes.
pub fn clf_train(
    disease: &[Image],
    normal: &[Image],
    cfg: &ClassifierConfig,
) -> Result<ClassifierParams> {
    cfg.validate()?;
    if disease.is_empty() || normal.is_empty() {
        return Err(Error::InvalidInput(
            "classifier training needs both labels present".into(),
        ));
    }
    let side = disease[0].width();
    let mut rng = Rng::new(derive_seed(cfg.seed, "clf:init"));
    let mut params = ClassifierParams::init(side, cfg.hidden, &mut rng);
    let data: Vec<(&Image, usize)> = disease
        .iter()
        .map(|i| (i, Label::Cardiomegaly.index()))
        .chain(normal.iter().map(|i| (i, Label::Normal.index())))
        .collect();
    for (img, _) in &data {
        params.check_image(img)?;
    }
    let mut opt = Adam::new(cfg.lr, 0.9, 0.999, params.num_params());
    let mut shuffle_rng = Rng::new(derive_seed(cfg.seed, "clf:shuffle"));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let d_in = side * side;
    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            let x = stack_rows(chunk.iter().map(|&i| data[i].0.pixels()), d_in);
            let y: Vec<usize> = chunk.iter().map(|&i| data[i].1).collect();
            let (loss, grad) = clf_loss_and_grad(&params, &x, &y);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("classifier loss at epoch {epoch}")));
            }
            opt.step(&mut params, &grad);
        }
    }
    Ok(params)
}

fn argmax_label(row: &[f64]) -> Label {
    // ties go to the lower index, which is the disease class
    let idx = if row[1] > row[0] { 1 } else { 0 };
    Label::from_index(idx).expect("two classes")
}

pub fn clf_predict(p: &ClassifierParams, img: &Image) -> Result<Label> {
    p.check_image(img)?;
    let x = stack_rows([img.pixels()], p.side * p.side);
    Ok(argmax_label(logits(p, &x).row(0)))
}

/// Order-preserving [`clf_predict`] over many images.
pub fn clf_predict_all(p: &ClassifierParams, imgs: &[Image]) -> Result<Vec<Label>> {
    for img in imgs {
        p.check_image(img)?;
    }
    let x = stack_rows(imgs.iter().map(|i| i.pixels()), p.side * p.side);
    let z = logits(p, &x);
    Ok((0..z.rows()).map(|r| argmax_label(z.row(r))).collect())
}

/// Training data of one classification session.
#[derive(Debug, Clone)]
pub struct SessionSpec {
    pub index: usize,
    pub disease: Vec<Image>,
    pub normal: Vec<Image>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session: usize,
    pub train_size: usize,
    pub cm: ConfusionMatrix,
    #[serde(flatten)]
    pub scores: Scores,
}

/// Trains and scores every session against the shared test set, with the
/// disease label as positive. Session `s` trains with seed
/// `derive_seed(cfg.seed, "clf:s")`.
pub fn run_sessions(
    specs: &[SessionSpec],
    test: &[(Image, Label)],
    cfg: &ClassifierConfig,
) -> Result<Vec<SessionResult>> {
    if test.is_empty() {
        return Err(Error::InvalidInput("classifier test set is empty".into()));
    }
    let test_imgs: Vec<Image> = test.iter().map(|(i, _)| i.clone()).collect();
    let truth: Vec<Label> = test.iter().map(|(_, l)| *l).collect();
    specs
        .par_iter()
        .map(|spec| {
            check_disjoint(spec.disease.iter().chain(&spec.normal), &test_imgs)?;
            let session_cfg = ClassifierConfig {
                seed: derive_seed(cfg.seed, &format!("clf:{}", spec.index)),
                ..*cfg
            };
            let params = clf_train(&spec.disease, &spec.normal, &session_cfg)?;
            let preds = clf_predict_all(&params, &test_imgs)?;
            let cm = confusion(&preds, &truth, &Label::Cardiomegaly, &Label::Normal)?;
            Ok(SessionResult {
                session: spec.index,
                train_size: spec.disease.len() + spec.normal.len(),
                cm,
                scores: scores(&cm)?,
            })
        })
        .collect()
}
