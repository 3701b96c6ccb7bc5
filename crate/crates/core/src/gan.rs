//! Small fully-connected GAN trained in cycles with best-FID checkpointing.
//!
//! Generator: `d_noise → h_g (leaky ReLU) → side²`, squashed by `(tanh + 1) / 2`.
//! Discriminator: `side² → h_d (leaky ReLU) → 1 logit`.
//! Losses are the non-saturating binary cross-entropy on logits.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::metrics::FidEvaluator;
use crate::nn::{
    leaky_relu, leaky_relu_backward, read_params_file, sigmoid, softplus, stack_rows,
    write_params_file, Adam, Dense, Network, KIND_GAN,
};
use crate::numerics::{derive_seed, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub epochs_per_cycle: usize,
    pub eval_every: usize,
    /// Candidates generated from the checkpoint at the end of a cycle.
    pub gen_count: usize,
    pub d_noise: usize,
    pub hidden_g: usize,
    pub hidden_d: usize,
    pub batch: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    /// Images generated per FID evaluation; `None` uses the reference size.
    pub eval_n: Option<usize>,
    pub eval_seed: u64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            epochs_per_cycle: 20,
            eval_every: 2,
            gen_count: 1000,
            d_noise: 64,
            hidden_g: 256,
            hidden_d: 256,
            batch: 16,
            lr_g: 1e-3,
            lr_d: 1e-3,
            beta1: 0.5,
            eval_n: None,
            eval_seed: 0,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.epochs_per_cycle,
            self.eval_every,
            self.gen_count,
            self.d_noise,
            self.hidden_g,
            self.hidden_d,
            self.batch,
        ];
        if sizes.contains(&0) || self.eval_n == Some(0) {
            return Err(Error::Config("GAN sizes, epochs and counts must be positive".into()));
        }
        if self.epochs_per_cycle % self.eval_every != 0 {
            return Err(Error::Config(format!(
                "{} epochs per cycle is not a multiple of eval_every {}",
                self.epochs_per_cycle, self.eval_every
            )));
        }
        for (name, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("GAN {name} {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::Config(format!("GAN beta1 {}", self.beta1)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub hidden: Dense,
    pub out: Dense,
}

impl Network for Generator {
    fn layers(&self) -> Vec<&Dense> {
        vec![&self.hidden, &self.out]
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        vec![&mut self.hidden, &mut self.out]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub hidden: Dense,
    pub out: Dense,
}

impl Network for Discriminator {
    fn layers(&self) -> Vec<&Dense> {
        vec![&self.hidden, &self.out]
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        vec![&mut self.hidden, &mut self.out]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanParams {
    pub side: usize,
    pub gen: Generator,
    pub disc: Discriminator,
}

impl Network for GanParams {
    fn layers(&self) -> Vec<&Dense> {
        let mut l = self.gen.layers();
        l.extend(self.disc.layers());
        l
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut l = self.gen.layers_mut();
        l.extend(self.disc.layers_mut());
        l
    }
}

impl GanParams {
    pub fn d_noise(&self) -> usize {
        self.gen.hidden.fan_in()
    }

    pub fn d_out(&self) -> usize {
        self.side * self.side
    }

    pub fn zeros(side: usize, d_noise: usize, hidden_g: usize, hidden_d: usize) -> Self {
        let d = side * side;
        Self {
            side,
            gen: Generator {
                hidden: Dense::zeros(d_noise, hidden_g),
                out: Dense::zeros(hidden_g, d),
            },
            disc: Discriminator {
                hidden: Dense::zeros(d, hidden_d),
                out: Dense::zeros(hidden_d, 1),
            },
        }
    }

    fn dims(&self) -> [u64; 4] {
        [
            self.side as u64,
            self.d_noise() as u64,
            self.gen.hidden.fan_out() as u64,
            self.disc.hidden.fan_out() as u64,
        ]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_params_file(path, KIND_GAN, &self.dims(), &self.flatten())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (kind, dims, flat) = read_params_file(path)?;
        if kind != KIND_GAN || dims.len() != 4 {
            return Err(Error::format(path, "not a GAN parameter file"));
        }
        let [side, d_noise, hg, hd] = [dims[0], dims[1], dims[2], dims[3]].map(|d| d as usize);
        let mut p = Self::zeros(side, d_noise, hg, hd);
        p.unflatten(&flat)
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(p)
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.channels() != 1 || img.width() != self.side || img.height() != self.side {
            return Err(Error::Shape(format!(
                "GAN expects {s}x{s} grayscale, got {}x{}x{}",
                img.width(),
                img.height(),
                img.channels(),
                s = self.side
            )));
        }
        Ok(())
    }
}

/// Standard deviation of the generator's output-layer weights at init.
/// He scaling there makes every pixel an independent random mix of the
/// hidden units, so training starts from (and tends to keep) pixel noise far
/// stronger than anything in the data; a small start lets the variance grow
/// only as the discriminator demands it.
pub const GEN_OUT_INIT_STD: f64 = 0.02;

/// He-initialized parameters for `side × side` images, except the generator
/// output layer (see [`GEN_OUT_INIT_STD`]).
pub fn gan_init(cfg: &GanConfig, side: usize) -> Result<GanParams> {
    cfg.validate()?;
    if side == 0 {
        return Err(Error::InvalidInput("side must be positive".into()));
    }
    let mut rng = Rng::new(derive_seed(cfg.seed, "gan:init"));
    let d = side * side;
    Ok(GanParams {
        side,
        gen: Generator {
            hidden: Dense::he_init(cfg.d_noise, cfg.hidden_g, &mut rng),
            out: Dense::normal_init(cfg.hidden_g, d, GEN_OUT_INIT_STD, &mut rng),
        },
        disc: Discriminator {
            hidden: Dense::he_init(d, cfg.hidden_d, &mut rng),
            out: Dense::he_init(cfg.hidden_d, 1, &mut rng),
        },
    })
}

fn squash(a: f64) -> f64 {
    (a.tanh() + 1.0) / 2.0
}

struct GenTrace {
    pre: Matrix,
    h: Matrix,
    act: Matrix,
    out: Matrix,
}

fn gen_forward(g: &Generator, z: &Matrix) -> GenTrace {
    let pre = g.hidden.forward(z);
    let h = leaky_relu(&pre);
    let act = g.out.forward(&h);
    let out = crate::nn::map(&act, squash);
    GenTrace { pre, h, act, out }
}

struct DiscTrace {
    pre: Matrix,
    h: Matrix,
    logits: Matrix,
}

fn disc_forward(d: &Discriminator, x: &Matrix) -> DiscTrace {
    let pre = d.hidden.forward(x);
    let h = leaky_relu(&pre);
    let logits = d.out.forward(&h);
    DiscTrace { pre, h, logits }
}

/// Accumulates discriminator gradients for `dlogits`; returns `∂/∂x`.
fn disc_backward(
    d: &Discriminator,
    x: &Matrix,
    t: &DiscTrace,
    dlogits: &Matrix,
    grad: &mut Discriminator,
    want_input_grad: bool,
) -> Option<Matrix> {
    let dh = d
        .out
        .backward(&t.h, dlogits, &mut grad.out, true)
        .expect("input grad requested");
    let dpre = leaky_relu_backward(&t.pre, &dh);
    d.hidden.backward(x, &dpre, &mut grad.hidden, want_input_grad)
}

/// Discriminator loss `mean softplus(−D(real)) + mean softplus(D(fake))` and
/// its gradient.
pub fn disc_loss_and_grad(d: &Discriminator, real: &Matrix, fake: &Matrix) -> (f64, Discriminator) {
    let mut grad = d.zeros_like();
    let mut loss = 0.0;
    for (x, target) in [(real, 1.0), (fake, 0.0)] {
        let b = x.rows() as f64;
        let t = disc_forward(d, x);
        let mut dl = t.logits.clone();
        for (g, &l) in dl.data_mut().iter_mut().zip(t.logits.data()) {
            if target == 1.0 {
                loss += softplus(-l) / b;
                *g = (sigmoid(l) - 1.0) / b;
            } else {
                loss += softplus(l) / b;
                *g = sigmoid(l) / b;
            }
        }
        disc_backward(d, x, &t, &dl, &mut grad, false);
    }
    (loss, grad)
}

/// Non-saturating generator loss `mean softplus(−D(G(z)))` and its gradient
/// with respect to the generator only.
pub fn gen_loss_and_grad(g: &Generator, d: &Discriminator, z: &Matrix) -> (f64, Generator) {
    let b = z.rows() as f64;
    let gt = gen_forward(g, z);
    let dt = disc_forward(d, &gt.out);
    let mut loss = 0.0;
    let mut dl = dt.logits.clone();
    for (v, &l) in dl.data_mut().iter_mut().zip(dt.logits.data()) {
        loss += softplus(-l) / b;
        *v = (sigmoid(l) - 1.0) / b;
    }
    let mut scratch = d.zeros_like();
    let dx = disc_backward(d, &gt.out, &dt, &dl, &mut scratch, true).expect("input grad requested");
    let dact = crate::nn::zip(&dx, &gt.act, |dy, a| {
        let th = a.tanh();
        dy * 0.5 * (1.0 - th * th)
    });
    let mut grad = g.zeros_like();
    let dh = g
        .out
        .backward(&gt.h, &dact, &mut grad.out, true)
        .expect("input grad requested");
    let dpre = leaky_relu_backward(&gt.pre, &dh);
    g.hidden.backward(z, &dpre, &mut grad.hidden, false);
    (loss, grad)
}

fn noise(rng: &mut Rng, n: usize, d: usize) -> Matrix {
    let mut z = Matrix::zeros(n, d);
    for v in z.data_mut() {
        *v = rng.gauss();
    }
    z
}

/// `n` images from `n` noise vectors drawn in order from `Rng::new(seed)`,
/// so a smaller batch is a prefix of a larger one.
pub fn generate(p: &GanParams, n: usize, seed: u64) -> Result<Vec<Image>> {
    if n == 0 {
        return Err(Error::InvalidInput("generate needs n ≥ 1".into()));
    }
    let z = noise(&mut Rng::new(seed), n, p.d_noise());
    let rows: Vec<&[f64]> = (0..n).map(|r| z.row(r)).collect();
    let chunks: Vec<Result<Vec<Image>>> = rows
        .par_chunks(64)
        .map(|chunk| {
            let zc = stack_rows(chunk.iter().copied(), p.d_noise());
            let out = gen_forward(&p.gen, &zc).out;
            (0..out.rows())
                .map(|r| Image::new(p.side, p.side, 1, out.row(r).to_vec()))
                .collect()
        })
        .collect();
    let mut imgs = Vec::with_capacity(n);
    for c in chunks {
        imgs.extend(c?);
    }
    Ok(imgs)
}

/// Best-FID snapshot of one training cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub saved_fid: f64,
    pub saved_params: GanParams,
    pub saved_epoch: usize,
    /// `(epoch, fid)` for every evaluation, 1-based epochs.
    pub fid_history: Vec<(usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointSidecar {
    saved_fid: f64,
    epoch: usize,
    history: Vec<(usize, f64)>,
}

impl Checkpoint {
    /// Parameters at `path`, metadata at `path` with a `.json` extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.saved_params.save(path)?;
        let side = CheckpointSidecar {
            saved_fid: self.saved_fid,
            epoch: self.saved_epoch,
            history: self.fid_history.clone(),
        };
        let json_path = path.with_extension("json");
        let text = serde_json::to_string_pretty(&side)?;
        std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let saved_params = GanParams::load(path)?;
        let json_path = path.with_extension("json");
        let text = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let side: CheckpointSidecar = serde_json::from_str(&text)?;
        Ok(Self {
            saved_fid: side.saved_fid,
            saved_params,
            saved_epoch: side.epoch,
            fid_history: side.history,
        })
    }
}

/// One cycle of GAN training. Every `eval_every` epochs the current generator
/// is scored against the evaluator's reference with `eval_n` images drawn
/// from `eval_seed`; a strictly lower FID replaces the checkpoint.
/// Returns the checkpoint and the parameters after the last epoch.
pub fn gan_train_cycle(
    mut params: GanParams,
    train_set: &[Image],
    evaluator: &FidEvaluator,
    cfg: &GanConfig,
) -> Result<(Checkpoint, GanParams)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("GAN training set is empty".into()));
    }
    if evaluator.reference_len() == 0 {
        return Err(Error::InvalidInput("FID reference set is empty".into()));
    }
    if params.d_noise() != cfg.d_noise {
        return Err(Error::Config(format!(
            "GAN parameters take {}-d noise, config says {}",
            params.d_noise(),
            cfg.d_noise
        )));
    }
    for img in train_set {
        params.check_image(img)?;
    }
    let eval_n = cfg.eval_n.unwrap_or(evaluator.reference_len());
    let mut opt_g = Adam::new(cfg.lr_g, cfg.beta1, 0.999, params.gen.num_params());
    let mut opt_d = Adam::new(cfg.lr_d, cfg.beta1, 0.999, params.disc.num_params());
    let mut shuffle_rng = Rng::new(derive_seed(cfg.seed, "gan:shuffle"));
    let mut noise_rng = Rng::new(derive_seed(cfg.seed, "gan:noise"));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, GanParams, usize)> = None;
    let mut history = Vec::with_capacity(cfg.epochs_per_cycle / cfg.eval_every);

    for epoch in 1..=cfg.epochs_per_cycle {
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            let real = stack_rows(chunk.iter().map(|&i| train_set[i].pixels()), params.d_out());
            let z = noise(&mut noise_rng, chunk.len(), cfg.d_noise);
            let fake = gen_forward(&params.gen, &z).out;
            let (d_loss, d_grad) = disc_loss_and_grad(&params.disc, &real, &fake);
            opt_d.step(&mut params.disc, &d_grad);
            let (g_loss, g_grad) = gen_loss_and_grad(&params.gen, &params.disc, &z);
            opt_g.step(&mut params.gen, &g_grad);
            if !(d_loss.is_finite() && g_loss.is_finite()) {
                return Err(Error::NonFinite(format!("GAN loss at epoch {epoch}")));
            }
        }
        if epoch % cfg.eval_every == 0 {
            let fid = evaluator.fid(&generate(&params, eval_n, cfg.eval_seed)?)?;
            if !fid.is_finite() {
                return Err(Error::NonFinite(format!("FID at epoch {epoch}")));
            }
            history.push((epoch, fid));
            if best.as_ref().is_none_or(|(saved, _, _)| fid < *saved) {
                best = Some((fid, params.clone(), epoch));
            }
        }
    }
    let (saved_fid, saved_params, saved_epoch) = best.expect("at least one evaluation");
    let checkpoint = Checkpoint {
        saved_fid,
        saved_params,
        saved_epoch,
        fid_history: history,
    };
    Ok((checkpoint, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::FeatureExtractor;
    use crate::numerics::gradient_check;

    fn toy_cfg() -> GanConfig {
        GanConfig {
            epochs_per_cycle: 4,
            eval_every: 2,
            gen_count: 8,
            d_noise: 3,
            hidden_g: 5,
            hidden_d: 6,
            batch: 4,
            lr_g: 1e-3,
            lr_d: 1e-3,
            beta1: 0.5,
            eval_n: None,
            eval_seed: 9,
            seed: 2,
        }
    }

    fn blobs(n: usize, side: usize, seed: u64) -> Vec<Image> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|_| {
                let level = rng.uniform(0.3, 0.7);
                let px = (0..side * side)
                    .map(|_| (level + 0.05 * rng.gauss()).clamp(0.0, 1.0))
                    .collect();
                Image::new(side, side, 1, px).unwrap()
            })
            .collect()
    }

    fn rand_matrix(rng: &mut Rng, r: usize, c: usize, lo: f64, hi: f64) -> Matrix {
        let mut m = Matrix::zeros(r, c);
        for v in m.data_mut() {
            *v = rng.uniform(lo, hi);
        }
        m
    }

    #[test]
    fn init_shapes_and_moments() {
        let cfg = GanConfig {
            seed: 5,
            ..GanConfig::default()
        };
        let p = gan_init(&cfg, 16).unwrap();
        assert_eq!(p.gen.out.fan_out(), 256);
        assert_eq!(p.disc.hidden.fan_in(), 256);
        assert_eq!(p.disc.out.fan_out(), 1);
        // He init: weight variance 2 / fan_in
        let w = p.disc.hidden.weight.data();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 2.0 / 256.0).abs() < 0.05 * 2.0 / 256.0, "{var}");
        assert_eq!(p, gan_init(&cfg, 16).unwrap());
    }

    #[test]
    fn config_checks() {
        assert!(GanConfig::default().validate().is_ok());
        let odd = GanConfig {
            epochs_per_cycle: 5,
            ..GanConfig::default()
        };
        assert!(matches!(odd.validate(), Err(Error::Config(_))));
        let bad_lr = GanConfig {
            lr_d: 0.0,
            ..GanConfig::default()
        };
        assert!(bad_lr.validate().is_err());
    }

    #[test]
    fn discriminator_gradient() {
        let p = gan_init(&toy_cfg(), 2).unwrap();
        let mut rng = Rng::new(1);
        let real = rand_matrix(&mut rng, 3, 4, 0.0, 1.0);
        let fake = rand_matrix(&mut rng, 3, 4, 0.0, 1.0);
        let (_, g) = disc_loss_and_grad(&p.disc, &real, &fake);
        let err = gradient_check(
            |x| {
                let mut d = p.disc.clone();
                d.unflatten(x).unwrap();
                disc_loss_and_grad(&d, &real, &fake).0
            },
            &p.disc.flatten(),
            &g.flatten(),
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn generator_gradient() {
        let p = gan_init(&toy_cfg(), 2).unwrap();
        let mut rng = Rng::new(2);
        let z = rand_matrix(&mut rng, 3, 3, -1.5, 1.5);
        let (_, g) = gen_loss_and_grad(&p.gen, &p.disc, &z);
        let err = gradient_check(
            |x| {
                let mut gen = p.gen.clone();
                gen.unflatten(x).unwrap();
                gen_loss_and_grad(&gen, &p.disc, &z).0
            },
            &p.gen.flatten(),
            &g.flatten(),
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn generate_counts_range_and_prefix() {
        let p = gan_init(&GanConfig::default(), 8).unwrap();
        let imgs = generate(&p, 1000, 4).unwrap();
        assert_eq!(imgs.len(), 1000);
        assert!(imgs.iter().all(|i| i.width() == 8 && i.height() == 8));
        assert!(imgs.iter().flat_map(|i| i.pixels()).all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(imgs, generate(&p, 1000, 4).unwrap());
        let one = generate(&p, 1, 4).unwrap();
        let two = generate(&p, 2, 4).unwrap();
        assert_eq!(one[0], two[0]);
        assert!(generate(&p, 0, 4).is_err());
    }

    #[test]
    fn cycle_history_checkpoint_and_determinism() {
        let cfg = GanConfig {
            epochs_per_cycle: 20,
            ..toy_cfg()
        };
        let real = blobs(24, 4, 1);
        let ev = FidEvaluator::new(FeatureExtractor::Pixel { side: 4 }, &real).unwrap();
        let p = gan_init(&cfg, 4).unwrap();
        let (ck, last) = gan_train_cycle(p.clone(), &real, &ev, &cfg).unwrap();
        assert_eq!(ck.fid_history.len(), 10);
        let epochs: Vec<usize> = ck.fid_history.iter().map(|h| h.0).collect();
        assert_eq!(epochs, (1..=10).map(|e| 2 * e).collect::<Vec<_>>());
        let min = ck.fid_history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
        assert_eq!(ck.saved_fid, min);
        assert!(ck.fid_history.contains(&(ck.saved_epoch, ck.saved_fid)));
        // the checkpoint reproduces its own score
        let again = ev.fid(&generate(&ck.saved_params, 24, cfg.eval_seed).unwrap()).unwrap();
        assert_eq!(again, ck.saved_fid);
        let (ck2, last2) = gan_train_cycle(p, &real, &ev, &cfg).unwrap();
        assert_eq!(ck, ck2);
        assert_eq!(last, last2);
    }

    #[test]
    fn training_moves_toward_the_data() {
        let cfg = GanConfig {
            epochs_per_cycle: 40,
            eval_every: 4,
            d_noise: 4,
            hidden_g: 32,
            hidden_d: 32,
            ..toy_cfg()
        };
        // bright blobs sit far from the mid-gray an untrained generator emits
        let real: Vec<Image> = blobs(64, 4, 3)
            .iter()
            .map(|b| Image::new(4, 4, 1, b.pixels().iter().map(|p| 0.5 + 0.5 * p).collect()).unwrap())
            .collect();
        let ev = FidEvaluator::new(FeatureExtractor::Pixel { side: 4 }, &real).unwrap();
        let p = gan_init(&cfg, 4).unwrap();
        let before = ev.fid(&generate(&p, 64, cfg.eval_seed).unwrap()).unwrap();
        let (ck, _) = gan_train_cycle(p, &real, &ev, &cfg).unwrap();
        assert!(ck.saved_fid < 0.25 * before, "{} vs {before}", ck.saved_fid);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = toy_cfg();
        let real = blobs(4, 4, 1);
        let ev = FidEvaluator::new(FeatureExtractor::Pixel { side: 4 }, &real).unwrap();
        let p = gan_init(&cfg, 4).unwrap();
        assert!(gan_train_cycle(p.clone(), &[], &ev, &cfg).is_err());
        let wrong = blobs(4, 3, 1);
        assert!(matches!(
            gan_train_cycle(p, &wrong, &ev, &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn checkpoint_file_round_trip() {
        let cfg = toy_cfg();
        let real = blobs(8, 4, 1);
        let ev = FidEvaluator::new(FeatureExtractor::Pixel { side: 4 }, &real).unwrap();
        let (ck, _) = gan_train_cycle(gan_init(&cfg, 4).unwrap(), &real, &ev, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        ck.save(&path).unwrap();
        assert!(dir.path().join("ck.json").exists());
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        let vae_path = dir.path().join("vae.bin");
        crate::vae::VaeParams::zeros(2, 2, 2).save(&vae_path).unwrap();
        assert!(GanParams::load(&vae_path).is_err());
    }
}
