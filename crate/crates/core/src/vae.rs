//! Fully-connected variational autoencoder whose encoder mean head supplies
//! the latent embeddings used by the query phase.
//!
//! Encoder: `side² → hidden (leaky ReLU) → {μ, log σ²}`.
//! Decoder: `d_z → hidden (leaky ReLU) → side² (sigmoid)`.
//! Objective: summed binary cross-entropy plus the Gaussian KL term.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::nn::{
    leaky_relu, leaky_relu_backward, read_params_file, sigmoid, softplus, stack_rows,
    write_params_file, Adam, Dense, Network, KIND_VAE,
};
use crate::numerics::{derive_seed, Matrix, Rng, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeConfig {
    pub d_z: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            d_z: 32,
            hidden: 256,
            epochs: 25,
            batch: 16,
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_z == 0 || self.hidden == 0 || self.epochs == 0 || self.batch == 0 {
            return Err(Error::Config("VAE sizes and epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("VAE learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub side: usize,
    pub enc_hidden: Dense,
    pub enc_mu: Dense,
    pub enc_logvar: Dense,
    pub dec_hidden: Dense,
    pub dec_out: Dense,
}

impl Network for VaeParams {
    fn layers(&self) -> Vec<&Dense> {
        vec![
            &self.enc_hidden,
            &self.enc_mu,
            &self.enc_logvar,
            &self.dec_hidden,
            &self.dec_out,
        ]
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        vec![
            &mut self.enc_hidden,
            &mut self.enc_mu,
            &mut self.enc_logvar,
            &mut self.dec_hidden,
            &mut self.dec_out,
        ]
    }
}

impl VaeParams {
    pub fn d_in(&self) -> usize {
        self.side * self.side
    }

    pub fn d_z(&self) -> usize {
        self.enc_mu.fan_out()
    }

    pub fn hidden(&self) -> usize {
        self.enc_hidden.fan_out()
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(side: usize, hidden: usize, d_z: usize) -> Self {
        let d_in = side * side;
        Self {
            side,
            enc_hidden: Dense::zeros(d_in, hidden),
            enc_mu: Dense::zeros(hidden, d_z),
            enc_logvar: Dense::zeros(hidden, d_z),
            dec_hidden: Dense::zeros(d_z, hidden),
            dec_out: Dense::zeros(hidden, d_in),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let dims = [self.side as u64, self.hidden() as u64, self.d_z() as u64];
        write_params_file(path, KIND_VAE, &dims, &self.flatten())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (kind, dims, flat) = read_params_file(path)?;
        if kind != KIND_VAE || dims.len() != 3 {
            return Err(Error::format(path, "not a VAE parameter file"));
        }
        let mut p = Self::zeros(dims[0] as usize, dims[1] as usize, dims[2] as usize);
        p.unflatten(&flat)
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(p)
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.channels() != 1 || img.width() != self.side || img.height() != self.side {
            return Err(Error::Shape(format!(
                "VAE expects {s}x{s} grayscale, got {}x{}x{}",
                img.width(),
                img.height(),
                img.channels(),
                s = self.side
            )));
        }
        Ok(())
    }
}

/// He-initialized parameters for `side × side` inputs.
pub fn vae_init(cfg: &VaeConfig, side: usize) -> Result<VaeParams> {
    cfg.validate()?;
    if side == 0 {
        return Err(Error::InvalidInput("side must be positive".into()));
    }
    let mut rng = Rng::new(derive_seed(cfg.seed, "vae:init"));
    let d_in = side * side;
    Ok(VaeParams {
        side,
        enc_hidden: Dense::he_init(d_in, cfg.hidden, &mut rng),
        enc_mu: Dense::he_init(cfg.hidden, cfg.d_z, &mut rng),
        enc_logvar: Dense::he_init(cfg.hidden, cfg.d_z, &mut rng),
        dec_hidden: Dense::he_init(cfg.d_z, cfg.hidden, &mut rng),
        dec_out: Dense::he_init(cfg.hidden, d_in, &mut rng),
    })
}

fn encode_batch(p: &VaeParams, x: &Matrix) -> (Matrix, Matrix) {
    let h = leaky_relu(&p.enc_hidden.forward(x));
    (p.enc_mu.forward(&h), p.enc_logvar.forward(&h))
}

/// Mean and log-variance heads for one image.
pub fn encode(p: &VaeParams, img: &Image) -> Result<(Vector, Vector)> {
    p.check_image(img)?;
    let x = stack_rows([img.pixels()], p.d_in());
    let (mu, lv) = encode_batch(p, &x);
    Ok((Vector::from_vec(mu.into_vec())?, Vector::from_vec(lv.into_vec())?))
}

/// `z = μ + exp(log σ² / 2) ⊙ ε`
pub fn reparameterize(mu: &Vector, logvar: &Vector, eps: &Vector) -> Result<Vector> {
    if mu.dim() != logvar.dim() || mu.dim() != eps.dim() {
        return Err(Error::Shape(format!(
            "reparameterize dims {} / {} / {}",
            mu.dim(),
            logvar.dim(),
            eps.dim()
        )));
    }
    let z = mu
        .iter()
        .zip(logvar.iter())
        .zip(eps.iter())
        .map(|((&m, &lv), &e)| m + (lv / 2.0).exp() * e)
        .collect();
    Vector::from_vec(z)
}

fn decode_logits(p: &VaeParams, z: &Matrix) -> Matrix {
    let h = leaky_relu(&p.dec_hidden.forward(z));
    p.dec_out.forward(&h)
}

pub fn decode(p: &VaeParams, z: &Vector) -> Result<Image> {
    if z.dim() != p.d_z() {
        return Err(Error::Shape(format!(
            "latent has dim {}, decoder expects {}",
            z.dim(),
            p.d_z()
        )));
    }
    let logits = decode_logits(p, &stack_rows([&z[..]], p.d_z()));
    let px = logits.data().iter().map(|&a| sigmoid(a)).collect();
    Image::new(p.side, p.side, 1, px)
}

/// Loss terms for one image (or averaged over a batch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

pub fn kl_term(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

/// Summed binary cross-entropy of `recon` against `img` plus the KL term.
pub fn elbo_loss(img: &Image, recon: &Image, mu: &Vector, logvar: &Vector) -> Result<ElboTerms> {
    if !img.same_shape(recon) {
        return Err(Error::Shape("image and reconstruction differ in shape".into()));
    }
    if mu.dim() != logvar.dim() {
        return Err(Error::Shape("mu and logvar differ in dim".into()));
    }
    if let Some(bad) = recon.pixels().iter().find(|&&r| r <= 0.0 || r >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "reconstruction value {bad} outside (0, 1)"
        )));
    }
    let recon_term = -img
        .pixels()
        .iter()
        .zip(recon.pixels())
        .map(|(&x, &r)| x * r.ln() + (1.0 - x) * (1.0 - r).ln())
        .sum::<f64>();
    let kl = kl_term(mu, logvar);
    Ok(ElboTerms {
        total: recon_term + kl,
        recon: recon_term,
        kl,
    })
}

/// Batch-mean ELBO and its gradient for inputs `x` (`B × side²`) and fixed
/// noise `eps` (`B × d_z`). Reconstruction is scored from logits, which is
/// the same objective as [`elbo_loss`] without the `ln 0` hazard.
pub fn elbo_and_grad(p: &VaeParams, x: &Matrix, eps: &Matrix) -> (ElboTerms, VaeParams) {
    let b = x.rows() as f64;
    let mut g = p.zeros_like();

    let pre1 = p.enc_hidden.forward(x);
    let h1 = leaky_relu(&pre1);
    let mu = p.enc_mu.forward(&h1);
    let lv = p.enc_logvar.forward(&h1);
    let std = crate::nn::map(&lv, |v| (v / 2.0).exp());
    let mut z = mu.clone();
    for ((zi, &s), &e) in z.data_mut().iter_mut().zip(std.data()).zip(eps.data()) {
        *zi += s * e;
    }
    let pre2 = p.dec_hidden.forward(&z);
    let h2 = leaky_relu(&pre2);
    let logits = p.dec_out.forward(&h2);

    let mut recon = 0.0;
    let mut dlogits = logits.clone();
    for ((d, &a), &xi) in dlogits.data_mut().iter_mut().zip(logits.data()).zip(x.data()) {
        recon += softplus(a) - xi * a;
        *d = (sigmoid(a) - xi) / b;
    }
    let kl = kl_term(mu.data(), lv.data());

    let dh2 = p
        .dec_out
        .backward(&h2, &dlogits, &mut g.dec_out, true)
        .expect("input grad requested");
    let dpre2 = leaky_relu_backward(&pre2, &dh2);
    let dz = p
        .dec_hidden
        .backward(&z, &dpre2, &mut g.dec_hidden, true)
        .expect("input grad requested");

    let mut dmu = dz.clone();
    let mut dlv = dz;
    for i in 0..dmu.data().len() {
        let m = mu.data()[i];
        let l = lv.data()[i];
        let e = eps.data()[i];
        let s = std.data()[i];
        dmu.data_mut()[i] += m / b;
        dlv.data_mut()[i] = dlv.data()[i] * e * 0.5 * s + 0.5 * (l.exp() - 1.0) / b;
    }
    let mut dh1 = p
        .enc_mu
        .backward(&h1, &dmu, &mut g.enc_mu, true)
        .expect("input grad requested");
    let dh1_lv = p
        .enc_logvar
        .backward(&h1, &dlv, &mut g.enc_logvar, true)
        .expect("input grad requested");
    for (a, &c) in dh1.data_mut().iter_mut().zip(dh1_lv.data()) {
        *a += c;
    }
    let dpre1 = leaky_relu_backward(&pre1, &dh1);
    p.enc_hidden.backward(x, &dpre1, &mut g.enc_hidden, false);

    let terms = ElboTerms {
        total: (recon + kl) / b,
        recon: recon / b,
        kl: kl / b,
    };
    (terms, g)
}

/// Mini-batch Adam training with a seeded shuffle per epoch.
/// Returns the parameters and the per-epoch mean loss per image.
pub fn vae_train(cfg: &VaeConfig, dataset: &[Image]) -> Result<(VaeParams, Vec<f64>)> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidInput("VAE training set is empty".into()))?;
    let side = first.width();
    let mut params = vae_init(cfg, side)?;
    for img in dataset {
        params.check_image(img)?;
    }
    let mut opt = Adam::new(cfg.lr, 0.9, 0.999, params.num_params());
    let mut shuffle_rng = Rng::new(derive_seed(cfg.seed, "vae:shuffle"));
    let mut noise_rng = Rng::new(derive_seed(cfg.seed, "vae:eps"));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let x = stack_rows(chunk.iter().map(|&i| dataset[i].pixels()), params.d_in());
            let mut eps = Matrix::zeros(chunk.len(), params.d_z());
            for e in eps.data_mut() {
                *e = noise_rng.gauss();
            }
            let (terms, grad) = elbo_and_grad(&params, &x, &eps);
            if !terms.total.is_finite() {
                return Err(Error::NonFinite(format!("VAE loss at epoch {}", epoch + 1)));
            }
            epoch_loss += terms.total * chunk.len() as f64;
            opt.step(&mut params, &grad);
        }
        history.push(epoch_loss / dataset.len() as f64);
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("VAE parameters diverged".into()));
    }
    Ok((params, history))
}

/// Query embedding: the encoder mean, with no sampling.
pub fn embed(p: &VaeParams, img: &Image) -> Result<Vector> {
    encode(p, img).map(|(mu, _)| mu)
}

/// Order-preserving [`embed`] over many images.
pub fn embed_all(p: &VaeParams, imgs: &[Image]) -> Result<Vec<Vector>> {
    for img in imgs {
        p.check_image(img)?;
    }
    let chunks: Vec<Vec<Vector>> = imgs
        .par_chunks(64)
        .map(|chunk| {
            let x = stack_rows(chunk.iter().map(|i| i.pixels()), p.d_in());
            let (mu, _) = encode_batch(p, &x);
            (0..mu.rows()).map(|r| mu.row(r).to_vec().into()).collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradient_check;

    fn toy_cfg() -> VaeConfig {
        VaeConfig {
            d_z: 4,
            hidden: 8,
            epochs: 5,
            batch: 4,
            lr: 1e-2,
            seed: 3,
        }
    }

    fn random_image(side: usize, seed: u64) -> Image {
        let mut rng = Rng::new(seed);
        Image::new(side, side, 1, (0..side * side).map(|_| rng.next_f64()).collect()).unwrap()
    }

    #[test]
    fn init_is_seeded_with_zero_biases() {
        let a = vae_init(&toy_cfg(), 4).unwrap();
        assert_eq!(a, vae_init(&toy_cfg(), 4).unwrap());
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_weight_variance() {
        let cfg = VaeConfig {
            hidden: 16,
            ..toy_cfg()
        };
        let p = vae_init(&cfg, 32).unwrap();
        let w = p.enc_hidden.weight.data();
        assert!(w.len() >= 10_000);
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        let expect = 2.0 / 1024.0;
        assert!((var / expect - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn zero_network_encodes_to_zero() {
        let p = VaeParams::zeros(4, 8, 4);
        let (mu, lv) = encode(&p, &Image::filled(4, 4, 1, 0.0)).unwrap();
        assert!(mu.iter().chain(lv.iter()).all(|&v| v == 0.0));
        let img = decode(&p, &Vector::zeros(4)).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn shape_errors() {
        let p = VaeParams::zeros(4, 8, 4);
        assert!(encode(&p, &Image::filled(5, 5, 1, 0.0)).is_err());
        assert!(encode(&p, &Image::filled(4, 4, 3, 0.0)).is_err());
        assert!(decode(&p, &Vector::zeros(3)).is_err());
        assert!(reparameterize(&Vector::zeros(2), &Vector::zeros(2), &Vector::zeros(3)).is_err());
    }

    #[test]
    fn hand_traced_toy_network() {
        // side 2 → hidden 2 → d_z 1
        let mut p = VaeParams::zeros(2, 2, 1);
        p.enc_hidden.weight = Matrix::from_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, -1.0, 0.0, 0.0]]).unwrap();
        p.enc_hidden.bias = vec![0.0, 0.1].into();
        p.enc_mu.weight = Matrix::from_rows(&[&[2.0, 1.0]]).unwrap();
        p.enc_logvar.weight = Matrix::from_rows(&[&[0.0, 3.0]]).unwrap();
        p.enc_logvar.bias = vec![-1.0].into();
        let img = Image::new(2, 2, 1, vec![0.5, 1.0, 0.0, 0.0]).unwrap();
        // pre = (0.5, -1.0 + 0.1 = -0.9) → h = (0.5, -0.18)
        // mu = 2·0.5 + 1·(-0.18) = 0.82 ; logvar = 3·(-0.18) - 1 = -1.54
        let (mu, lv) = encode(&p, &img).unwrap();
        assert!((mu[0] - 0.82).abs() < 1e-12);
        assert!((lv[0] + 1.54).abs() < 1e-12);

        p.dec_hidden.weight = Matrix::from_rows(&[&[1.0], &[-2.0]]).unwrap();
        p.dec_out.weight =
            Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[0.0, 0.0]]).unwrap();
        p.dec_out.bias = vec![0.0, 0.0, 0.0, 0.25].into();
        // z = 0.5 → pre = (0.5, -1.0) → h = (0.5, -0.2)
        // logits = (0.5, -0.2, 0.3, 0.25)
        let out = decode(&p, &vec![0.5].into()).unwrap();
        let expect = [0.5f64, -0.2, 0.3, 0.25].map(|a| 1.0 / (1.0 + (-a).exp()));
        for (o, e) in out.pixels().iter().zip(expect) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn reparameterize_cases() {
        let mu: Vector = vec![1.0, -2.0].into();
        let z = reparameterize(&mu, &Vector::zeros(2), &Vector::zeros(2)).unwrap();
        assert_eq!(z, mu);
        let z = reparameterize(&mu, &Vector::zeros(2), &vec![0.5, 0.25].into()).unwrap();
        assert_eq!(&z[..], &[1.5, -1.75]);
        let z = reparameterize(&vec![1.0].into(), &vec![4f64.ln()].into(), &vec![0.5].into()).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn kl_cases() {
        assert_eq!(kl_term(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(kl_term(&[1.0, 0.0], &[0.0, 0.0]), 0.5);
        assert!(kl_term(&[0.0], &[0.7]) > 0.0);
        assert!(kl_term(&[0.0], &[-0.7]) > 0.0);
    }

    #[test]
    fn elbo_loss_matches_logit_form() {
        let p = vae_init(&toy_cfg(), 4).unwrap();
        let img = random_image(4, 1);
        let (mu, lv) = encode(&p, &img).unwrap();
        let eps: Vector = vec![0.1, -0.3, 0.2, 0.0].into();
        let z = reparameterize(&mu, &lv, &eps).unwrap();
        let recon = decode(&p, &z).unwrap();
        let direct = elbo_loss(&img, &recon, &mu, &lv).unwrap();
        let x = stack_rows([img.pixels()], 16);
        let e = stack_rows([&eps[..]], 4);
        let (terms, _) = elbo_and_grad(&p, &x, &e);
        assert!((direct.total - terms.total).abs() < 1e-9);
        assert!((direct.kl - terms.kl).abs() < 1e-12);
    }

    #[test]
    fn elbo_rejects_saturated_recon() {
        let img = Image::filled(2, 2, 1, 0.5);
        let recon = Image::filled(2, 2, 1, 1.0);
        assert!(elbo_loss(&img, &recon, &Vector::zeros(1), &Vector::zeros(1)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = vae_init(&toy_cfg(), 4).unwrap();
        let x = stack_rows([random_image(4, 7).pixels(), random_image(4, 8).pixels()], 16);
        let mut rng = Rng::new(99);
        let eps = Matrix::from_vec(2, 4, (0..8).map(|_| rng.gauss()).collect()).unwrap();
        let (_, grad) = elbo_and_grad(&p, &x, &eps);
        let err = gradient_check(
            |flat| {
                let mut q = p.clone();
                q.unflatten(flat).unwrap();
                elbo_and_grad(&q, &x, &eps).0.total
            },
            &p.flatten(),
            &grad.flatten(),
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let data: Vec<Image> = (0..12).map(|i| random_image(4, i)).collect();
        let (p1, h1) = vae_train(&toy_cfg(), &data).unwrap();
        let (p2, h2) = vae_train(&toy_cfg(), &data).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
        assert_eq!(h1.len(), 5);
    }

    #[test]
    fn single_image_overfits() {
        let cfg = VaeConfig {
            epochs: 40,
            ..toy_cfg()
        };
        let (_, h) = vae_train(&cfg, &[random_image(4, 5)]).unwrap();
        assert!(h.last().unwrap() < h.first().unwrap());
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(vae_train(&toy_cfg(), &[]).is_err());
    }

    #[test]
    fn embed_is_mu_and_pure() {
        let p = vae_init(&toy_cfg(), 4).unwrap();
        let imgs: Vec<Image> = (0..70).map(|i| random_image(4, i)).collect();
        let all = embed_all(&p, &imgs).unwrap();
        for (img, e) in imgs.iter().zip(&all) {
            let (mu, _) = encode(&p, img).unwrap();
            assert_eq!(e, &mu);
            assert_eq!(embed(&p, img).unwrap(), mu);
        }
    }

    #[test]
    fn params_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vae.bin");
        let p = vae_init(&toy_cfg(), 4).unwrap();
        p.save(&path).unwrap();
        assert_eq!(VaeParams::load(&path).unwrap(), p);
    }
}
