use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierConfig;
use crate::error::{Error, Result};
use crate::gan::GanConfig;
use crate::imaging::{GreenWindow, PreprocessConfig};
use crate::metrics::FeatureMode;
use crate::query::{keep_count, Aggregation};
use crate::synthdata::MIN_SIDE;
use crate::vae::VaeConfig;

/// Every knob of one experiment, as flat keys so a JSON config file and
/// `--kebab-case` command-line flags share one namespace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Side of the preprocessed square images every model sees.
    pub side: usize,
    /// Side of the synthesized raw phantoms before crop and resize.
    pub raw_side: usize,
    pub initial_real_count: usize,
    pub target_size: usize,
    pub gen_per_cycle: usize,
    pub keep_fraction: f64,
    /// Normal-class training images, fixed across sessions.
    pub normal_count: usize,
    /// Held-out real images per label for the classifier test set.
    pub test_per_label: usize,
    pub annotate_frac: f64,
    pub noise_sigma: f64,

    pub gan_epochs: usize,
    pub gan_eval_every: usize,
    /// Images per FID evaluation; `null` uses the real reference size.
    pub gan_eval_n: Option<usize>,
    pub gan_d_noise: usize,
    pub gan_hidden_g: usize,
    pub gan_hidden_d: usize,
    pub gan_batch: usize,
    pub gan_lr_g: f64,
    pub gan_lr_d: f64,
    pub gan_beta1: f64,
    pub reinit_per_cycle: bool,

    pub vae_d_z: usize,
    pub vae_hidden: usize,
    pub vae_epochs: usize,
    pub vae_batch: usize,
    pub vae_lr: f64,

    pub clf_hidden: usize,
    pub clf_epochs: usize,
    pub clf_batch: usize,
    pub clf_lr: f64,

    pub feature_mode: FeatureMode,
    /// Downsampled side for pixel features.
    pub feature_side: usize,
    pub aggregation: Aggregation,

    pub seed: u64,
    /// Where reports go; not part of the experiment's identity, so it is
    /// left out of serialized echoes.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let gan = GanConfig::default();
        let vae = VaeConfig::default();
        let clf = ClassifierConfig::default();
        Self {
            side: 32,
            raw_side: 40,
            initial_real_count: 100,
            target_size: 180,
            gen_per_cycle: 200,
            keep_fraction: 0.1,
            normal_count: 100,
            test_per_label: 50,
            annotate_frac: 0.5,
            noise_sigma: 0.03,
            gan_epochs: gan.epochs_per_cycle,
            gan_eval_every: gan.eval_every,
            gan_eval_n: gan.eval_n,
            gan_d_noise: gan.d_noise,
            gan_hidden_g: gan.hidden_g,
            gan_hidden_d: gan.hidden_d,
            gan_batch: gan.batch,
            gan_lr_g: gan.lr_g,
            gan_lr_d: gan.lr_d,
            gan_beta1: gan.beta1,
            reinit_per_cycle: false,
            vae_d_z: vae.d_z,
            vae_hidden: vae.hidden,
            vae_epochs: vae.epochs,
            vae_batch: vae.batch,
            vae_lr: vae.lr,
            clf_hidden: clf.hidden,
            clf_epochs: clf.epochs,
            clf_batch: clf.batch,
            clf_lr: clf.lr,
            feature_mode: FeatureMode::Pixel,
            feature_side: 16,
            aggregation: Aggregation::Mean,
            seed: 0,
            out_dir: PathBuf::from("galvae-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Images kept per cycle: `⌊keep_fraction · gen_per_cycle⌋`.
    pub fn keep_count(&self) -> usize {
        keep_count(self.keep_fraction, self.gen_per_cycle)
    }

    /// Augmenting cycles: `(target_size − initial_real_count) / keep_count`.
    pub fn n_cycles(&self) -> usize {
        (self.target_size - self.initial_real_count) / self.keep_count()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.side == 0 || self.raw_side < self.side.max(MIN_SIDE) {
            return bad(format!(
                "need 0 < side ≤ raw_side and raw_side ≥ {MIN_SIDE}, got side {} raw_side {}",
                self.side, self.raw_side
            ));
        }
        let counts = [
            ("initial_real_count", self.initial_real_count),
            ("gen_per_cycle", self.gen_per_cycle),
            ("normal_count", self.normal_count),
            ("test_per_label", self.test_per_label),
            ("feature_side", self.feature_side),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return bad(format!("keep_fraction {} outside (0, 1]", self.keep_fraction));
        }
        if (self.keep_fraction * self.gen_per_cycle as f64 + 1e-9).floor() < 1.0 {
            return bad("keep_fraction · gen_per_cycle keeps no images".into());
        }
        if self.target_size < self.initial_real_count {
            return bad(format!(
                "target_size {} below initial_real_count {}",
                self.target_size, self.initial_real_count
            ));
        }
        let keep = self.keep_count();
        if (self.target_size - self.initial_real_count) % keep != 0 {
            return bad(format!(
                "target_size − initial_real_count = {} is not a multiple of keep count {keep}",
                self.target_size - self.initial_real_count
            ));
        }
        if !(0.0..=1.0).contains(&self.annotate_frac) {
            return bad(format!("annotate_frac {} outside [0, 1]", self.annotate_frac));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {}", self.noise_sigma));
        }
        self.gan(0).validate()?;
        self.vae(0).validate()?;
        self.classifier(0).validate()
    }

    pub fn gan(&self, seed: u64) -> GanConfig {
        GanConfig {
            epochs_per_cycle: self.gan_epochs,
            eval_every: self.gan_eval_every,
            gen_count: self.gen_per_cycle,
            d_noise: self.gan_d_noise,
            hidden_g: self.gan_hidden_g,
            hidden_d: self.gan_hidden_d,
            batch: self.gan_batch,
            lr_g: self.gan_lr_g,
            lr_d: self.gan_lr_d,
            beta1: self.gan_beta1,
            eval_n: self.gan_eval_n,
            eval_seed: crate::numerics::derive_seed(self.seed, "fid:eval"),
            seed,
        }
    }

    pub fn vae(&self, seed: u64) -> VaeConfig {
        VaeConfig {
            d_z: self.vae_d_z,
            hidden: self.vae_hidden,
            epochs: self.vae_epochs,
            batch: self.vae_batch,
            lr: self.vae_lr,
            seed,
        }
    }

    pub fn classifier(&self, seed: u64) -> ClassifierConfig {
        ClassifierConfig {
            hidden: self.clf_hidden,
            epochs: self.clf_epochs,
            batch: self.clf_batch,
            lr: self.clf_lr,
            seed,
        }
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            target: self.side,
            window: GreenWindow::default(),
        }
    }
}
