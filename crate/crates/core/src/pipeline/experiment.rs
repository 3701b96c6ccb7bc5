use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentConfig;
use crate::classifier::{run_sessions, SessionResult, SessionSpec};
use crate::error::{Error, Result};
use crate::gan::{gan_init, gan_train_cycle, generate, Checkpoint, GanParams};
use crate::imaging::{encode_pnm, preprocess_dataset, Image};
use crate::metrics::{FeatureExtractor, FeatureMode, FidEvaluator};
use crate::nn::Network;
use crate::numerics::derive_seed;
use crate::query::{score_generated, select_top_fraction, QueryResult};
use crate::synthdata::{make_dataset, DatasetSpec, Label, Phantom};
use crate::vae::{embed_all, vae_train, VaeParams};

/// Outcome of one GAN training cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: usize,
    pub optimal_fid: f64,
    pub worst_fid: f64,
    /// GAN training-set size during this cycle.
    pub size: usize,
    /// Training-set size after this cycle's selected images were appended.
    pub size_after: usize,
    pub saved_epoch: usize,
    pub fid_history: Vec<(usize, f64)>,
    /// Indices into this cycle's generated batch; empty for the last cycle.
    pub selected: Vec<usize>,
    /// Wall-clock time, kept out of serialized reports so reruns compare equal.
    #[serde(skip)]
    pub wall_ms: u128,
}

/// Lowest and highest FID of a cycle.
pub fn fid_bookkeeping(history: &[f64]) -> Result<(f64, f64)> {
    if history.is_empty() {
        return Err(Error::InvalidInput("empty FID history".into()));
    }
    if history.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN in FID history".into()));
    }
    Ok(history
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        }))
}

/// Git-style blob hash: SHA-256 over `"blob <len>\0"` followed by the bytes.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub name: String,
    pub sha256: String,
}

/// Real data after synthesis and preprocessing.
#[derive(Debug, Clone)]
pub struct RealData {
    /// Initial disease images: GAN seed set, VAE training set and FID reference.
    pub disease: Vec<Image>,
    /// Fixed normal-class training images.
    pub normal: Vec<Image>,
    /// Held-out test images, disease first.
    pub test: Vec<(Image, Label)>,
    pub input_hashes: Vec<InputHash>,
}

/// Synthesizes raw phantoms, preprocesses them and splits them into the
/// disease seed set, normal training set and held-out test set.
pub fn prepare_real_data(cfg: &ExperimentConfig) -> Result<RealData> {
    let per_label = cfg.initial_real_count.max(cfg.normal_count) + cfg.test_per_label;
    let phantoms = make_dataset(&DatasetSpec {
        n_per_label: per_label,
        side: cfg.raw_side,
        annotate_frac: cfg.annotate_frac,
        noise_sigma: cfg.noise_sigma,
        seed: derive_seed(cfg.seed, "data"),
    })?;
    let (disease_raw, normal_raw) = phantoms.split_at(per_label);
    fn pick(set: &[Phantom], train: usize, test: usize) -> Vec<&Phantom> {
        set[..train].iter().chain(&set[set.len() - test..]).collect()
    }
    let mut input_hashes = Vec::new();
    let mut raw = Vec::new();
    for (tag, set, train) in [
        ("disease", disease_raw, cfg.initial_real_count),
        ("normal", normal_raw, cfg.normal_count),
    ] {
        for (i, p) in pick(set, train, cfg.test_per_label).into_iter().enumerate() {
            let name = if i < train {
                format!("{tag}/train_{i:05}")
            } else {
                format!("{tag}/test_{:05}", i - train)
            };
            input_hashes.push(InputHash {
                name,
                sha256: blob_hash(&encode_pnm(&p.image)),
            });
            raw.push(p.image.clone());
        }
    }
    let mut prepared = preprocess_dataset(&raw, &cfg.preprocess())?.into_iter();
    let mut take = |n: usize| prepared.by_ref().take(n).collect::<Vec<_>>();
    let disease = take(cfg.initial_real_count);
    let disease_test = take(cfg.test_per_label);
    let normal = take(cfg.normal_count);
    let normal_test = take(cfg.test_per_label);
    let test = disease_test
        .into_iter()
        .map(|i| (i, Label::Cardiomegaly))
        .chain(normal_test.into_iter().map(|i| (i, Label::Normal)))
        .collect();
    Ok(RealData {
        disease,
        normal,
        test,
        input_hashes,
    })
}

/// SHA-256 of a network's parameters as little-endian bytes.
pub fn params_hash<N: Network>(net: &N) -> String {
    let mut h = Sha256::new();
    for v in net.flatten() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything one experiment produced, in memory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub real: RealData,
    pub vae: Arc<VaeParams>,
    pub vae_sha256: String,
    pub cycles: Vec<CycleReport>,
    /// Best-FID checkpoint of each cycle.
    pub checkpoints: Vec<Checkpoint>,
    /// Query outcome of each augmenting cycle.
    pub queries: Vec<QueryResult>,
    /// Generated images kept by each augmenting cycle, in selection order.
    pub selected_images: Vec<Vec<Image>>,
    /// Final GAN training set; session `s` uses its first
    /// `initial_real_count + s · keep_count` images.
    pub augmented: Vec<Image>,
    pub sessions: Vec<SessionResult>,
}

impl Experiment {
    /// Disease training images seen by session `s`.
    pub fn session_disease(&self, s: usize) -> &[Image] {
        &self.augmented[..self.config.initial_real_count + s * self.config.keep_count()]
    }
}

/// Runs the whole loop: data, frozen VAE, GAN cycles with query-filtered
/// augmentation, then one classification session per cycle boundary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let real = prepare_real_data(cfg)?;

    let (vae, _) = vae_train(&cfg.vae(derive_seed(cfg.seed, "vae")), &real.disease)?;
    let vae = Arc::new(vae);
    let vae_sha256 = params_hash(vae.as_ref());
    let extractor = match cfg.feature_mode {
        FeatureMode::Pixel => FeatureExtractor::Pixel {
            side: cfg.feature_side,
        },
        FeatureMode::VaeLatent => FeatureExtractor::VaeLatent(vae.clone()),
    };
    let evaluator = FidEvaluator::new(extractor, &real.disease)?;
    let real_latents = embed_all(&vae, &real.disease)?;

    let n_cycles = cfg.n_cycles();
    let mut augmented = real.disease.clone();
    let mut params: Option<GanParams> = None;
    let mut cycles = Vec::with_capacity(n_cycles + 1);
    let mut checkpoints = Vec::with_capacity(n_cycles + 1);
    let mut queries = Vec::with_capacity(n_cycles);
    let mut selected_images = Vec::with_capacity(n_cycles);

    for k in 0..=n_cycles {
        let started = Instant::now();
        let in_cycle = |e: Error| e.in_cycle(k);
        let gan_cfg = cfg.gan(derive_seed(cfg.seed, &format!("gan:{k}")));
        let start = match params.take() {
            Some(p) if !cfg.reinit_per_cycle => p,
            _ => gan_init(&gan_cfg, cfg.side).map_err(in_cycle)?,
        };
        let size = augmented.len();
        let (ck, last) = gan_train_cycle(start, &augmented, &evaluator, &gan_cfg).map_err(in_cycle)?;
        params = Some(last);
        let fids: Vec<f64> = ck.fid_history.iter().map(|h| h.1).collect();
        let (optimal_fid, worst_fid) = fid_bookkeeping(&fids).map_err(in_cycle)?;

        let mut selected = Vec::new();
        if k < n_cycles {
            let gen_seed = derive_seed(cfg.seed, &format!("gen:{k}"));
            let candidates =
                generate(&ck.saved_params, cfg.gen_per_cycle, gen_seed).map_err(in_cycle)?;
            let gen_latents = embed_all(&vae, &candidates).map_err(in_cycle)?;
            let scores =
                score_generated(&real_latents, &gen_latents, cfg.aggregation).map_err(in_cycle)?;
            let q = select_top_fraction(&scores, cfg.keep_fraction).map_err(in_cycle)?;
            let kept: Vec<Image> = q.selected.iter().map(|&i| candidates[i].clone()).collect();
            augmented.extend(kept.iter().cloned());
            selected = q.selected.clone();
            selected_images.push(kept);
            queries.push(q);
        }
        cycles.push(CycleReport {
            cycle: k,
            optimal_fid,
            worst_fid,
            size,
            size_after: augmented.len(),
            saved_epoch: ck.saved_epoch,
            fid_history: ck.fid_history.clone(),
            selected,
            wall_ms: started.elapsed().as_millis(),
        });
        checkpoints.push(ck);
    }

    let keep = cfg.keep_count();
    let specs: Vec<SessionSpec> = (0..=n_cycles)
        .map(|s| SessionSpec {
            index: s,
            disease: augmented[..cfg.initial_real_count + s * keep].to_vec(),
            normal: real.normal.clone(),
        })
        .collect();
    let sessions = run_sessions(&specs, &real.test, &cfg.classifier(cfg.seed))?;

    Ok(Experiment {
        config: cfg.clone(),
        real,
        vae,
        vae_sha256,
        cycles,
        checkpoints,
        queries,
        selected_images,
        augmented,
        sessions,
    })
}
