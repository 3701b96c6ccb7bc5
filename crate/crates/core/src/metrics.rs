//! Fréchet distance between Gaussian feature fits, latent cosine distance,
//! and confusion-matrix scores.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{resize_bilinear, Image};
use crate::numerics::{
    estimate_gaussian_stats, mat_mul, psd_sqrt, sym_eig, GaussianStats, Matrix, Vector, PSD_TOL,
};
use crate::vae::{embed_all, VaeParams};

/// Jitter added to a covariance diagonal when its square root fails the PSD check.
pub const FID_JITTER: f64 = 1e-10;
/// Negative FID values down to this are treated as round-off and clamped.
pub const FID_ROUNDOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    Pixel,
    VaeLatent,
}

/// Fixed mapping from images to FID feature vectors.
#[derive(Debug, Clone)]
pub enum FeatureExtractor {
    /// Bilinear downsample to `side × side`, then flatten.
    Pixel { side: usize },
    /// Encoder means of a frozen VAE.
    VaeLatent(Arc<VaeParams>),
}

impl FeatureExtractor {
    pub fn dim(&self) -> usize {
        match self {
            FeatureExtractor::Pixel { side } => side * side,
            FeatureExtractor::VaeLatent(p) => p.d_z(),
        }
    }
}

/// Order-preserving feature extraction.
pub fn extract_features(fx: &FeatureExtractor, imgs: &[Image]) -> Result<Vec<Vector>> {
    if let Some(first) = imgs.first() {
        if let Some(bad) = imgs.iter().find(|i| !i.same_shape(first)) {
            return Err(Error::Shape(format!(
                "feature batch mixes {}x{}x{} and {}x{}x{}",
                first.width(),
                first.height(),
                first.channels(),
                bad.width(),
                bad.height(),
                bad.channels()
            )));
        }
    }
    match fx {
        FeatureExtractor::Pixel { side } => imgs
            .par_iter()
            .map(|img| {
                let small = resize_bilinear(&img.to_grayscale(), *side, *side)?;
                Ok(Vector::from(small.into_pixels()))
            })
            .collect(),
        FeatureExtractor::VaeLatent(p) => embed_all(p, imgs),
    }
}

/// Real-side statistics with the covariance square root cached, so repeated
/// distances against the same reference skip one eigendecomposition.
#[derive(Debug, Clone)]
pub struct FidReference {
    stats: GaussianStats,
    cov_sqrt: Matrix,
}

impl FidReference {
    pub fn new(stats: GaussianStats) -> Result<Self> {
        let cov_sqrt = sqrt_with_jitter(&stats.cov)?;
        Ok(Self { stats, cov_sqrt })
    }

    pub fn from_features(features: &[Vector]) -> Result<Self> {
        Self::new(estimate_gaussian_stats(features)?)
    }

    pub fn stats(&self) -> &GaussianStats {
        &self.stats
    }

    /// `‖μ_T − μ_G‖² + Tr(Σ_T + Σ_G − 2 (Σ_T^½ Σ_G Σ_T^½)^½)`
    pub fn fid_to(&self, g: &GaussianStats) -> Result<f64> {
        let t = &self.stats;
        if t.mean.dim() != g.mean.dim() || g.cov.rows() != t.cov.rows() {
            return Err(Error::Shape(format!(
                "FID between {}-d and {}-d statistics",
                t.mean.dim(),
                g.mean.dim()
            )));
        }
        let mean_term: f64 = t
            .mean
            .iter()
            .zip(g.mean.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let inner = mat_mul(&mat_mul(&self.cov_sqrt, &g.cov)?, &self.cov_sqrt)?;
        let cross = trace_sqrt(&symmetrize(&inner))?;
        let value = mean_term + t.cov.trace() + g.cov.trace() - 2.0 * cross;
        if value < -FID_ROUNDOFF {
            return Err(Error::NotPsd(value));
        }
        Ok(value.max(0.0))
    }
}

/// A feature extractor paired with the reference fit of a fixed real set.
#[derive(Debug, Clone)]
pub struct FidEvaluator {
    extractor: FeatureExtractor,
    reference: FidReference,
    reference_len: usize,
}

impl FidEvaluator {
    pub fn new(extractor: FeatureExtractor, real: &[Image]) -> Result<Self> {
        let feats = extract_features(&extractor, real)?;
        Ok(Self {
            reference: FidReference::from_features(&feats)?,
            reference_len: real.len(),
            extractor,
        })
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn reference(&self) -> &FidReference {
        &self.reference
    }

    /// Number of real images behind the reference fit.
    pub fn reference_len(&self) -> usize {
        self.reference_len
    }

    pub fn fid(&self, imgs: &[Image]) -> Result<f64> {
        let feats = extract_features(&self.extractor, imgs)?;
        self.reference.fid_to(&estimate_gaussian_stats(&feats)?)
    }
}

/// Fréchet distance between two Gaussian fits.
pub fn fid(t: &GaussianStats, g: &GaussianStats) -> Result<f64> {
    FidReference::new(t.clone())?.fid_to(g)
}

fn symmetrize(m: &Matrix) -> Matrix {
    let n = m.rows();
    let mut out = m.clone();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

fn with_jitter(m: &Matrix) -> Matrix {
    let mut j = m.clone();
    for i in 0..j.rows() {
        j.set(i, i, j.get(i, i) + FID_JITTER);
    }
    j
}

fn sqrt_with_jitter(m: &Matrix) -> Result<Matrix> {
    match psd_sqrt(m) {
        Err(Error::NotPsd(_)) => psd_sqrt(&with_jitter(m)),
        other => other,
    }
}

const NULL_EIGEN_REL: f64 = 1e-12;

/// `Σ sqrt(λ_i)` over the eigenvalues of a symmetric PSD matrix.
fn trace_sqrt(m: &Matrix) -> Result<f64> {
    let attempt = |m: &Matrix| -> Result<f64> {
        let eig = sym_eig(m)?;
        let largest = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let floor = -PSD_TOL * largest.max(1.0);
        let mut s = 0.0;
        for &l in eig.values.iter() {
            if l < floor {
                return Err(Error::NotPsd(l));
            }
            // eigenvalues at round-off level carry no signal, but their square
            // roots would (≈1e-8 each for a rank-deficient covariance)
            if l > NULL_EIGEN_REL * largest {
                s += l.sqrt();
            }
        }
        Ok(s)
    };
    match attempt(m) {
        Err(Error::NotPsd(_)) => attempt(&with_jitter(m)),
        other => other,
    }
}

/// `1 − t·g / (‖t‖ ‖g‖)`, in `[0, 2]`.
pub fn cosine_distance(t: &[f64], g: &[f64]) -> Result<f64> {
    if t.len() != g.len() {
        return Err(Error::Shape(format!(
            "cosine between {}-d and {}-d vectors",
            t.len(),
            g.len()
        )));
    }
    let nt = crate::numerics::dot(t, t).sqrt();
    let ng = crate::numerics::dot(g, g).sqrt();
    if nt <= 1e-12 || ng <= 1e-12 {
        return Err(Error::InvalidInput("cosine of a zero-norm vector".into()));
    }
    let c = crate::numerics::dot(t, g) / (nt * ng);
    Ok((1.0 - c).clamp(0.0, 2.0))
}

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Counts predictions against truth. Every label must be `positive` or `negative`.
pub fn confusion<T: PartialEq + std::fmt::Debug>(
    preds: &[T],
    truth: &[T],
    positive: &T,
    negative: &T,
) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in preds.iter().zip(truth) {
        for l in [p, t] {
            if l != positive && l != negative {
                return Err(Error::InvalidInput(format!("label {l:?} outside the label set")));
            }
        }
        match (p == positive, t == positive) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Accuracy, precision, recall and F1. A zero denominator yields 0 and sets
/// the matching `*_undefined` flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub precision_undefined: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recall_undefined: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub f1_undefined: bool,
}

pub fn scores(cm: &ConfusionMatrix) -> Result<Scores> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidInput("scores of an empty confusion matrix".into()));
    }
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            (0.0, true)
        } else {
            (num as f64 / den as f64, false)
        }
    };
    let (accuracy, _) = ratio(cm.tp + cm.tn, total);
    let (precision, precision_undefined) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, recall_undefined) = ratio(cm.tp, cm.tp + cm.fn_);
    // 2PR / (P + R) in count form: 2TP / (2TP + FP + FN)
    let (f1, f1_undefined) = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_);
    Ok(Scores {
        accuracy,
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn stats(mean: &[f64], cov: Matrix) -> GaussianStats {
        GaussianStats {
            mean: mean.to_vec().into(),
            cov,
        }
    }

    fn random_stats(rng: &mut Rng, d: usize) -> GaussianStats {
        let b = Matrix::from_vec(d, d, (0..d * d).map(|_| rng.gauss()).collect()).unwrap();
        let cov = mat_mul(&b, &b.transpose()).unwrap();
        stats(&(0..d).map(|_| rng.gauss()).collect::<Vec<_>>(), cov)
    }

    #[test]
    fn identical_stats_give_zero() {
        let mut rng = Rng::new(1);
        let t = random_stats(&mut rng, 6);
        assert!(fid(&t, &t).unwrap() <= 1e-10);
    }

    #[test]
    fn analytic_cases() {
        let i2 = Matrix::identity(2);
        let a = stats(&[0.0, 0.0], i2.clone());
        let b = stats(&[1.0, 0.0], i2.clone());
        assert!((fid(&a, &b).unwrap() - 1.0).abs() <= 1e-8);
        let c = stats(&[0.0, 0.0], i2.scale(4.0));
        assert!((fid(&a, &c).unwrap() - 2.0).abs() <= 1e-8);
    }

    #[test]
    fn symmetric_and_non_negative() {
        let mut rng = Rng::new(2);
        for _ in 0..10 {
            let a = random_stats(&mut rng, 5);
            let b = random_stats(&mut rng, 5);
            let ab = fid(&a, &b).unwrap();
            let ba = fid(&b, &a).unwrap();
            assert!(ab >= 0.0);
            assert!((ab - ba).abs() <= 1e-8 * ab.max(1.0), "{ab} vs {ba}");
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = stats(&[0.0], Matrix::identity(1));
        let b = stats(&[0.0, 0.0], Matrix::identity(2));
        assert!(matches!(fid(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn rank_deficient_covariances_are_accepted() {
        let mut rng = Rng::new(4);
        let feats: Vec<Vector> = (0..5)
            .map(|_| (0..12).map(|_| rng.gauss()).collect::<Vec<_>>().into())
            .collect();
        let a = estimate_gaussian_stats(&feats).unwrap();
        let v = fid(&a, &a).unwrap();
        assert!(v < 1e-5, "{v}");
    }

    #[test]
    fn sample_estimate_converges_to_truth() {
        // x = μ + L z with a fixed lower-triangular L
        let l = Matrix::from_rows(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.5, 0.8, 0.0, 0.0],
            &[-0.3, 0.2, 0.6, 0.0],
            &[0.1, -0.4, 0.3, 0.9],
        ])
        .unwrap();
        let mu = [1.0, -2.0, 0.5, 0.0];
        let truth = stats(&mu, mat_mul(&l, &l.transpose()).unwrap());
        let mut rng = Rng::new(10);
        let feats: Vec<Vector> = (0..10_000)
            .map(|_| {
                let z: Vec<f64> = (0..4).map(|_| rng.gauss()).collect();
                (0..4)
                    .map(|i| mu[i] + (0..4).map(|k| l.get(i, k) * z[k]).sum::<f64>())
                    .collect::<Vec<_>>()
                    .into()
            })
            .collect();
        let est = estimate_gaussian_stats(&feats).unwrap();
        assert!(fid(&est, &truth).unwrap() <= 0.1);
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine_distance(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() <= 1e-12);
        let expect = 1.0 - 1.0 / 2f64.sqrt();
        assert!((cosine_distance(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - expect).abs() <= 1e-12);
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_distance(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn confusion_cases() {
        let (p, n) = ('P', 'N');
        let all = confusion(&[p, n, p], &[p, n, p], &p, &n).unwrap();
        assert_eq!((all.fp, all.fn_), (0, 0));
        let cm = confusion(&[p, p, n, n], &[p, n, p, n], &p, &n).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, fp: 1, fn_: 1, tn: 1 });
        let empty = confusion::<char>(&[], &[], &p, &n).unwrap();
        assert_eq!(empty.total(), 0);
        assert!(scores(&empty).is_err());
        assert!(confusion(&[p], &[p, n], &p, &n).is_err());
        assert!(confusion(&[p, 'X'], &[p, n], &p, &n).is_err());
    }

    #[test]
    fn score_cases() {
        let s = scores(&ConfusionMatrix { tp: 1, fp: 1, fn_: 1, tn: 1 }).unwrap();
        assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (0.5, 0.5, 0.5, 0.5));
        let s = scores(&ConfusionMatrix { tp: 2, fp: 1, fn_: 0, tn: 1 }).unwrap();
        assert_eq!(s.precision, 2.0 / 3.0);
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.f1, 0.8);
        assert_eq!(s.accuracy, 0.75);
        let s = scores(&ConfusionMatrix { tp: 0, fp: 0, fn_: 3, tn: 1 }).unwrap();
        assert_eq!(s.precision, 0.0);
        assert!(s.precision_undefined && !s.recall_undefined);
    }

    #[test]
    fn pixel_features() {
        let fx = FeatureExtractor::Pixel { side: 16 };
        let imgs = vec![Image::filled(32, 32, 1, 0.4), Image::filled(32, 32, 1, 0.9)];
        let f = extract_features(&fx, &imgs).unwrap();
        assert_eq!(f[0].dim(), 256);
        assert!(f[0].iter().all(|&v| v == 0.4));
        assert!(f[1].iter().all(|&v| v == 0.9));
        let mixed = vec![Image::filled(32, 32, 1, 0.4), Image::filled(16, 16, 1, 0.4)];
        assert!(extract_features(&fx, &mixed).is_err());
    }

    #[test]
    fn evaluator_scores_the_reference_itself_as_zero() {
        let mut rng = Rng::new(8);
        let imgs: Vec<Image> = (0..20)
            .map(|_| {
                let px = (0..16).map(|_| rng.next_f64()).collect();
                Image::new(4, 4, 1, px).unwrap()
            })
            .collect();
        let ev = FidEvaluator::new(FeatureExtractor::Pixel { side: 4 }, &imgs).unwrap();
        assert_eq!(ev.reference_len(), 20);
        assert!(ev.fid(&imgs).unwrap() < 1e-10);
        assert!(ev.fid(&imgs[..10]).unwrap() > 0.0);
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(
            v in proptest::collection::vec(-5.0f64..5.0, 6),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            prop_assert!(cosine_distance(&v, &scaled).unwrap() <= 1e-12);
        }

        #[test]
        fn scores_match_direct_counts(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
            let preds: Vec<bool> = pairs.iter().map(|p| p.0).collect();
            let truth: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let cm = confusion(&preds, &truth, &true, &false).unwrap();
            let s = scores(&cm).unwrap();
            let tp = pairs.iter().filter(|p| p.0 && p.1).count() as u64;
            let fp = pairs.iter().filter(|p| p.0 && !p.1).count() as u64;
            let fnn = pairs.iter().filter(|p| !p.0 && p.1).count() as u64;
            let tn = pairs.len() as u64 - tp - fp - fnn;
            prop_assert_eq!(cm, ConfusionMatrix { tp, fp, fn_: fnn, tn });
            // rational identities, cross-multiplied in integers
            let acc_num = (s.accuracy * pairs.len() as f64).round() as u64;
            prop_assert_eq!(acc_num, tp + tn);
            prop_assert_eq!(s.accuracy, (tp + tn) as f64 / pairs.len() as f64);
            if tp + fp > 0 {
                prop_assert_eq!(s.precision, tp as f64 / (tp + fp) as f64);
            }
            if tp + fnn > 0 {
                prop_assert_eq!(s.recall, tp as f64 / (tp + fnn) as f64);
            }
            if s.precision + s.recall > 0.0 {
                let harmonic = 2.0 * s.precision * s.recall / (s.precision + s.recall);
                prop_assert!((s.f1 - harmonic).abs() <= 1e-15);
            }
        }
    }
}
