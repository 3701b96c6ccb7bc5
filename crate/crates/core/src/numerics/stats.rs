use super::matrix::{Matrix, Vector};
use crate::error::{Error, Result};

/// Mean and covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vector,
    pub cov: Matrix,
}

/// Sample mean and unbiased (n − 1) covariance. The covariance is built on
/// the upper triangle and mirrored, so it is exactly symmetric.
pub fn estimate_gaussian_stats(features: &[Vector]) -> Result<GaussianStats> {
    if features.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 feature vectors, got {}",
            features.len()
        )));
    }
    let d = features[0].dim();
    if let Some(bad) = features.iter().find(|f| f.dim() != d) {
        return Err(Error::Shape(format!(
            "feature dims differ: {d} vs {}",
            bad.dim()
        )));
    }
    let n = features.len() as f64;
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, &x) in mean.iter_mut().zip(f.iter()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }

    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for f in features {
        for ((c, &x), &m) in centered.iter_mut().zip(f.iter()).zip(&mean) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            let row = cov.row_mut(i);
            for j in i..d {
                row[j] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / (n - 1.0);
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    Ok(GaussianStats {
        mean: mean.into(),
        cov,
    })
}
