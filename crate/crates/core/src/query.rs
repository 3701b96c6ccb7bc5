//! Query phase: score generated samples by latent cosine similarity to the
//! real set and keep the top fraction.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::cosine_distance;
use crate::numerics::Vector;

/// How per-pair similarities to the real set are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    /// Similarity per generated sample, in input order.
    pub scores: Vec<f64>,
    /// Selected indices, ascending.
    pub selected: Vec<usize>,
    /// Lowest score among the selected.
    pub threshold_score: f64,
}

/// `score_j = agg_i (1 − cosine_distance(real_i, gen_j))`.
pub fn score_generated(
    real: &[Vector],
    generated: &[Vector],
    aggregation: Aggregation,
) -> Result<Vec<f64>> {
    if real.is_empty() || generated.is_empty() {
        return Err(Error::InvalidInput("query needs real and generated latents".into()));
    }
    let d = real[0].dim();
    if let Some(bad) = real.iter().chain(generated).find(|v| v.dim() != d) {
        return Err(Error::Shape(format!("latent dims {d} and {}", bad.dim())));
    }
    generated
        .par_iter()
        .map(|g| {
            let mut acc = match aggregation {
                Aggregation::Mean => 0.0,
                Aggregation::Max => f64::NEG_INFINITY,
            };
            for r in real {
                let sim = 1.0 - cosine_distance(r, g)?;
                match aggregation {
                    Aggregation::Mean => acc += sim,
                    Aggregation::Max => acc = acc.max(sim),
                }
            }
            Ok(match aggregation {
                Aggregation::Mean => acc / real.len() as f64,
                Aggregation::Max => acc,
            })
        })
        .collect()
}

/// Number kept: `max(1, ⌊fraction · n⌋)`.
pub fn keep_count(fraction: f64, n: usize) -> usize {
    // the epsilon absorbs products like 0.29 * 100 = 28.999999999999996
    ((fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n.max(1))
}

/// Keeps the `keep_count(fraction, n)` highest scores, ties going to the
/// lower index.
pub fn select_top_fraction(scores: &[f64], fraction: f64) -> Result<QueryResult> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores to select from".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!("fraction {fraction} outside (0, 1]")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN query score".into()));
    }
    let k = keep_count(fraction, scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut selected = order[..k].to_vec();
    let threshold_score = selected
        .iter()
        .map(|&i| scores[i])
        .fold(f64::INFINITY, f64::min);
    selected.sort_unstable();
    Ok(QueryResult {
        scores: scores.to_vec(),
        selected,
        threshold_score,
    })
}

#[derive(Serialize)]
struct QueryRow {
    index: usize,
    score: f64,
    selected: bool,
}

/// `index,score,selected` per generated sample.
pub fn write_query_csv(path: &Path, result: &QueryResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut sel = result.selected.iter().peekable();
    for (index, &score) in result.scores.iter().enumerate() {
        let selected = sel.peek() == Some(&&index);
        if selected {
            sel.next();
        }
        w.serialize(QueryRow {
            index,
            score,
            selected,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        x.to_vec().into()
    }

    #[test]
    fn identical_latents_score_one() {
        let real = vec![v(&[1.0, 2.0]); 3];
        let s = score_generated(&real, &[v(&[2.0, 4.0])], Aggregation::Mean).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_latents_score_zero() {
        let real = vec![v(&[1.0, 0.0]), v(&[3.0, 0.0])];
        let s = score_generated(&real, &[v(&[0.0, 2.0])], Aggregation::Mean).unwrap();
        assert!(s[0].abs() < 1e-15);
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = Rng::new(12);
        let mut rand_vec = |d| v(&(0..d).map(|_| rng.gauss()).collect::<Vec<_>>());
        let real: Vec<Vector> = (0..3).map(|_| rand_vec(5)).collect();
        let gen: Vec<Vector> = (0..2).map(|_| rand_vec(5)).collect();
        let s = score_generated(&real, &gen, Aggregation::Mean).unwrap();
        for (j, g) in gen.iter().enumerate() {
            let mut total = 0.0;
            for r in &real {
                let dotp: f64 = r.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
                let nr: f64 = r.iter().map(|a| a * a).sum::<f64>().sqrt();
                let ng: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
                total += dotp / (nr * ng);
            }
            assert!((s[j] - total / 3.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn max_aggregation() {
        let real = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let s = score_generated(&real, &[v(&[1.0, 0.0])], Aggregation::Max).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_latent_is_an_error() {
        let real = vec![v(&[1.0, 0.0])];
        assert!(score_generated(&real, &[v(&[0.0, 0.0])], Aggregation::Mean).is_err());
        assert!(score_generated(&[], &real, Aggregation::Mean).is_err());
    }

    #[test]
    fn top_ten_percent_of_a_thousand() {
        let mut rng = Rng::new(1);
        let scores: Vec<f64> = (0..1000).map(|_| rng.next_f64()).collect();
        let q = select_top_fraction(&scores, 0.10).unwrap();
        assert_eq!(q.selected.len(), 100);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let q = select_top_fraction(&[0.5; 10], 0.2).unwrap();
        assert_eq!(q.selected, vec![0, 1]);
    }

    #[test]
    fn full_fraction_keeps_everything() {
        let q = select_top_fraction(&[0.3, 0.1, 0.2], 1.0).unwrap();
        assert_eq!(q.selected, vec![0, 1, 2]);
        assert_eq!(q.threshold_score, 0.1);
    }

    #[test]
    fn keeps_at_least_one() {
        assert_eq!(select_top_fraction(&[0.3, 0.9], 0.1).unwrap().selected, vec![1]);
        assert_eq!(keep_count(0.29, 100), 29);
    }

    #[test]
    fn bad_selection_input() {
        assert!(select_top_fraction(&[], 0.1).is_err());
        assert!(select_top_fraction(&[0.1], 0.0).is_err());
        assert!(select_top_fraction(&[0.1], 1.5).is_err());
        assert!(select_top_fraction(&[f64::NAN], 0.5).is_err());
    }

    #[test]
    fn csv_dump() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let q = select_top_fraction(&[0.3, 0.9, 0.5], 0.5).unwrap();
        write_query_csv(&path, &q).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "index,score,selected\n0,0.3,false\n1,0.9,true\n2,0.5,false\n");
    }

    proptest! {
        #[test]
        fn threshold_invariant(scores in proptest::collection::vec(0.0f64..1.0, 1..200), frac in 0.01f64..=1.0) {
            let q = select_top_fraction(&scores, frac).unwrap();
            prop_assert_eq!(q.selected.len(), keep_count(frac, scores.len()));
            let sel: std::collections::HashSet<_> = q.selected.iter().copied().collect();
            for (i, &s) in scores.iter().enumerate() {
                if !sel.contains(&i) {
                    prop_assert!(s <= q.threshold_score);
                    if s == q.threshold_score {
                        // ties resolved toward lower indices
                        prop_assert!(q.selected.iter().all(|&j| scores[j] > s || j < i));
                    }
                }
            }
        }

        #[test]
        fn real_permutation_and_scaling_do_not_matter(seed in any::<u64>(), c in 0.1f64..10.0) {
            let mut rng = Rng::new(seed);
            let mut rand_vec = || v(&(0..4).map(|_| rng.gauss()).collect::<Vec<_>>());
            let real: Vec<Vector> = (0..5).map(|_| rand_vec()).collect();
            let gen: Vec<Vector> = (0..4).map(|_| rand_vec()).collect();
            let base = score_generated(&real, &gen, Aggregation::Mean).unwrap();
            let mut perm = real.clone();
            perm.reverse();
            perm[0] = v(&perm[0].iter().map(|x| x * c).collect::<Vec<_>>());
            let other = score_generated(&perm, &gen, Aggregation::Mean).unwrap();
            for (a, b) in base.iter().zip(&other) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
