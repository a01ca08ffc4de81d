//! Class-imbalance strategies for training folds.
//!
//! Random undersampling of the negative class, random oversampling of the
//! positive class, SMOTE interpolation, and balanced class weights. All are
//! pure seed-deterministic transformations, safe to call concurrently on
//! disjoint folds. They apply to training data only: the output type
//! carries features and labels but none of the row metadata an evaluation
//! split is built from, so resampled rows cannot flow back into a test set.

use rand::seq::index::sample as sample_without_replacement;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    Undersample,
    Oversample,
    Smote,
    BalancedWeight,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::None => "none",
            Strategy::Undersample => "undersample",
            Strategy::Oversample => "oversample",
            Strategy::Smote => "smote",
            Strategy::BalancedWeight => "balanced_weight",
        };
        write!(f, "{s}")
    }
}

/// Which strategy to run and its knobs. `k_neighbors` matters only for
/// SMOTE (canonical default 5); the seed fully determines the output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub strategy: Strategy,
    pub k_neighbors: usize,
    pub seed: u64,
}

impl ResampleSpec {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        ResampleSpec {
            strategy,
            k_neighbors: 5,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        ResampleSpec { seed, ..self }
    }
}

/// A resampled training set. `weights` is set only by the balanced-weight
/// strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub x: Matrix,
    pub y: Vec<u8>,
    pub weights: Option<Vec<f64>>,
}

/// Parent bookkeeping for one SMOTE synthetic row: interpolation endpoints
/// (row indices into the original matrix) and the mixing coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoteParent {
    pub parent: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

fn class_indices(y: &[u8]) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &v) in y.iter().enumerate() {
        if v == 1 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (pos, neg)
}

fn require_both_classes(pos: &[usize], neg: &[usize]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Config(
            "resampling requires both classes nonempty".into(),
        ));
    }
    Ok(())
}

/// Keep every positive; sample negatives uniformly without replacement down
/// to the positive count. Output rows stay in original order.
pub fn undersample(x: &Matrix, y: &[u8], seed: u64) -> Result<Resampled> {
    let (pos, neg) = class_indices(y);
    require_both_classes(&pos, &neg)?;
    if pos.len() > neg.len() {
        return Err(Error::Config(format!(
            "undersampling inapplicable: {} positives outnumber {} negatives",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = sample_without_replacement(&mut rng, neg.len(), pos.len())
        .iter()
        .map(|i| neg[i])
        .collect();
    keep.extend(&pos);
    keep.sort_unstable();
    Ok(Resampled {
        x: x.select_rows(&keep),
        y: keep.iter().map(|&i| y[i]).collect(),
        weights: None,
    })
}

/// Keep every original row; append copies of positives, drawn with
/// replacement, until the classes balance. Every appended row is bit-equal
/// to one of the original positives. A positive-majority input is returned
/// unchanged.
pub fn oversample(x: &Matrix, y: &[u8], seed: u64) -> Result<Resampled> {
    let (pos, neg) = class_indices(y);
    require_both_classes(&pos, &neg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out_x = x.clone();
    let mut out_y = y.to_vec();
    let n_new = neg.len().saturating_sub(pos.len());
    for _ in 0..n_new {
        let src = pos[rng.gen_range(0..pos.len())];
        out_x.push_row(x.row(src));
    }
    out_y.extend(std::iter::repeat_n(1, n_new));
    Ok(Resampled {
        x: out_x,
        y: out_y,
        weights: None,
    })
}

/// SMOTE with parent bookkeeping: each synthetic positive is
/// `x_i + λ·(x_nn − x_i)` for a uniformly chosen positive `x_i`, one of its
/// `k` nearest positive neighbors `x_nn` (Euclidean, exact search), and
/// `λ` uniform on [0, 1). Requires at least `k + 1` positives.
pub fn smote_with_parents(
    x: &Matrix,
    y: &[u8],
    k: usize,
    seed: u64,
) -> Result<(Resampled, Vec<SmoteParent>)> {
    let (pos, neg) = class_indices(y);
    require_both_classes(&pos, &neg)?;
    if k == 0 {
        return Err(Error::Config("SMOTE requires k_neighbors >= 1".into()));
    }
    if pos.len() < k + 1 {
        return Err(Error::Config(format!(
            "SMOTE with k = {k} requires at least {} positives, got {}",
            k + 1,
            pos.len()
        )));
    }

    // Exact k-NN among positives; the positive class is small by the nature
    // of this data. Distance ties break on row index.
    let neighbors: Vec<Vec<usize>> = pos
        .iter()
        .map(|&i| {
            let mut dists: Vec<(f64, usize)> = pos
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let d2: f64 = x
                        .row(i)
                        .iter()
                        .zip(x.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d2, j)
                })
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            dists.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out_x = x.clone();
    let mut out_y = y.to_vec();
    let mut parents = Vec::new();
    for _ in 0..neg.len().saturating_sub(pos.len()) {
        let pick = rng.gen_range(0..pos.len());
        let i = pos[pick];
        let nn = neighbors[pick][rng.gen_range(0..neighbors[pick].len())];
        let lambda: f64 = rng.gen_range(0.0..1.0);
        let row: Vec<f64> = x
            .row(i)
            .iter()
            .zip(x.row(nn))
            .map(|(a, b)| a + lambda * (b - a))
            .collect();
        out_x.push_row(&row);
        out_y.push(1);
        parents.push(SmoteParent {
            parent: i,
            neighbor: nn,
            lambda,
        });
    }
    Ok((
        Resampled {
            x: out_x,
            y: out_y,
            weights: None,
        },
        parents,
    ))
}

pub fn smote(x: &Matrix, y: &[u8], k: usize, seed: u64) -> Result<Resampled> {
    smote_with_parents(x, y, k, seed).map(|(r, _)| r)
}

/// Per-sample weights `n_total / (2 · n_class)`: the total weight of each
/// class comes out equal.
pub fn balanced_weights(y: &[u8]) -> Result<Vec<f64>> {
    let (pos, neg) = class_indices(y);
    require_both_classes(&pos, &neg)?;
    let n = y.len() as f64;
    let w_pos = n / (2.0 * pos.len() as f64);
    let w_neg = n / (2.0 * neg.len() as f64);
    Ok(y.iter()
        .map(|&v| if v == 1 { w_pos } else { w_neg })
        .collect())
}

/// Run the configured strategy.
pub fn apply(spec: &ResampleSpec, x: &Matrix, y: &[u8]) -> Result<Resampled> {
    match spec.strategy {
        Strategy::None => Ok(Resampled {
            x: x.clone(),
            y: y.to_vec(),
            weights: None,
        }),
        Strategy::Undersample => undersample(x, y, spec.seed),
        Strategy::Oversample => oversample(x, y, spec.seed),
        Strategy::Smote => smote(x, y, spec.k_neighbors, spec.seed),
        Strategy::BalancedWeight => Ok(Resampled {
            x: x.clone(),
            y: y.to_vec(),
            weights: Some(balanced_weights(y)?),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn counts(y: &[u8]) -> (usize, usize) {
        let pos = y.iter().filter(|&&v| v == 1).count();
        (pos, y.len() - pos)
    }

    fn random_data(n_pos: usize, n_neg: usize, p: usize, seed: u64) -> (Matrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n_pos + n_neg {
            rows.push((0..p).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<f64>>());
            y.push(u8::from(i < n_pos));
        }
        (Matrix::from_vec_rows(&rows), y)
    }

    #[test]
    fn undersample_balanced_input_unchanged_multiset() {
        let (x, y) = random_data(3, 3, 4, 1);
        let out = undersample(&x, &y, 99).unwrap();
        assert_eq!(out.x, x);
        assert_eq!(out.y, y);
    }

    #[test]
    fn undersample_keeps_positives_and_subsets_negatives() {
        let (x, y) = random_data(2, 10, 3, 2);
        let out = undersample(&x, &y, 7).unwrap();
        assert_eq!(counts(&out.y), (2, 2));
        // Every output row equals some original row, positives all present.
        let originals: Vec<&[f64]> = (0..x.n_rows()).map(|i| x.row(i)).collect();
        for i in 0..out.x.n_rows() {
            assert!(originals.contains(&out.x.row(i)));
        }
        for i in 0..2 {
            assert!((0..out.x.n_rows()).any(|j| out.x.row(j) == x.row(i)));
        }
    }

    #[test]
    fn undersample_rejects_positive_majority() {
        let (x, y) = random_data(5, 2, 2, 3);
        assert!(undersample(&x, &y, 0).is_err());
    }

    #[test]
    fn resamplers_are_seed_deterministic() {
        let (x, y) = random_data(4, 40, 5, 4);
        for strategy in [Strategy::Undersample, Strategy::Oversample, Strategy::Smote] {
            let spec = ResampleSpec {
                strategy,
                k_neighbors: 3,
                seed: 1234,
            };
            let a = apply(&spec, &x, &y).unwrap();
            let b = apply(&spec, &x, &y).unwrap();
            assert_eq!(a, b, "{strategy} not deterministic");
            let c = apply(&spec.with_seed(4321), &x, &y).unwrap();
            assert_ne!(a.x, c.x, "{strategy} ignores seed");
        }
    }

    #[test]
    fn oversample_single_positive() {
        let (x, y) = random_data(1, 4, 3, 5);
        let out = oversample(&x, &y, 11).unwrap();
        assert_eq!(counts(&out.y), (4, 4));
        // Three added rows, each bit-equal to the single positive.
        for i in 5..8 {
            assert_eq!(out.x.row(i), x.row(0));
        }
    }

    #[test]
    fn oversample_additions_are_original_positives() {
        let (x, y) = random_data(5, 50, 6, 6);
        let out = oversample(&x, &y, 13).unwrap();
        assert_eq!(counts(&out.y), (50, 50));
        let positives: Vec<&[f64]> = (0..5).map(|i| x.row(i)).collect();
        for i in x.n_rows()..out.x.n_rows() {
            assert!(positives.contains(&out.x.row(i)));
        }
        // Originals retained verbatim at the front.
        for i in 0..x.n_rows() {
            assert_eq!(out.x.row(i), x.row(i));
        }
    }

    #[test]
    fn smote_identical_positives_yield_that_point() {
        let mut rows = vec![vec![2.0, -1.0]; 3];
        rows.extend(vec![vec![0.0, 0.0]; 10]);
        let x = Matrix::from_vec_rows(&rows);
        let mut y = vec![1u8; 3];
        y.extend(vec![0u8; 10]);
        let out = smote(&x, &y, 2, 42).unwrap();
        assert_eq!(counts(&out.y), (10, 10));
        for i in 13..out.x.n_rows() {
            assert_eq!(out.x.row(i), &[2.0, -1.0]);
        }
    }

    #[test]
    fn smote_two_positives_interpolate_on_segment() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![5.0, 5.0],
            vec![5.0, 6.0],
            vec![6.0, 5.0],
            vec![6.0, 6.0],
        ];
        let x = Matrix::from_vec_rows(&rows);
        let y = vec![1, 1, 0, 0, 0, 0];
        let out = smote(&x, &y, 1, 7).unwrap();
        for i in 6..out.x.n_rows() {
            let row = out.x.row(i);
            assert_eq!(row[1], 0.0);
            assert!((0.0..1.0).contains(&row[0]), "x = {}", row[0]);
        }
    }

    #[test]
    fn smote_synthetics_lie_on_parent_segments_and_in_bbox() {
        let (x, y) = random_data(8, 60, 4, 8);
        let (out, parents) = smote_with_parents(&x, &y, 5, 31).unwrap();
        assert_eq!(parents.len(), 52);
        let p = x.n_cols();
        // Minority bounding box.
        let mut lo = vec![f64::INFINITY; p];
        let mut hi = vec![f64::NEG_INFINITY; p];
        for i in 0..8 {
            for (j, &v) in x.row(i).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        for (s, parent) in parents.iter().enumerate() {
            let row = out.x.row(x.n_rows() + s);
            let a = x.row(parent.parent);
            let b = x.row(parent.neighbor);
            for j in 0..p {
                let expect = a[j] + parent.lambda * (b[j] - a[j]);
                assert!((row[j] - expect).abs() < 1e-12);
                assert!(row[j] >= lo[j] - 1e-12 && row[j] <= hi[j] + 1e-12);
            }
        }
    }

    #[test]
    fn smote_requires_enough_positives() {
        let (x, y) = random_data(3, 10, 2, 9);
        let err = smote(&x, &y, 5, 0).unwrap_err();
        assert!(err.to_string().contains("at least 6"), "{err}");
    }

    #[test]
    fn balanced_weight_examples() {
        let y = vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        assert!(balanced_weights(&y).unwrap().iter().all(|&w| w == 1.0));

        let mut y = vec![1u8];
        y.extend(vec![0u8; 9]);
        let w = balanced_weights(&y).unwrap();
        assert_eq!(w[0], 5.0);
        assert!((w[1] - 5.0 / 9.0).abs() < 1e-15);
        let pos_mass: f64 = w.iter().zip(&y).filter(|(_, &v)| v == 1).map(|(w, _)| w).sum();
        let neg_mass: f64 = w.iter().zip(&y).filter(|(_, &v)| v == 0).map(|(w, _)| w).sum();
        assert!((pos_mass - neg_mass).abs() < 1e-12);
    }

    #[test]
    fn all_strategies_balance() {
        let (x, y) = random_data(7, 70, 3, 10);
        for strategy in [Strategy::Undersample, Strategy::Oversample, Strategy::Smote] {
            let spec = ResampleSpec {
                strategy,
                k_neighbors: 5,
                seed: 77,
            };
            let out = apply(&spec, &x, &y).unwrap();
            let (pos, neg) = counts(&out.y);
            assert_eq!(pos, neg, "{strategy}");
        }
    }
}
