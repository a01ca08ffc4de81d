//! Random forest with Gini splitting.
//!
//! Each tree grows on a bootstrap sample; at each node a fresh
//! `max_features` feature subset is drawn without replacement and the split
//! minimizing the weighted Gini impurity of the children is taken.
//! Prediction is the fraction of trees voting positive — the vote-count
//! definition, not the more common leaf-frequency average; the two differ
//! and the vote form is what this pipeline reports.
//!
//! Trees train in parallel with per-tree seeds derived from the master
//! seed, so models are bit-identical for a fixed seed at any thread count.
//! Nodes retain weighted sample mass and impurity for Gini importance.

use rand::seq::index::sample as sample_without_replacement;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// ⌊√p⌋, the usual classification default.
    Sqrt,
    /// ⌊p/3⌋.
    Third,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(&self, p: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (p as f64).sqrt().floor() as usize,
            MaxFeatures::Third => p / 3,
            MaxFeatures::All => p,
            MaxFeatures::Count(k) => *k,
        };
        m.clamp(1, p)
    }
}

impl std::fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaxFeatures::Sqrt => write!(f, "sqrt"),
            MaxFeatures::Third => write!(f, "third"),
            MaxFeatures::All => write!(f, "all"),
            MaxFeatures::Count(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    /// Disable to grow each tree on the full sample — a hook for comparing
    /// the split search against an exhaustive oracle.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Sum of sample weights reaching this node.
    pub weight: f64,
    /// Raw sample count (bootstrap duplicates counted).
    pub n_samples: usize,
    pub impurity: f64,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "node")]
pub enum NodeKind {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: u8,
        n_pos: usize,
        n_neg: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, row: &[f64]) -> &Node {
        let mut idx = 0;
        loop {
            match &self.nodes[idx].kind {
                NodeKind::Leaf { .. } => return &self.nodes[idx],
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub params: ForestParams,
}

/// Binary Gini impurity from weighted class masses.
fn gini(w_pos: f64, w_neg: f64) -> f64 {
    let w = w_pos + w_neg;
    if w <= 0.0 {
        return 0.0;
    }
    let p = w_pos / w;
    let q = w_neg / w;
    1.0 - p * p - q * q
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    weights: Option<&'a [f64]>,
    params: &'a ForestParams,
    m_features: usize,
    nodes: Vec<Node>,
}

/// Best split for one node: feature, threshold, and the weighted children
/// impurity `w_L·g_L + w_R·g_R` it attains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub children_impurity: f64,
}

/// Scan one feature for the best threshold on `indices`, honoring
/// `min_samples_leaf` on raw counts. Candidate thresholds are midpoints
/// between consecutive distinct values; rows with value ≤ threshold go
/// left. Returns the best weighted-children impurity, breaking exact ties
/// toward the smaller threshold.
fn best_threshold_for_feature(
    x: &Matrix,
    y: &[u8],
    weights: Option<&[f64]>,
    indices: &[usize],
    feature: usize,
    min_samples_leaf: usize,
) -> Option<(f64, f64)> {
    let mut order: Vec<usize> = indices.to_vec();
    order.sort_by(|&a, &b| {
        x.get(a, feature)
            .partial_cmp(&x.get(b, feature))
            .unwrap()
            .then(a.cmp(&b))
    });
    let w_of = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total_pos: f64 = order.iter().filter(|&&i| y[i] == 1).map(|&i| w_of(i)).sum();
    let total_neg: f64 = order.iter().filter(|&&i| y[i] == 0).map(|&i| w_of(i)).sum();

    let mut best: Option<(f64, f64)> = None;
    let mut left_pos = 0.0;
    let mut left_neg = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if y[i] == 1 {
            left_pos += w_of(i);
        } else {
            left_neg += w_of(i);
        }
        if k + 1 == order.len() {
            break;
        }
        let a = x.get(i, feature);
        let b = x.get(order[k + 1], feature);
        if a == b {
            continue;
        }
        let n_left = k + 1;
        let n_right = order.len() - n_left;
        if n_left < min_samples_leaf || n_right < min_samples_leaf {
            continue;
        }
        let threshold = a + (b - a) / 2.0;
        // Guard against midpoints that collapse onto an endpoint.
        if !(a <= threshold && threshold < b) {
            continue;
        }
        let w_l = left_pos + left_neg;
        let w_r = (total_pos - left_pos) + (total_neg - left_neg);
        let children_impurity =
            w_l * gini(left_pos, left_neg) + w_r * gini(total_pos - left_pos, total_neg - left_neg);
        match best {
            Some((best_imp, _)) if best_imp <= children_impurity => {}
            _ => best = Some((children_impurity, threshold)),
        }
    }
    best.map(|(imp, thr)| (thr, imp))
}

/// Exhaustive best split over the given feature set; public so oracle tests
/// can compare an independent search against the grown tree.
pub fn best_split(
    x: &Matrix,
    y: &[u8],
    weights: Option<&[f64]>,
    indices: &[usize],
    features: &[usize],
    min_samples_leaf: usize,
) -> Option<SplitChoice> {
    let mut best: Option<SplitChoice> = None;
    for &feature in features {
        if let Some((threshold, children_impurity)) =
            best_threshold_for_feature(x, y, weights, indices, feature, min_samples_leaf)
        {
            let better = match &best {
                None => true,
                Some(b) => children_impurity < b.children_impurity,
            };
            if better {
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    children_impurity,
                });
            }
        }
    }
    best
}

impl<'a> TreeBuilder<'a> {
    fn build(&mut self, indices: Vec<usize>, rng: &mut ChaCha8Rng) -> usize {
        let w_of = |i: usize| self.weights.map_or(1.0, |w| w[i]);
        let w_pos: f64 = indices.iter().filter(|&&i| self.y[i] == 1).map(|&i| w_of(i)).sum();
        let w_neg: f64 = indices.iter().filter(|&&i| self.y[i] == 0).map(|&i| w_of(i)).sum();
        let impurity = gini(w_pos, w_neg);
        let weight = w_pos + w_neg;
        let n_samples = indices.len();

        let make_leaf = |nodes: &mut Vec<Node>| -> usize {
            let n_pos = indices.iter().filter(|&&i| self.y[i] == 1).count();
            let n_neg = n_samples - n_pos;
            // Weighted majority; exact ties go negative.
            let class = u8::from(w_pos > w_neg);
            nodes.push(Node {
                weight,
                n_samples,
                impurity,
                kind: NodeKind::Leaf { class, n_pos, n_neg },
            });
            nodes.len() - 1
        };

        let pure = w_pos == 0.0 || w_neg == 0.0;
        if pure || n_samples < self.params.min_samples_split {
            return make_leaf(&mut self.nodes);
        }

        // Fresh feature subset per node, ascending for a deterministic scan.
        let p = self.x.n_cols();
        let mut features: Vec<usize> =
            sample_without_replacement(rng, p, self.m_features).into_vec();
        features.sort_unstable();

        let split = best_split(
            self.x,
            self.y,
            self.weights,
            &indices,
            &features,
            self.params.min_samples_leaf,
        );
        let split = match split {
            // Accept only strict impurity improvements.
            Some(s) if s.children_impurity < weight * impurity => s,
            _ => return make_leaf(&mut self.nodes),
        };

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.x.get(i, split.feature) <= split.threshold);

        let node_idx = self.nodes.len();
        self.nodes.push(Node {
            weight,
            n_samples,
            impurity,
            kind: NodeKind::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: 0,
                right: 0,
            },
        });
        let left = self.build(left_idx, rng);
        let right = self.build(right_idx, rng);
        if let NodeKind::Split {
            left: l, right: r, ..
        } = &mut self.nodes[node_idx].kind
        {
            *l = left;
            *r = right;
        }
        node_idx
    }
}

pub fn fit_random_forest(
    x: &Matrix,
    y: &[u8],
    params: &ForestParams,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<ForestModel> {
    if params.n_trees == 0 {
        return Err(Error::Config("n_trees must be at least 1".into()));
    }
    if params.min_samples_split < 2 {
        return Err(Error::Config("min_samples_split must be at least 2".into()));
    }
    if params.min_samples_leaf < 1 {
        return Err(Error::Config("min_samples_leaf must be at least 1".into()));
    }
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(Error::Input("empty training data".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Input("row/label count mismatch".into()));
    }
    if let MaxFeatures::Count(k) = params.max_features {
        if k == 0 || k > x.n_cols() {
            return Err(Error::Config(format!(
                "max_features {k} outside 1..={}",
                x.n_cols()
            )));
        }
    }
    let n = x.n_rows();
    let m_features = params.max_features.resolve(x.n_cols());

    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("rf.tree.{t}")));
            let indices: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut builder = TreeBuilder {
                x,
                y,
                weights,
                params,
                m_features,
                nodes: Vec::new(),
            };
            builder.build(indices, &mut rng);
            Tree {
                nodes: builder.nodes,
            }
        })
        .collect();

    Ok(ForestModel {
        trees,
        n_features: x.n_cols(),
        params: *params,
    })
}

/// Vote fraction: each tree votes its leaf's majority class; the
/// probability is positive votes over total trees.
pub fn predict_proba_forest(model: &ForestModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.n_cols() != model.n_features {
        return Err(Error::Input(format!(
            "model has {} features, input has {}",
            model.n_features,
            x.n_cols()
        )));
    }
    let n_trees = model.trees.len() as f64;
    Ok((0..x.n_rows())
        .map(|i| {
            let row = x.row(i);
            let votes = model
                .trees
                .iter()
                .filter(|t| matches!(t.leaf_for(row).kind, NodeKind::Leaf { class: 1, .. }))
                .count();
            votes as f64 / n_trees
        })
        .collect())
}
