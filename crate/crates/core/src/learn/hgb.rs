//! Histogram-based gradient boosting with logistic loss.
//!
//! Features are quantile-binned once (at most `max_bins` bins per feature,
//! duplicate edges collapsed). Each boosting iteration fits a regression
//! tree to the first/second-order derivatives of the logistic loss at the
//! current scores (`g = p − y`, `h = p·(1 − p)`, sample weights multiply
//! both). Split gain is `½·(G_L²/H_L + G_R²/H_R − G²/H)` accumulated from
//! per-bin histograms; leaves take the Newton step `−G/H` with no extra
//! leaf regularization. Trees grow best-first under `max_leaf_nodes` and
//! `max_depth`. The prediction is
//! `σ(base_score + learning_rate·Σ_t leaf_value_t(x))`.
//!
//! Binning convention: a value equal to a bin edge belongs to the upper
//! bin; values above the last edge land in the last bin.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{sigmoid, PROB_CLIP};
use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HgbParams {
    pub n_iterations: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub max_leaf_nodes: usize,
    pub max_bins: usize,
}

impl Default for HgbParams {
    fn default() -> Self {
        HgbParams {
            n_iterations: 100,
            learning_rate: 0.1,
            max_depth: None,
            max_leaf_nodes: 31,
            max_bins: 255,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "node")]
pub enum HgbNode {
    Split {
        feature: usize,
        /// Rows with bin index ≤ this go left.
        bin_threshold: usize,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgbTree {
    pub nodes: Vec<HgbNode>,
}

impl HgbTree {
    pub fn leaf_value(&self, bins: &[usize]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                HgbNode::Leaf { value } => return *value,
                HgbNode::Split {
                    feature,
                    bin_threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if bins[*feature] <= *bin_threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgbModel {
    /// Strictly increasing edges per feature; `edges.len() + 1` bins.
    pub bin_edges: Vec<Vec<f64>>,
    /// Log-odds of the weighted positive rate, clipped to ±36.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<HgbTree>,
    pub params: HgbParams,
}

impl HgbModel {
    /// Bin a raw value with this model's stored edges for one feature.
    pub fn bin_value(&self, feature: usize, value: f64) -> usize {
        bin_index(&self.bin_edges[feature], value)
    }
}

/// Upper-bin convention: the bin index is the number of edges ≤ value.
pub fn bin_index(edges: &[f64], value: f64) -> usize {
    edges.partition_point(|e| *e <= value)
}

/// Quantile bin edges for one feature column: midpoints between the values
/// flanking each quantile cut, deduplicated. Columns with at most
/// `max_bins` distinct values get one bin per distinct value, making the
/// binning lossless there.
pub fn quantile_edges(column: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    let n_distinct = sorted.len();
    let mut edges = Vec::new();
    if n_distinct <= max_bins {
        for pair in sorted.windows(2) {
            edges.push(pair[0] + (pair[1] - pair[0]) / 2.0);
        }
    } else {
        // Rank-based cuts over the full (duplicated) sample.
        let mut full = column.to_vec();
        full.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = full.len();
        for i in 1..max_bins {
            let r = i * n / max_bins;
            if r == 0 || r >= n {
                continue;
            }
            let edge = full[r - 1] + (full[r] - full[r - 1]) / 2.0;
            if edges.last().is_none_or(|&last| edge > last) {
                edges.push(edge);
            }
        }
    }
    edges
}

/// Newton split gain from aggregated derivative sums.
pub fn split_gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64) -> f64 {
    let g = g_left + g_right;
    let h = h_left + h_right;
    0.5 * (g_left * g_left / h_left + g_right * g_right / h_right - g * g / h)
}

struct CandidateSplit {
    gain: f64,
    order: usize,
    node: usize,
    feature: usize,
    bin_threshold: usize,
    depth: usize,
    indices: Vec<u32>,
}

impl PartialEq for CandidateSplit {
    fn eq(&self, other: &Self) -> bool {
        self.gain == other.gain && self.order == other.order
    }
}
impl Eq for CandidateSplit {}
impl PartialOrd for CandidateSplit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for CandidateSplit {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on gain; ties pop in insertion order.
        self.gain
            .total_cmp(&other.gain)
            .then(other.order.cmp(&self.order))
    }
}

/// Best (feature, bin threshold) for the samples in `indices`, from
/// per-bin histograms of (g, h). Requires positive Hessian mass and at
/// least one sample on each side; only strictly positive gains qualify.
fn best_histogram_split(
    binned: &[Vec<usize>],
    n_bins: &[usize],
    g: &[f64],
    h: &[f64],
    indices: &[u32],
) -> Option<(usize, usize, f64)> {
    let p = n_bins.len();
    let mut best: Option<(usize, usize, f64)> = None;
    for feature in 0..p {
        let bins = n_bins[feature];
        if bins < 2 {
            continue;
        }
        let mut hist_g = vec![0.0; bins];
        let mut hist_h = vec![0.0; bins];
        let mut hist_n = vec![0usize; bins];
        for &i in indices {
            let b = binned[feature][i as usize];
            hist_g[b] += g[i as usize];
            hist_h[b] += h[i as usize];
            hist_n[b] += 1;
        }
        let total_g: f64 = hist_g.iter().sum();
        let total_h: f64 = hist_h.iter().sum();
        let total_n: usize = hist_n.iter().sum();

        let mut left_g = 0.0;
        let mut left_h = 0.0;
        let mut left_n = 0usize;
        for t in 0..bins - 1 {
            left_g += hist_g[t];
            left_h += hist_h[t];
            left_n += hist_n[t];
            if left_n == 0 || left_n == total_n {
                continue;
            }
            let right_h = total_h - left_h;
            if left_h <= 0.0 || right_h <= 0.0 {
                continue;
            }
            let gain = split_gain(left_g, left_h, total_g - left_g, right_h);
            if gain > 0.0 {
                let better = match best {
                    None => true,
                    Some((_, _, bg)) => gain > bg,
                };
                if better {
                    best = Some((feature, t, gain));
                }
            }
        }
    }
    best
}

/// Weighted logistic loss at the given scores, with probability clipping.
fn logistic_loss(scores: &[f64], y: &[u8], weights: Option<&[f64]>) -> f64 {
    scores
        .iter()
        .zip(y)
        .enumerate()
        .map(|(i, (&s, &label))| {
            let w = weights.map_or(1.0, |w| w[i]);
            let p = sigmoid(s).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            -w * if label == 1 { p.ln() } else { (1.0 - p).ln() }
        })
        .sum()
}

fn validate(params: &HgbParams) -> Result<()> {
    if params.max_bins < 2 {
        return Err(Error::Config("max_bins must be at least 2".into()));
    }
    if params.max_leaf_nodes < 2 {
        return Err(Error::Config("max_leaf_nodes must be at least 2".into()));
    }
    if params.learning_rate.is_nan() || params.learning_rate <= 0.0 {
        return Err(Error::Config("learning_rate must be positive".into()));
    }
    if params.max_depth == Some(0) {
        return Err(Error::Config("max_depth must be at least 1".into()));
    }
    Ok(())
}

/// Fit and also return the training-loss trace: entry 0 is the loss at the
/// base score, entry k the loss after k boosting iterations.
pub fn fit_hgb_traced(
    x: &Matrix,
    y: &[u8],
    params: &HgbParams,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<(HgbModel, Vec<f64>)> {
    validate(params)?;
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(Error::Input("empty training data".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Input("row/label count mismatch".into()));
    }
    let _ = seed; // growth is fully deterministic; kept for interface parity
    let n = x.n_rows();
    let p = x.n_cols();
    let w_of = |i: usize| weights.map_or(1.0, |w| w[i]);

    // Quantile binning, then a prebinned copy of the data.
    let bin_edges: Vec<Vec<f64>> = (0..p)
        .map(|j| quantile_edges(&x.col(j), params.max_bins))
        .collect();
    let n_bins: Vec<usize> = bin_edges.iter().map(|e| e.len() + 1).collect();
    let binned: Vec<Vec<usize>> = (0..p)
        .map(|j| x.col_iter(j).map(|v| bin_index(&bin_edges[j], v)).collect())
        .collect();

    let w_total: f64 = (0..n).map(w_of).sum();
    let w_pos: f64 = (0..n).filter(|&i| y[i] == 1).map(w_of).sum();
    let rate = w_pos / w_total;
    let base_score = (rate / (1.0 - rate)).ln().clamp(-36.0, 36.0);

    let mut scores = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_iterations);
    let mut trace = Vec::with_capacity(params.n_iterations + 1);
    trace.push(logistic_loss(&scores, y, weights));

    for _ in 0..params.n_iterations {
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for i in 0..n {
            let prob = sigmoid(scores[i]);
            let w = w_of(i);
            g[i] = w * (prob - f64::from(y[i]));
            h[i] = w * prob * (1.0 - prob);
        }

        // Best-first growth.
        let mut nodes: Vec<HgbNode> = Vec::new();
        let root_indices: Vec<u32> = (0..n as u32).collect();
        let leaf_value = |indices: &[u32]| -> f64 {
            let g_sum: f64 = indices.iter().map(|&i| g[i as usize]).sum();
            let h_sum: f64 = indices.iter().map(|&i| h[i as usize]).sum();
            if h_sum > 0.0 {
                -g_sum / h_sum
            } else {
                0.0
            }
        };
        nodes.push(HgbNode::Leaf {
            value: leaf_value(&root_indices),
        });

        let mut heap: BinaryHeap<CandidateSplit> = BinaryHeap::new();
        let mut order = 0usize;
        let depth_allows = |depth: usize| params.max_depth.is_none_or(|d| depth < d);
        if depth_allows(0) {
            if let Some((feature, t, gain)) =
                best_histogram_split(&binned, &n_bins, &g, &h, &root_indices)
            {
                heap.push(CandidateSplit {
                    gain,
                    order,
                    node: 0,
                    feature,
                    bin_threshold: t,
                    depth: 0,
                    indices: root_indices,
                });
                order += 1;
            }
        }

        let mut n_leaves = 1usize;
        while n_leaves < params.max_leaf_nodes {
            let cand = match heap.pop() {
                Some(c) => c,
                None => break,
            };
            let (left_idx, right_idx): (Vec<u32>, Vec<u32>) = cand
                .indices
                .iter()
                .partition(|&&i| binned[cand.feature][i as usize] <= cand.bin_threshold);
            let left_node = nodes.len();
            nodes.push(HgbNode::Leaf {
                value: leaf_value(&left_idx),
            });
            let right_node = nodes.len();
            nodes.push(HgbNode::Leaf {
                value: leaf_value(&right_idx),
            });
            nodes[cand.node] = HgbNode::Split {
                feature: cand.feature,
                bin_threshold: cand.bin_threshold,
                gain: cand.gain,
                left: left_node,
                right: right_node,
            };
            n_leaves += 1;

            let child_depth = cand.depth + 1;
            if depth_allows(child_depth) {
                for (node, indices) in [(left_node, left_idx), (right_node, right_idx)] {
                    if let Some((feature, t, gain)) =
                        best_histogram_split(&binned, &n_bins, &g, &h, &indices)
                    {
                        heap.push(CandidateSplit {
                            gain,
                            order,
                            node,
                            feature,
                            bin_threshold: t,
                            depth: child_depth,
                            indices,
                        });
                        order += 1;
                    }
                }
            }
        }

        let tree = HgbTree { nodes };
        for i in 0..n {
            let bins: Vec<usize> = (0..p).map(|j| binned[j][i]).collect();
            scores[i] += params.learning_rate * tree.leaf_value(&bins);
        }
        trees.push(tree);
        trace.push(logistic_loss(&scores, y, weights));
    }

    Ok((
        HgbModel {
            bin_edges,
            base_score,
            learning_rate: params.learning_rate,
            trees,
            params: *params,
        },
        trace,
    ))
}

pub fn fit_hgb(
    x: &Matrix,
    y: &[u8],
    params: &HgbParams,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<HgbModel> {
    fit_hgb_traced(x, y, params, weights, seed).map(|(m, _)| m)
}

/// σ(base + learning_rate·Σ leaf values); raw features are binned with the
/// stored edges first.
pub fn predict_proba_hgb(model: &HgbModel, x: &Matrix) -> Result<Vec<f64>> {
    let p = model.bin_edges.len();
    if x.n_cols() != p {
        return Err(Error::Input(format!(
            "model has {} features, input has {}",
            p,
            x.n_cols()
        )));
    }
    Ok((0..x.n_rows())
        .map(|i| {
            let row = x.row(i);
            let bins: Vec<usize> = (0..p).map(|j| bin_index(&model.bin_edges[j], row[j])).collect();
            let raw: f64 = model.trees.iter().map(|t| t.leaf_value(&bins)).sum();
            sigmoid(model.base_score + model.learning_rate * raw)
        })
        .collect())
}
