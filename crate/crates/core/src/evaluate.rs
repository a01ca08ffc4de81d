//! ROC/AUC evaluation, repeated stratified k-fold cross-validation with
//! grid search, and experiment orchestration.
//!
//! AUC is computed exactly as the Mann–Whitney statistic
//! `P(score⁺ > score⁻) + ½·P(tie)` via average ranks; the trapezoidal
//! integral of the ROC curve agrees with it to floating-point accuracy and
//! a test pins that identity. Resampling and standardization happen
//! strictly inside training folds: the fold driver hands learners only the
//! training rows, and resampled sets carry no row identity that could
//! rejoin an evaluation split.
//!
//! Fold-level work runs in parallel; results aggregate in canonical
//! (candidate, repeat, fold) order so reports are identical at any thread
//! count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::featurize::{temporal_split, Dataset, DatasetSummary, DateWindow};
use crate::learn::{
    AlgoCandidate, AlgorithmKind, FittedModel, ForestParams, HgbParams, Learner, LogRegParams,
    MaxFeatures,
};
use crate::matrix::Matrix;
use crate::resample::{self, ResampleSpec, Strategy};
use crate::{derive_seed, Error, Result};

// ── ROC / AUC ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// ROC curve with one point per distinct score (descending thresholds),
/// plus the (0,0) sentinel at +∞. FPR and TPR are nondecreasing along the
/// curve and the endpoints (0,0) and (1,1) are always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn trapezoid_auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub threshold: f64,
}

fn check_both_classes(labels: &[u8]) -> Result<(usize, usize)> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes; got {n_pos} positive and {n_neg} negative"
        )));
    }
    Ok((n_pos, n_neg))
}

/// Exact AUC: the probability a random positive outscores a random
/// negative, ties counted half. Computed from average ranks in
/// O(n log n).
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Input("score/label count mismatch".into()));
    }
    let (n_pos, n_neg) = check_both_classes(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; a tie group shares the average rank.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// ROC curve with thresholds at each distinct score, descending; tied
/// scores collapse to one point. Prediction is positive at score ≥
/// threshold, so the final point (threshold = min score) is (1,1).
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Input("score/label count mismatch".into()));
    }
    let (n_pos, n_neg) = check_both_classes(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        });
    }
    Ok(RocCurve { points })
}

/// Threshold the scores at `threshold` (positive at score ≥ threshold) and
/// tally the confusion counts.
pub fn confusion_at(scores: &[f64], labels: &[u8], threshold: f64) -> ConfusionMatrix {
    let mut m = ConfusionMatrix {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
        threshold,
    };
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, true) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    m
}

// ── stratified k-fold ────────────────────────────────────────────────────

/// Fold assignments: `assignments[repeat][sample] = fold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfoldPlan {
    pub k: usize,
    pub assignments: Vec<Vec<usize>>,
}

impl KfoldPlan {
    /// Train/test index lists for one (repeat, fold), in ascending order.
    pub fn split(&self, repeat: usize, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let assignment = &self.assignments[repeat];
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in assignment.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Repeated stratified k-fold: per repeat, each class's indices are
/// shuffled and dealt round-robin, so every fold's class count is within
/// one of `n_class / k`. Repeats consume successive shuffles from the
/// seeded generator.
pub fn stratified_kfold(labels: &[u8], k: usize, repeats: usize, seed: u64) -> Result<KfoldPlan> {
    if k < 2 {
        return Err(Error::Config("k must be at least 2".into()));
    }
    for class in [0u8, 1] {
        let count = labels.iter().filter(|&&l| l == class).count();
        if count < k {
            return Err(Error::Config(format!(
                "class {class} has {count} samples, fewer than k = {k}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let mut assignment = vec![0usize; labels.len()];
        for class in [0u8, 1] {
            let mut indices: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == class)
                .map(|(i, _)| i)
                .collect();
            indices.shuffle(&mut rng);
            for (pos, &i) in indices.iter().enumerate() {
                assignment[i] = pos % k;
            }
        }
        assignments.push(assignment);
    }
    Ok(KfoldPlan { k, assignments })
}

// ── cross-validated grid search ──────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCv {
    pub description: String,
    pub mean_auc: f64,
    pub std_auc: f64,
    /// Folds whose held-out AUC was undefined, excluded from the mean.
    pub n_skipped: usize,
}

/// Per-candidate CV statistics; `chosen` attains the max mean AUC, ties
/// broken toward the first candidate in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub candidates: Vec<CandidateCv>,
    pub chosen: usize,
}

impl CvReport {
    pub fn chosen_candidate(&self) -> &CandidateCv {
        &self.candidates[self.chosen]
    }
}

/// Grid search under repeated stratified CV.
///
/// For every candidate and every (repeat, fold): the imbalance strategy is
/// applied to the training rows only, the candidate fits on the resampled
/// set (logistic candidates standardize inside their fit, likewise on
/// training rows only), and the held-out fold is scored. Mean/std are over
/// the k·repeats fold AUCs, population std.
pub fn cv_select<L: Learner>(
    x: &Matrix,
    y: &[u8],
    candidates: &[L],
    strategy: &ResampleSpec,
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<CvReport> {
    if candidates.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let plan = stratified_kfold(y, k, repeats, derive_seed(seed, "cv.folds"))?;

    let mut tasks = Vec::new();
    for c in 0..candidates.len() {
        for r in 0..repeats {
            for f in 0..k {
                tasks.push((c, r, f));
            }
        }
    }
    let fold_aucs: Vec<Result<Option<f64>>> = tasks
        .par_iter()
        .map(|&(c, r, f)| {
            let (train_idx, test_idx) = plan.split(r, f);
            let train_x = x.select_rows(&train_idx);
            let train_y: Vec<u8> = train_idx.iter().map(|&i| y[i]).collect();
            let fold_tag = format!("cv.c{c}.r{r}.f{f}");
            let spec = strategy.with_seed(derive_seed(seed, &format!("{fold_tag}.resample")));
            let resampled = resample::apply(&spec, &train_x, &train_y)?;
            let model = candidates[c].fit(
                &resampled.x,
                &resampled.y,
                resampled.weights.as_deref(),
                derive_seed(seed, &format!("{fold_tag}.fit")),
            )?;
            let test_x = x.select_rows(&test_idx);
            let test_y: Vec<u8> = test_idx.iter().map(|&i| y[i]).collect();
            let scores = model.score(&test_x)?;
            match auc(&scores, &test_y) {
                Ok(v) => Ok(Some(v)),
                Err(Error::UndefinedMetric(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut report = Vec::with_capacity(candidates.len());
    let per_candidate = repeats * k;
    for (c, candidate) in candidates.iter().enumerate() {
        let mut values = Vec::with_capacity(per_candidate);
        let mut n_skipped = 0;
        for t in 0..per_candidate {
            match &fold_aucs[c * per_candidate + t] {
                Ok(Some(v)) => values.push(*v),
                Ok(None) => n_skipped += 1,
                Err(e) => {
                    return Err(Error::Config(format!(
                        "candidate {} failed in CV: {e}",
                        candidate.describe()
                    )))
                }
            }
        }
        if values.is_empty() {
            return Err(Error::UndefinedMetric(format!(
                "candidate {}: every fold was skipped",
                candidate.describe()
            )));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
        report.push(CandidateCv {
            description: candidate.describe(),
            mean_auc: mean,
            std_auc: var.sqrt(),
            n_skipped,
        });
    }
    let chosen = report
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.mean_auc
                .partial_cmp(&b.mean_auc)
                .unwrap()
                .then(ib.cmp(ia)) // ties: first in grid order wins
        })
        .map(|(i, _)| i)
        .unwrap();
    Ok(CvReport {
        candidates: report,
        chosen,
    })
}

// ── hyperparameter grids ─────────────────────────────────────────────────

pub fn lr_grid(cs: &[f64]) -> Vec<AlgoCandidate> {
    cs.iter()
        .map(|&c| {
            AlgoCandidate::LogReg(LogRegParams {
                c,
                ..LogRegParams::default()
            })
        })
        .collect()
}

pub fn rf_grid(
    n_trees: usize,
    min_samples_split: &[usize],
    min_samples_leaf: &[usize],
    max_features: &[MaxFeatures],
) -> Vec<AlgoCandidate> {
    let mut out = Vec::new();
    for &split in min_samples_split {
        for &leaf in min_samples_leaf {
            for &feats in max_features {
                out.push(AlgoCandidate::Forest(ForestParams {
                    n_trees,
                    min_samples_split: split,
                    min_samples_leaf: leaf,
                    max_features: feats,
                    bootstrap: true,
                }));
            }
        }
    }
    out
}

pub fn hgb_grid(
    n_iterations: usize,
    learning_rates: &[f64],
    max_depths: &[Option<usize>],
    max_leaf_nodes: &[usize],
    max_bins: &[usize],
) -> Vec<AlgoCandidate> {
    let mut out = Vec::new();
    for &lr in learning_rates {
        for &depth in max_depths {
            for &leaves in max_leaf_nodes {
                for &bins in max_bins {
                    out.push(AlgoCandidate::Hgb(HgbParams {
                        n_iterations,
                        learning_rate: lr,
                        max_depth: depth,
                        max_leaf_nodes: leaves,
                        max_bins: bins,
                    }));
                }
            }
        }
    }
    out
}

/// The documented default grids. Tree/iteration counts default to 100.
pub fn default_grid(kind: AlgorithmKind) -> Vec<AlgoCandidate> {
    match kind {
        AlgorithmKind::LogisticRegression => lr_grid(&[0.01, 0.1, 1.0, 10.0]),
        AlgorithmKind::RandomForest => rf_grid(
            100,
            &[2, 10, 50],
            &[1, 5, 20],
            &[MaxFeatures::Sqrt, MaxFeatures::Third, MaxFeatures::All],
        ),
        AlgorithmKind::HistGradientBoosting => hgb_grid(
            100,
            &[0.05, 0.1, 0.3],
            &[Some(3), Some(6), None],
            &[15, 31, 63],
            &[32, 128, 255],
        ),
    }
}

// ── experiment orchestration ─────────────────────────────────────────────

/// One Table-IV-style experiment: an algorithm, an imbalance strategy, a
/// hyperparameter grid, the CV protocol, and the temporal split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub algorithm: AlgorithmKind,
    pub strategy: Strategy,
    pub smote_k_neighbors: usize,
    pub candidates: Vec<AlgoCandidate>,
    pub cv_folds: usize,
    pub cv_repeats: usize,
    pub train_window: DateWindow,
    pub test_window: DateWindow,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn resample_spec(&self) -> ResampleSpec {
        ResampleSpec {
            strategy: self.strategy,
            k_neighbors: self.smote_k_neighbors,
            seed: 0, // per-use seeds are derived before application
        }
    }
}

/// Everything one experiment reports: CV statistics for the grid, the
/// chosen candidate refit on the full training window, and test-window
/// ROC/AUC plus the confusion matrix at 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub algorithm: AlgorithmKind,
    pub strategy: Strategy,
    pub cv: CvReport,
    pub chosen_description: String,
    pub test_auc: f64,
    pub roc: RocCurve,
    pub confusion: ConfusionMatrix,
    pub train_summary: DatasetSummary,
    pub test_summary: DatasetSummary,
    pub seed: u64,
}

/// Run the full protocol on a featurized dataset: temporal split, CV grid
/// search on the training window, final fit with the chosen candidate, and
/// test-window evaluation. Deterministic given (dataset, spec).
pub fn run_experiment(dataset: &Dataset, spec: &ExperimentSpec) -> Result<(EvaluationReport, FittedModel)> {
    for candidate in &spec.candidates {
        if candidate.kind() != spec.algorithm {
            return Err(Error::Config(format!(
                "candidate {} does not match experiment algorithm {}",
                candidate.describe(),
                spec.algorithm
            )));
        }
    }
    let (train, test) = temporal_split(dataset, spec.train_window, spec.test_window)?;
    if train.n_rows() == 0 || test.n_rows() == 0 {
        return Err(Error::Validation(format!(
            "temporal split produced {} train and {} test rows",
            train.n_rows(),
            test.n_rows()
        )));
    }

    let cv = cv_select(
        &train.x,
        &train.y,
        &spec.candidates,
        &spec.resample_spec(),
        spec.cv_folds,
        spec.cv_repeats,
        spec.seed,
    )?;
    let chosen = &spec.candidates[cv.chosen];

    let final_spec = spec
        .resample_spec()
        .with_seed(derive_seed(spec.seed, "final.resample"));
    let resampled = resample::apply(&final_spec, &train.x, &train.y)?;
    let model = chosen.fit_model(
        &resampled.x,
        &resampled.y,
        resampled.weights.as_deref(),
        derive_seed(spec.seed, "final.fit"),
    )?;
    let scores = model.score(&test.x)?;
    let test_auc = auc(&scores, &test.y)?;
    let roc = roc_curve(&scores, &test.y)?;
    let confusion = confusion_at(&scores, &test.y, 0.5);

    let report = EvaluationReport {
        algorithm: spec.algorithm,
        strategy: spec.strategy,
        chosen_description: chosen.describe(),
        cv,
        test_auc,
        roc,
        confusion,
        train_summary: train.summary,
        test_summary: test.summary,
        seed: spec.seed,
    };
    Ok((report, model))
}

/// Render experiment rows as a CSV table: one line per (algorithm,
/// strategy) with train CV mean/std and test AUC.
pub fn render_results_table(reports: &[EvaluationReport]) -> String {
    let mut out = String::from("algorithm,strategy,cv_mean_auc,cv_std_auc,test_auc,chosen\n");
    for r in reports {
        let chosen = r.cv.chosen_candidate();
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            r.algorithm, r.strategy, chosen.mean_auc, chosen.std_auc, r.test_auc, r.chosen_description
        ));
    }
    out
}

/// Plot-ready ROC CSV: fpr,tpr,threshold per row.
pub fn write_roc_csv(path: &std::path::Path, roc: &RocCurve) -> Result<()> {
    use std::io::Write;
    let file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut file = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(file, "fpr,tpr,threshold").map_err(io_err)?;
    for p in &roc.points {
        writeln!(file, "{},{},{}", p.fpr, p.tpr, p.threshold).map_err(io_err)?;
    }
    Ok(())
}
