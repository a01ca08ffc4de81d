//! The three classifier families behind one fit/score interface.
//!
//! * L1-regularized logistic regression on standardized features
//!   ([`logreg`]), solved by coordinate descent to an explicit subgradient
//!   optimality tolerance.
//! * Random forest with Gini splitting ([`forest`]); the ensemble
//!   probability is the fraction of trees voting positive.
//! * Histogram-based gradient boosting with logistic loss ([`hgb`]):
//!   quantile-binned features, second-order (Newton) leaf values, best-first
//!   tree growth.
//!
//! Fitted models are immutable and safe for concurrent scoring. Model files
//! are a versioned JSON envelope (see `SCHEMAS.md`); serde round-trips f64
//! exactly, so a reloaded model scores bit-identically.

pub mod forest;
pub mod hgb;
pub mod logreg;
pub mod standardize;

pub use forest::{
    fit_random_forest, predict_proba_forest, ForestModel, ForestParams, MaxFeatures, NodeKind,
};
pub use hgb::{fit_hgb, fit_hgb_traced, predict_proba_hgb, HgbModel, HgbParams};
pub use logreg::{fit_logreg_l1, predict_proba_logreg, LogRegModel, LogRegParams};
pub use standardize::Standardizer;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result};

/// Numerically stable sigmoid.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Probability floor for log-loss evaluation, to keep log() finite.
pub(crate) const PROB_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    LogisticRegression,
    RandomForest,
    HistGradientBoosting,
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AlgorithmKind::LogisticRegression => "lr",
            AlgorithmKind::RandomForest => "rf",
            AlgorithmKind::HistGradientBoosting => "hgb",
        };
        write!(f, "{s}")
    }
}

/// One hyperparameter candidate: an algorithm plus its settings. Fitting a
/// logistic-regression candidate standardizes on the given (training) data
/// and stores the standardizer with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "algorithm")]
pub enum AlgoCandidate {
    LogReg(LogRegParams),
    Forest(ForestParams),
    Hgb(HgbParams),
}

impl AlgoCandidate {
    pub fn kind(&self) -> AlgorithmKind {
        match self {
            AlgoCandidate::LogReg(_) => AlgorithmKind::LogisticRegression,
            AlgoCandidate::Forest(_) => AlgorithmKind::RandomForest,
            AlgoCandidate::Hgb(_) => AlgorithmKind::HistGradientBoosting,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            AlgoCandidate::LogReg(p) => format!("lr(C={})", p.c),
            AlgoCandidate::Forest(p) => format!(
                "rf(split={},leaf={},feat={})",
                p.min_samples_split, p.min_samples_leaf, p.max_features
            ),
            AlgoCandidate::Hgb(p) => format!(
                "hgb(lr={},depth={},leaves={},bins={})",
                p.learning_rate,
                p.max_depth.map_or("none".into(), |d| d.to_string()),
                p.max_leaf_nodes,
                p.max_bins
            ),
        }
    }
}

/// Scores feature rows with positive-class probabilities.
pub trait Scorer: Send + Sync {
    fn score(&self, x: &Matrix) -> Result<Vec<f64>>;
}

/// Anything that can train a scorer from a feature matrix. Used by the
/// cross-validation driver so tests can substitute probe learners.
pub trait Learner: Sync {
    fn fit(&self, x: &Matrix, y: &[u8], weights: Option<&[f64]>, seed: u64)
        -> Result<Box<dyn Scorer>>;
    fn describe(&self) -> String;
}

impl AlgoCandidate {
    /// Train the concrete model for this candidate.
    pub fn fit_model(
        &self,
        x: &Matrix,
        y: &[u8],
        weights: Option<&[f64]>,
        seed: u64,
    ) -> Result<FittedModel> {
        match self {
            AlgoCandidate::LogReg(params) => {
                let standardizer = Standardizer::fit(x)?;
                let xs = standardizer.transform(x)?;
                let model = fit_logreg_l1(&xs, y, weights, params)?;
                Ok(FittedModel::LogReg {
                    model,
                    standardizer,
                })
            }
            AlgoCandidate::Forest(params) => {
                Ok(FittedModel::Forest(fit_random_forest(x, y, params, weights, seed)?))
            }
            AlgoCandidate::Hgb(params) => {
                Ok(FittedModel::Hgb(fit_hgb(x, y, params, weights, seed)?))
            }
        }
    }
}

impl Learner for AlgoCandidate {
    fn fit(
        &self,
        x: &Matrix,
        y: &[u8],
        weights: Option<&[f64]>,
        seed: u64,
    ) -> Result<Box<dyn Scorer>> {
        Ok(Box::new(self.fit_model(x, y, weights, seed)?))
    }

    fn describe(&self) -> String {
        AlgoCandidate::describe(self)
    }
}

/// A trained classifier with scoring and importance interfaces. The
/// logistic model carries the standardizer fitted on its training data, so
/// scoring always takes raw-scale features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FittedModel {
    LogReg {
        model: LogRegModel,
        standardizer: Standardizer,
    },
    Forest(ForestModel),
    Hgb(HgbModel),
}

impl FittedModel {
    pub fn kind(&self) -> AlgorithmKind {
        match self {
            FittedModel::LogReg { .. } => AlgorithmKind::LogisticRegression,
            FittedModel::Forest(_) => AlgorithmKind::RandomForest,
            FittedModel::Hgb(_) => AlgorithmKind::HistGradientBoosting,
        }
    }

    /// Positive-class probability per row of `x` (raw feature scale).
    pub fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            FittedModel::LogReg {
                model,
                standardizer,
            } => predict_proba_logreg(model, &standardizer.transform(x)?),
            FittedModel::Forest(model) => predict_proba_forest(model, x),
            FittedModel::Hgb(model) => predict_proba_hgb(model, x),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::LogReg { model, .. } => model.coefficients.len(),
            FittedModel::Forest(model) => model.n_features,
            FittedModel::Hgb(model) => model.bin_edges.len(),
        }
    }
}

impl Scorer for FittedModel {
    fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        FittedModel::score(self, x)
    }
}

/// Versioned on-disk envelope for fitted models.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: FittedModel,
}

const MODEL_FORMAT: &str = "gridfire-model";
const MODEL_VERSION: u32 = 1;

pub fn save_model(path: &std::path::Path, model: &FittedModel) -> Result<()> {
    let envelope = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: model.clone(),
    };
    let text = serde_json::to_string_pretty(&envelope)
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_model(path: &std::path::Path) -> Result<FittedModel> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let envelope: ModelFile =
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if envelope.format != MODEL_FORMAT {
        return Err(Error::ModelFormat(format!(
            "not a model file (format `{}`)",
            envelope.format
        )));
    }
    if envelope.version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported model version {}",
            envelope.version
        )));
    }
    Ok(envelope.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, p: usize, seed: u64) -> (Matrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let x = Matrix::from_vec_rows(&rows);
        let y: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(r[0] + 0.5 * r[1] + 0.3 * rng.gen_range(-1.0..1.0) > 0.0))
            .collect();
        (x, y)
    }

    #[test]
    fn model_files_round_trip_with_identical_predictions() {
        let (x, y) = random_problem(120, 5, 42);
        let dir = tempfile::tempdir().unwrap();
        let candidates = [
            AlgoCandidate::LogReg(LogRegParams::default()),
            AlgoCandidate::Forest(ForestParams {
                n_trees: 12,
                ..ForestParams::default()
            }),
            AlgoCandidate::Hgb(HgbParams {
                n_iterations: 15,
                ..HgbParams::default()
            }),
        ];
        for (i, cand) in candidates.iter().enumerate() {
            let model = cand.fit_model(&x, &y, None, 7).unwrap();
            let path = dir.path().join(format!("model_{i}.json"));
            save_model(&path, &model).unwrap();
            let reloaded = load_model(&path).unwrap();
            let before = model.score(&x).unwrap();
            let after = reloaded.score(&x).unwrap();
            assert_eq!(before, after, "{} predictions changed", cand.describe());
        }
    }

    #[test]
    fn load_rejects_foreign_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.json");
        std::fs::write(&path, r#"{"format":"something-else","version":1,"model":null}"#).unwrap();
        assert!(load_model(&path).is_err());
    }
}
