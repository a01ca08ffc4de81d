//! Feature importance and the ablation harness.
//!
//! Three importance readings, one per model family: absolute standardized
//! coefficients for the logistic model (L1-pruned features report exactly
//! zero), normalized mean Gini impurity decrease for the forest, and
//! unnormalized total split gain for the boosted ensemble. Rankings are the
//! descending sort of the values with schema-order tie-breaking, so reports
//! are deterministic.
//!
//! The ablation harness reruns the full train/CV/test protocol on feature
//! subsets selected by category, and on the trailing-weather and
//! cause-specific label variants. Combinations run as independent
//! experiments with deterministic aggregation order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluate::{run_experiment, EvaluationReport, ExperimentSpec};
use crate::featurize::{cause_specific_labels, Dataset, FeatureCategory, FeatureSchema};
use crate::ingest::Cause;
use crate::learn::{FittedModel, ForestModel, HgbModel, LogRegModel, NodeKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    LrCoef,
    RfGini,
    HgbGain,
}

impl std::fmt::Display for ImportanceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ImportanceMethod::LrCoef => "lr_coef",
            ImportanceMethod::RfGini => "rf_gini",
            ImportanceMethod::HgbGain => "hgb_gain",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub category: FeatureCategory,
    pub value: f64,
    /// 1 = most important. Ranks are a permutation of 1..=p; ties resolve
    /// in schema order.
    pub rank: usize,
}

/// Per-feature importance values in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: ImportanceMethod,
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceReport {
    fn from_values(method: ImportanceMethod, schema: &FeatureSchema, values: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
        let mut ranks = vec![0usize; values.len()];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = r + 1;
        }
        let entries = schema
            .defs()
            .iter()
            .zip(values)
            .zip(ranks)
            .map(|((def, value), rank)| ImportanceEntry {
                feature: def.name.clone(),
                category: def.category,
                value,
                rank,
            })
            .collect();
        ImportanceReport { method, entries }
    }

    /// Entries sorted by rank, truncated to `k` (the report view defaults
    /// to 20 to mirror the usual top-20 charts).
    pub fn top_k(&self, k: usize) -> Vec<&ImportanceEntry> {
        let mut sorted: Vec<&ImportanceEntry> = self.entries.iter().collect();
        sorted.sort_by_key(|e| e.rank);
        sorted.truncate(k);
        sorted
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut file = std::io::BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
        writeln!(file, "feature,category,value,rank").map_err(io_err)?;
        for e in &self.entries {
            writeln!(file, "{},{},{},{}", e.feature, e.category, e.value, e.rank)
                .map_err(io_err)?;
        }
        Ok(())
    }
}

/// |coefficient| on the standardized scale; zeros are exactly zero.
pub fn lr_importance(model: &LogRegModel, schema: &FeatureSchema) -> ImportanceReport {
    let values = model.coefficients.iter().map(|c| c.abs()).collect();
    ImportanceReport::from_values(ImportanceMethod::LrCoef, schema, values)
}

/// Mean over trees of the weighted impurity decrease attributed to each
/// feature's splits, normalized to sum one. A forest with no splits at all
/// reports all zeros.
pub fn rf_gini_importance(model: &ForestModel, schema: &FeatureSchema) -> ImportanceReport {
    let mut totals = vec![0.0; model.n_features];
    for tree in &model.trees {
        for node in &tree.nodes {
            if let NodeKind::Split {
                feature,
                left,
                right,
                ..
            } = node.kind
            {
                let l = &tree.nodes[left];
                let r = &tree.nodes[right];
                let decrease =
                    node.weight * node.impurity - l.weight * l.impurity - r.weight * r.impurity;
                totals[feature] += decrease;
            }
        }
    }
    let n_trees = model.trees.len() as f64;
    for t in totals.iter_mut() {
        *t /= n_trees;
    }
    let sum: f64 = totals.iter().sum();
    if sum > 0.0 {
        for t in totals.iter_mut() {
            *t /= sum;
        }
    }
    ImportanceReport::from_values(ImportanceMethod::RfGini, schema, totals)
}

/// Total split gain per feature over all trees, unnormalized. A feature
/// never split on reports exactly zero.
pub fn hgb_gain_importance(model: &HgbModel, schema: &FeatureSchema) -> ImportanceReport {
    let mut totals = vec![0.0; model.bin_edges.len()];
    for tree in &model.trees {
        for node in &tree.nodes {
            if let crate::learn::hgb::HgbNode::Split { feature, gain, .. } = node {
                totals[*feature] += gain;
            }
        }
    }
    ImportanceReport::from_values(ImportanceMethod::HgbGain, schema, totals)
}

/// Dispatch on the fitted model's family.
pub fn importance_of(model: &FittedModel, schema: &FeatureSchema) -> Result<ImportanceReport> {
    if model.n_features() != schema.len() {
        return Err(Error::Input(format!(
            "model has {} features, schema has {}",
            model.n_features(),
            schema.len()
        )));
    }
    Ok(match model {
        FittedModel::LogReg { model, .. } => lr_importance(model, schema),
        FittedModel::Forest(model) => rf_gini_importance(model, schema),
        FittedModel::Hgb(model) => hgb_gain_importance(model, schema),
    })
}

// ── ablation harness ─────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub groups: Vec<FeatureCategory>,
    pub n_features: usize,
    pub cv_mean_auc: f64,
    pub cv_std_auc: f64,
    pub test_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("groups,n_features,cv_mean_auc,cv_std_auc,test_auc\n");
        for row in &self.rows {
            let groups: Vec<String> = row.groups.iter().map(|g| g.to_string()).collect();
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                groups.join("+"),
                row.n_features,
                row.cv_mean_auc,
                row.cv_std_auc,
                row.test_auc
            ));
        }
        out
    }
}

/// The four feature-group combinations of the headline ablation: primary
/// climate alone, derived alone, both, and both plus infrastructure.
pub fn standard_ablation_combos() -> Vec<Vec<FeatureCategory>> {
    vec![
        vec![FeatureCategory::PrimaryClimate],
        vec![FeatureCategory::Derived],
        vec![FeatureCategory::PrimaryClimate, FeatureCategory::Derived],
        vec![
            FeatureCategory::PrimaryClimate,
            FeatureCategory::Derived,
            FeatureCategory::StaticInfrastructure,
            FeatureCategory::DynamicInfrastructure,
        ],
    ]
}

/// Rerun the full protocol (tuning included) on each category restriction.
pub fn ablation_run(
    dataset: &Dataset,
    combos: &[Vec<FeatureCategory>],
    spec: &ExperimentSpec,
) -> Result<AblationTable> {
    let results: Vec<Result<AblationRow>> = combos
        .par_iter()
        .map(|combo| {
            let indices = dataset.schema.indices_for_categories(combo);
            let restricted = dataset.restrict_features(&indices)?;
            let (report, _model) = run_experiment(&restricted, spec)?;
            let chosen = report.cv.chosen_candidate();
            Ok(AblationRow {
                groups: combo.clone(),
                n_features: indices.len(),
                cv_mean_auc: chosen.mean_auc,
                cv_std_auc: chosen.std_auc,
                test_auc: report.test_auc,
            })
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    Ok(AblationTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDropRow {
    pub dropped: Vec<String>,
    pub n_features: usize,
    pub cv_mean_auc: f64,
    pub cv_std_auc: f64,
    pub test_auc: f64,
}

/// Ablation by named-feature removal: each entry reruns the full protocol
/// on all columns except the listed ones (e.g. dropping line length and
/// both historical counts together).
pub fn feature_drop_run(
    dataset: &Dataset,
    drops: &[Vec<String>],
    spec: &ExperimentSpec,
) -> Result<Vec<FeatureDropRow>> {
    let mut rows = Vec::with_capacity(drops.len());
    for dropped in drops {
        for name in dropped {
            if dataset.schema.index_of(name).is_none() {
                return Err(Error::Config(format!(
                    "cannot drop unknown feature `{name}`"
                )));
            }
        }
        let keep: Vec<usize> = (0..dataset.schema.len())
            .filter(|&i| !dropped.contains(&dataset.schema.defs()[i].name))
            .collect();
        let restricted = dataset.restrict_features(&keep)?;
        let (report, _model) = run_experiment(&restricted, spec)?;
        let chosen = report.cv.chosen_candidate();
        rows.push(FeatureDropRow {
            dropped: dropped.clone(),
            n_features: keep.len(),
            cv_mean_auc: chosen.mean_auc,
            cv_std_auc: chosen.std_auc,
            test_auc: report.test_auc,
        });
    }
    Ok(rows)
}

/// Two full experiment runs differing only in the weather columns: the
/// day-of dataset and its trailing-average variant.
pub fn compare_trailing_weather(
    actual: &Dataset,
    trailing: &Dataset,
    spec: &ExperimentSpec,
) -> Result<(EvaluationReport, EvaluationReport)> {
    if actual.schema != trailing.schema {
        return Err(Error::Config(
            "day-of and trailing datasets must share one schema".into(),
        ));
    }
    let (report_actual, _) = run_experiment(actual, spec)?;
    let (report_trailing, _) = run_experiment(trailing, spec)?;
    Ok((report_actual, report_trailing))
}

/// One cause model's outcome: either a full report or the reason it was
/// skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum CauseModelOutcome {
    Report(Box<EvaluationReport>),
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseModelResult {
    pub label: String,
    pub outcome: CauseModelOutcome,
}

/// Train the all-ignition model plus one cause-specific model per entry in
/// `causes`, all sharing the same protocol and test window. A cause with
/// zero positives in the train or test window is skipped with a note.
pub fn cause_model_comparison(
    dataset: &Dataset,
    causes: &[Cause],
    spec: &ExperimentSpec,
) -> Result<Vec<CauseModelResult>> {
    let mut out = Vec::new();
    let (report, _) = run_experiment(dataset, spec)?;
    out.push(CauseModelResult {
        label: "all_ignition".into(),
        outcome: CauseModelOutcome::Report(Box::new(report)),
    });
    for &cause in causes {
        let relabeled = cause_specific_labels(dataset, cause);
        let positives_in = |window: &crate::featurize::DateWindow| {
            relabeled
                .meta
                .iter()
                .zip(&relabeled.y)
                .filter(|(m, &y)| y == 1 && window.contains(m.date))
                .count()
        };
        let train_pos = positives_in(&spec.train_window);
        let test_pos = positives_in(&spec.test_window);
        if train_pos == 0 || test_pos == 0 {
            out.push(CauseModelResult {
                label: cause.to_string(),
                outcome: CauseModelOutcome::Skipped {
                    reason: format!(
                        "{train_pos} train and {test_pos} test positives for cause {cause}"
                    ),
                },
            });
            continue;
        }
        let (report, _) = run_experiment(&relabeled, spec)?;
        out.push(CauseModelResult {
            label: cause.to_string(),
            outcome: CauseModelOutcome::Report(Box::new(report)),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::lr_grid;
    use crate::featurize::{DatasetSummary, DateWindow, FeatureDef, RowMeta, TargetKind};
    use crate::learn::forest::{Node, Tree};
    use crate::learn::hgb::{HgbNode, HgbTree};
    use crate::learn::{
        AlgorithmKind, ForestParams, HgbParams, LogRegModel, MaxFeatures, Standardizer,
    };
    use crate::matrix::Matrix;
    use crate::resample::Strategy;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schema3() -> FeatureSchema {
        FeatureSchema::from_defs(
            TargetKind::FeederIgnition,
            vec![
                FeatureDef {
                    name: "a".into(),
                    category: FeatureCategory::PrimaryClimate,
                    weather: true,
                },
                FeatureDef {
                    name: "b".into(),
                    category: FeatureCategory::Derived,
                    weather: true,
                },
                FeatureDef {
                    name: "c".into(),
                    category: FeatureCategory::StaticInfrastructure,
                    weather: false,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn lr_importance_magnitude_and_ranks() {
        let model = LogRegModel {
            coefficients: vec![0.0, -2.0, 1.0],
            intercept: 0.5,
            c_inverse_reg: 1.0,
        };
        let report = lr_importance(&model, &schema3());
        let values: Vec<f64> = report.entries.iter().map(|e| e.value).collect();
        let ranks: Vec<usize> = report.entries.iter().map(|e| e.rank).collect();
        assert_eq!(values, vec![0.0, 2.0, 1.0]);
        assert_eq!(ranks, vec![3, 1, 2]);
    }

    #[test]
    fn all_zero_coefficients_rank_in_schema_order() {
        let model = LogRegModel {
            coefficients: vec![0.0, 0.0, 0.0],
            intercept: 0.0,
            c_inverse_reg: 1.0,
        };
        let report = lr_importance(&model, &schema3());
        let ranks: Vec<usize> = report.entries.iter().map(|e| e.rank).collect();
        assert_eq!(ranks, vec![1, 2, 3]);
    }

    #[test]
    fn lr_importance_invariant_to_raw_feature_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let y: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(2.0 * r[0] - r[1] + rng.gen_range(-0.5..0.5) > 0.0))
            .collect();
        let fit = |rows: &[Vec<f64>]| {
            let x = Matrix::from_vec_rows(rows);
            let s = Standardizer::fit(&x).unwrap();
            let xs = s.transform(&x).unwrap();
            crate::learn::fit_logreg_l1(&xs, &y, None, &crate::learn::LogRegParams::default())
                .unwrap()
        };
        let base = fit(&rows);
        let scaled_rows: Vec<Vec<f64>> =
            rows.iter().map(|r| vec![r[0] * 1000.0, r[1]]).collect();
        let scaled = fit(&scaled_rows);
        let schema = schema3().subset(&[0, 1]);
        let rank_argmax = |m: &LogRegModel| {
            lr_importance(m, &schema)
                .entries
                .iter()
                .position(|e| e.rank == 1)
                .unwrap()
        };
        assert_eq!(rank_argmax(&base), rank_argmax(&scaled));
    }

    fn leaf(weight: f64, n: usize, impurity: f64) -> Node {
        Node {
            weight,
            n_samples: n,
            impurity,
            kind: NodeKind::Leaf {
                class: 0,
                n_pos: 0,
                n_neg: n,
            },
        }
    }

    #[test]
    fn rf_importance_single_stump_is_all_on_one_feature() {
        let tree = Tree {
            nodes: vec![
                Node {
                    weight: 10.0,
                    n_samples: 10,
                    impurity: 0.5,
                    kind: NodeKind::Split {
                        feature: 1,
                        threshold: 0.0,
                        left: 1,
                        right: 2,
                    },
                },
                leaf(5.0, 5, 0.0),
                leaf(5.0, 5, 0.0),
            ],
        };
        let model = ForestModel {
            trees: vec![tree],
            n_features: 3,
            params: ForestParams::default(),
        };
        let report = rf_gini_importance(&model, &schema3());
        let values: Vec<f64> = report.entries.iter().map(|e| e.value).collect();
        assert_eq!(values, vec![0.0, 1.0, 0.0]);
        assert_eq!(report.entries[1].rank, 1);
    }

    #[test]
    fn rf_importance_matches_hand_computed_two_tree_forest() {
        // Tree 1 splits feature 0 at the root: decrease 10·0.5 − 4·0.2 −
        // 6·0.1 = 3.6. Tree 2 splits feature 0 at the root (decrease
        // 10·0.4 − 5·0.0 − 5·0.3 = 2.5), and its right child splits
        // feature 2 (decrease 5·0.3 − 2·0.0 − 3·0.0 = 1.5). Feature means
        // over trees: f0 = (3.6 + 2.5)/2 = 3.05, f2 = 1.5/2 = 0.75;
        // normalized to sum one.
        let tree1 = Tree {
            nodes: vec![
                Node {
                    weight: 10.0,
                    n_samples: 10,
                    impurity: 0.5,
                    kind: NodeKind::Split {
                        feature: 0,
                        threshold: 1.0,
                        left: 1,
                        right: 2,
                    },
                },
                leaf(4.0, 4, 0.2),
                leaf(6.0, 6, 0.1),
            ],
        };
        let tree2 = Tree {
            nodes: vec![
                Node {
                    weight: 10.0,
                    n_samples: 10,
                    impurity: 0.4,
                    kind: NodeKind::Split {
                        feature: 0,
                        threshold: 2.0,
                        left: 1,
                        right: 2,
                    },
                },
                leaf(5.0, 5, 0.0),
                Node {
                    weight: 5.0,
                    n_samples: 5,
                    impurity: 0.3,
                    kind: NodeKind::Split {
                        feature: 2,
                        threshold: 0.5,
                        left: 3,
                        right: 4,
                    },
                },
                leaf(2.0, 2, 0.0),
                leaf(3.0, 3, 0.0),
            ],
        };
        let model = ForestModel {
            trees: vec![tree1, tree2],
            n_features: 3,
            params: ForestParams::default(),
        };
        let report = rf_gini_importance(&model, &schema3());
        let values: Vec<f64> = report.entries.iter().map(|e| e.value).collect();
        let expect0 = 3.05 / (3.05 + 0.75);
        let expect2 = 0.75 / (3.05 + 0.75);
        assert!((values[0] - expect0).abs() < 1e-12);
        assert_eq!(values[1], 0.0);
        assert!((values[2] - expect2).abs() < 1e-12);
        let sum: f64 = values.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hgb_importance_bookkeeping() {
        // Zero-iteration model: all zeros.
        let empty = HgbModel {
            bin_edges: vec![vec![], vec![], vec![]],
            base_score: 0.0,
            learning_rate: 0.1,
            trees: vec![],
            params: HgbParams::default(),
        };
        let report = hgb_gain_importance(&empty, &schema3());
        assert!(report.entries.iter().all(|e| e.value == 0.0));

        // One split with gain g lands entirely on its feature.
        let model = HgbModel {
            bin_edges: vec![vec![0.5], vec![0.5], vec![0.5]],
            base_score: 0.0,
            learning_rate: 0.1,
            trees: vec![HgbTree {
                nodes: vec![
                    HgbNode::Split {
                        feature: 2,
                        bin_threshold: 0,
                        gain: 7.25,
                        left: 1,
                        right: 2,
                    },
                    HgbNode::Leaf { value: -1.0 },
                    HgbNode::Leaf { value: 1.0 },
                ],
            }],
            params: HgbParams::default(),
        };
        let report = hgb_gain_importance(&model, &schema3());
        let values: Vec<f64> = report.entries.iter().map(|e| e.value).collect();
        assert_eq!(values, vec![0.0, 0.0, 7.25]);
    }

    #[test]
    fn hgb_importance_totals_equal_sum_of_recorded_gains() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let x = Matrix::from_vec_rows(&rows);
        let y: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(r[0] - r[2] + rng.gen_range(-0.5..0.5) > 0.0))
            .collect();
        let model = crate::learn::fit_hgb(
            &x,
            &y,
            &HgbParams {
                n_iterations: 12,
                ..Default::default()
            },
            None,
            3,
        )
        .unwrap();
        let total_gains: f64 = model
            .trees
            .iter()
            .flat_map(|t| t.nodes.iter())
            .filter_map(|n| match n {
                HgbNode::Split { gain, .. } => Some(*gain),
                HgbNode::Leaf { .. } => None,
            })
            .sum();
        let schema = FeatureSchema::from_defs(
            TargetKind::FeederIgnition,
            (0..4)
                .map(|i| FeatureDef {
                    name: format!("f{i}"),
                    category: FeatureCategory::PrimaryClimate,
                    weather: false,
                })
                .collect(),
        )
        .unwrap();
        let report = hgb_gain_importance(&model, &schema);
        let total_reported: f64 = report.entries.iter().map(|e| e.value).sum();
        assert!((total_gains - total_reported).abs() < 1e-9);
    }

    /// Signal on the derived feature only; primary and static are noise.
    fn category_signal_dataset(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = schema3();
        let mut x = Matrix::zeros(0, 3);
        let mut y = Vec::new();
        let mut meta = Vec::new();
        for i in 0..800 {
            let a = rng.gen_range(-1.0..1.0);
            let b = rng.gen_range(-1.0..1.0);
            let c = rng.gen_range(-1.0..1.0);
            x.push_row(&[a, b, c]);
            let p = 1.0 / (1.0 + (-(3.0 * b - 1.2)).exp());
            y.push(u8::from(rng.gen_bool(p)));
            let date = if i % 3 == 2 {
                NaiveDate::from_ymd_opt(2019, 7, 1 + (i % 28) as u32).unwrap()
            } else {
                NaiveDate::from_ymd_opt(2018, 1 + (i % 12) as u32, 1 + (i % 28) as u32).unwrap()
            };
            meta.push(RowMeta {
                circuit_id: format!("c{:02}", i % 10),
                date,
                cause: Some(if i % 2 == 0 {
                    Cause::VegetationContact
                } else {
                    Cause::EquipmentFailure
                }),
            });
        }
        let n_pos = y.iter().filter(|&&v| v == 1).count() as u64;
        Dataset {
            schema,
            summary: DatasetSummary {
                n_pos,
                n_neg: y.len() as u64 - n_pos,
                ..DatasetSummary::default()
            },
            x,
            y,
            meta,
        }
    }

    fn spec(seed: u64) -> ExperimentSpec {
        ExperimentSpec {
            algorithm: AlgorithmKind::LogisticRegression,
            strategy: Strategy::Undersample,
            smote_k_neighbors: 5,
            candidates: lr_grid(&[1.0]),
            cv_folds: 5,
            cv_repeats: 2,
            train_window: DateWindow::new(
                NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
                NaiveDate::from_ymd_opt(2018, 12, 31).unwrap(),
            )
            .unwrap(),
            test_window: DateWindow::new(
                NaiveDate::from_ymd_opt(2019, 6, 1).unwrap(),
                NaiveDate::from_ymd_opt(2019, 11, 30).unwrap(),
            )
            .unwrap(),
            seed,
        }
    }

    #[test]
    fn ablation_identity_subset_reproduces_run_experiment() {
        let dataset = category_signal_dataset(5);
        let spec = spec(17);
        let all = vec![vec![
            FeatureCategory::PrimaryClimate,
            FeatureCategory::Derived,
            FeatureCategory::StaticInfrastructure,
            FeatureCategory::DynamicInfrastructure,
        ]];
        let table = ablation_run(&dataset, &all, &spec).unwrap();
        let (report, _) = run_experiment(&dataset, &spec).unwrap();
        let chosen = report.cv.chosen_candidate();
        assert_eq!(table.rows[0].test_auc, report.test_auc);
        assert_eq!(table.rows[0].cv_mean_auc, chosen.mean_auc);
        assert_eq!(table.rows[0].cv_std_auc, chosen.std_auc);
    }

    #[test]
    fn ablation_detects_where_the_signal_lives() {
        let dataset = category_signal_dataset(6);
        let spec = spec(23);
        let combos = vec![
            vec![FeatureCategory::Derived],
            vec![FeatureCategory::PrimaryClimate],
        ];
        let table = ablation_run(&dataset, &combos, &spec).unwrap();
        assert!(
            table.rows[0].test_auc > table.rows[1].test_auc + 0.05,
            "derived {} vs primary {}",
            table.rows[0].test_auc,
            table.rows[1].test_auc
        );
        // Empty feature set errors.
        let empty = vec![vec![FeatureCategory::DynamicInfrastructure]];
        assert!(ablation_run(&dataset, &empty, &spec).is_err());
    }

    #[test]
    fn feature_drop_reruns_without_named_columns() {
        let dataset = category_signal_dataset(9);
        let spec = spec(41);
        // Dropping the only informative feature collapses performance.
        let rows = feature_drop_run(
            &dataset,
            &[vec![], vec!["b".into()]],
            &spec,
        )
        .unwrap();
        assert_eq!(rows[0].n_features, 3);
        assert_eq!(rows[1].n_features, 2);
        assert!(
            rows[0].test_auc > rows[1].test_auc + 0.1,
            "full {} vs dropped-signal {}",
            rows[0].test_auc,
            rows[1].test_auc
        );
        assert!(feature_drop_run(&dataset, &[vec!["nope".into()]], &spec).is_err());
    }

    #[test]
    fn cause_comparison_skips_absent_causes() {
        let dataset = category_signal_dataset(7);
        let spec = spec(31);
        let results = cause_model_comparison(
            &dataset,
            &[Cause::VegetationContact, Cause::ThirdParty],
            &spec,
        )
        .unwrap();
        assert_eq!(results.len(), 3);
        assert!(matches!(results[0].outcome, CauseModelOutcome::Report(_)));
        assert!(matches!(results[1].outcome, CauseModelOutcome::Report(_)));
        // No third-party events exist in the corpus.
        match &results[2].outcome {
            CauseModelOutcome::Skipped { reason } => {
                assert!(reason.contains("third_party"), "{reason}")
            }
            CauseModelOutcome::Report(_) => panic!("third-party model should be skipped"),
        }
    }

    #[test]
    fn importance_dispatch_checks_feature_count() {
        let model = FittedModel::LogReg {
            model: LogRegModel {
                coefficients: vec![1.0, 2.0],
                intercept: 0.0,
                c_inverse_reg: 1.0,
            },
            standardizer: Standardizer {
                means: vec![0.0, 0.0],
                stds: vec![1.0, 1.0],
            },
        };
        assert!(importance_of(&model, &schema3()).is_err());
        let _ = MaxFeatures::Sqrt; // silence unused-import lint paths
    }
}
