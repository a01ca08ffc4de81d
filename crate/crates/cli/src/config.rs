//! Run configuration: one TOML file drives every stage. Every buffer
//! radius, date window, and CV knob is a named key with the study's value
//! as its default; a seed must come from the file or `--seed` — there is
//! no silent fallback.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use gridfire::evaluate::{hgb_grid, lr_grid, rf_grid, ExperimentSpec};
use gridfire::featurize::{BufferRadii, DateWindow, FeatureCategory, TargetKind};
use gridfire::learn::{AlgorithmKind, MaxFeatures};
use gridfire::resample::Strategy;
use gridfire::synth::{CauseTilt, SynthConfig};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub inputs: InputsConfig,
    #[serde(default)]
    pub featurize: FeaturizeConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub importance: ImportanceConfig,
    #[serde(default)]
    pub ablate: AblateConfig,
    #[serde(default)]
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InputsConfig {
    pub circuits: Option<PathBuf>,
    pub gridmet: Option<PathBuf>,
    pub station_hourly: Option<PathBuf>,
    pub station_daily: Option<PathBuf>,
    pub trees: Option<PathBuf>,
    pub events: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizeConfig {
    pub target: String,
    pub date_start: NaiveDate,
    pub date_end: NaiveDate,
    pub event_buffer_m: f64,
    pub gridmet_buffer_m: f64,
    pub station_buffer_m: f64,
    pub tree_buffer_m: f64,
    /// Days in the trailing-average weather window; the variant matrix is
    /// written alongside the day-of matrix when the ablate section asks
    /// for the comparison.
    pub trailing_window_days: usize,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        FeaturizeConfig {
            target: "feeder_ignition".into(),
            date_start: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
            date_end: NaiveDate::from_ymd_opt(2019, 11, 30).unwrap(),
            event_buffer_m: 100.0,
            gridmet_buffer_m: 3_000.0,
            station_buffer_m: 20_000.0,
            tree_buffer_m: 10.0,
            trailing_window_days: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_start: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
            train_end: NaiveDate::from_ymd_opt(2018, 12, 31).unwrap(),
            test_start: NaiveDate::from_ymd_opt(2019, 6, 1).unwrap(),
            test_end: NaiveDate::from_ymd_opt(2019, 11, 30).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub algorithm: String,
    pub strategy: String,
    pub smote_k_neighbors: usize,
    pub cv_folds: usize,
    pub cv_repeats: usize,
    pub lr_c: Vec<f64>,
    pub rf_trees: usize,
    pub rf_min_samples_split: Vec<usize>,
    pub rf_min_samples_leaf: Vec<usize>,
    /// "sqrt" | "third" | "all" | an integer count.
    pub rf_max_features: Vec<String>,
    pub hgb_iterations: usize,
    pub hgb_learning_rate: Vec<f64>,
    /// 0 means unlimited depth.
    pub hgb_max_depth: Vec<usize>,
    pub hgb_max_leaf_nodes: Vec<usize>,
    pub hgb_max_bins: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            algorithm: "hgb".into(),
            strategy: "undersample".into(),
            smote_k_neighbors: 5,
            cv_folds: 10,
            cv_repeats: 3,
            lr_c: vec![0.01, 0.1, 1.0, 10.0],
            rf_trees: 100,
            rf_min_samples_split: vec![2, 10, 50],
            rf_min_samples_leaf: vec![1, 5, 20],
            rf_max_features: vec!["sqrt".into(), "third".into(), "all".into()],
            hgb_iterations: 100,
            hgb_learning_rate: vec![0.05, 0.1, 0.3],
            hgb_max_depth: vec![3, 6, 0],
            hgb_max_leaf_nodes: vec![15, 31, 63],
            hgb_max_bins: vec![32, 128, 255],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceConfig {
    pub top_k: usize,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig { top_k: 20 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    /// Category combinations, categories joined by '+'.
    pub groups: Vec<String>,
    /// Named-feature removals: each inner list is dropped together and the
    /// remaining columns rerun the full protocol.
    pub drop_feature_sets: Vec<Vec<String>>,
    pub trailing_weather: bool,
    pub cause_models: bool,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            groups: vec![
                "primary_climate".into(),
                "derived".into(),
                "primary_climate+derived".into(),
                "primary_climate+derived+static_infrastructure+dynamic_infrastructure".into(),
            ],
            drop_feature_sets: Vec::new(),
            trailing_weather: true,
            cause_models: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_feeders: usize,
    pub n_transmission: usize,
    pub region_km: f64,
    pub grid_spacing_km: f64,
    pub n_stations: usize,
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub target_rate: f64,
    pub beta: Vec<(String, f64)>,
    pub wiredown_rate: f64,
    pub cause_weights: [f64; 4],
    pub cause_tilts: Vec<(String, String, f64)>,
    pub missing_gust_rate: f64,
    pub daily_noise_scale: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthSection {
            n_feeders: d.n_feeders,
            n_transmission: d.n_transmission,
            region_km: d.region_km,
            grid_spacing_km: d.grid_spacing_km,
            n_stations: d.n_stations,
            start_date: d.start_date,
            n_days: d.n_days,
            origin_lon: d.origin.0,
            origin_lat: d.origin.1,
            target_rate: d.target_rate,
            beta: d.beta,
            wiredown_rate: d.wiredown_rate,
            cause_weights: d.cause_weights,
            cause_tilts: Vec::new(),
            missing_gust_rate: d.missing_gust_rate,
            daily_noise_scale: d.daily_noise_scale,
        }
    }
}

/// Config resolved against the CLI flags: the seed is mandatory by here.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub seed: u64,
}

fn parse_cause(s: &str) -> Result<gridfire::ingest::Cause, String> {
    use gridfire::ingest::Cause;
    match s {
        "vegetation_contact" => Ok(Cause::VegetationContact),
        "third_party" => Ok(Cause::ThirdParty),
        "equipment_failure" => Ok(Cause::EquipmentFailure),
        "unknown" => Ok(Cause::Unknown),
        other => Err(format!("unknown cause `{other}`")),
    }
}

impl Resolved {
    /// Load, apply the seed override, and validate; every violation is
    /// listed in one error.
    pub fn load(path: &Path, seed_override: Option<u64>) -> anyhow::Result<Resolved> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("config parse error in {}: {e}", path.display()))?;
        let seed = seed_override.or(config.seed);
        let mut violations = Vec::new();
        if seed.is_none() {
            violations.push("no seed: set `seed` in the config or pass --seed".to_string());
        }
        if config.target().is_err() {
            violations.push(format!(
                "featurize.target `{}` is not feeder_ignition|transmission_wiredown",
                config.featurize.target
            ));
        }
        if config.featurize.date_end < config.featurize.date_start {
            violations.push("featurize date window is empty".to_string());
        }
        match (config.train_window(), config.test_window()) {
            (Ok(train), Ok(test)) => {
                if train.overlaps(&test) {
                    violations.push("split: train and test windows overlap".to_string());
                }
            }
            _ => violations.push("split windows are empty".to_string()),
        }
        if config.algorithm().is_err() {
            violations.push(format!(
                "model.algorithm `{}` is not lr|rf|hgb",
                config.model.algorithm
            ));
        }
        if config.strategy().is_err() {
            violations.push(format!(
                "model.strategy `{}` is not none|undersample|oversample|smote|balanced_weight",
                config.model.strategy
            ));
        }
        if config.model.cv_folds < 2 {
            violations.push("model.cv_folds must be at least 2".to_string());
        }
        if config.model.cv_repeats < 1 {
            violations.push("model.cv_repeats must be at least 1".to_string());
        }
        if let Ok(kind) = config.algorithm() {
            if config.grid(kind).map(|g| g.is_empty()).unwrap_or(true) {
                violations.push(format!("empty hyperparameter grid for {}", config.model.algorithm));
            }
        }
        for group in &config.ablate.groups {
            if config.parse_group(group).is_err() {
                violations.push(format!("ablate group `{group}` has an unknown category"));
            }
        }
        for (cause, feature, _) in &config.synth.cause_tilts {
            if parse_cause(cause).is_err() {
                violations.push(format!("synth cause tilt names unknown cause `{cause}`"));
            }
            let _ = feature;
        }
        if !violations.is_empty() {
            anyhow::bail!("invalid config: {}", violations.join("; "));
        }
        Ok(Resolved {
            config,
            seed: seed.unwrap(),
        })
    }
}

impl RunConfig {
    pub fn target(&self) -> anyhow::Result<TargetKind> {
        match self.featurize.target.as_str() {
            "feeder_ignition" => Ok(TargetKind::FeederIgnition),
            "transmission_wiredown" => Ok(TargetKind::TransmissionWireDown),
            other => anyhow::bail!("unknown target `{other}`"),
        }
    }

    pub fn algorithm(&self) -> anyhow::Result<AlgorithmKind> {
        match self.model.algorithm.as_str() {
            "lr" => Ok(AlgorithmKind::LogisticRegression),
            "rf" => Ok(AlgorithmKind::RandomForest),
            "hgb" => Ok(AlgorithmKind::HistGradientBoosting),
            other => anyhow::bail!("unknown algorithm `{other}`"),
        }
    }

    pub fn strategy(&self) -> anyhow::Result<Strategy> {
        match self.model.strategy.as_str() {
            "none" => Ok(Strategy::None),
            "undersample" => Ok(Strategy::Undersample),
            "oversample" => Ok(Strategy::Oversample),
            "smote" => Ok(Strategy::Smote),
            "balanced_weight" => Ok(Strategy::BalancedWeight),
            other => anyhow::bail!("unknown strategy `{other}`"),
        }
    }

    pub fn radii(&self) -> BufferRadii {
        BufferRadii {
            event_m: self.featurize.event_buffer_m,
            gridmet_m: self.featurize.gridmet_buffer_m,
            station_m: self.featurize.station_buffer_m,
            trees_m: self.featurize.tree_buffer_m,
        }
    }

    pub fn feature_window(&self) -> anyhow::Result<DateWindow> {
        Ok(DateWindow::new(self.featurize.date_start, self.featurize.date_end)?)
    }

    pub fn train_window(&self) -> anyhow::Result<DateWindow> {
        Ok(DateWindow::new(self.split.train_start, self.split.train_end)?)
    }

    pub fn test_window(&self) -> anyhow::Result<DateWindow> {
        Ok(DateWindow::new(self.split.test_start, self.split.test_end)?)
    }

    pub fn grid(&self, kind: AlgorithmKind) -> anyhow::Result<Vec<gridfire::learn::AlgoCandidate>> {
        let m = &self.model;
        Ok(match kind {
            AlgorithmKind::LogisticRegression => lr_grid(&m.lr_c),
            AlgorithmKind::RandomForest => {
                let mut feats = Vec::new();
                for s in &m.rf_max_features {
                    feats.push(match s.as_str() {
                        "sqrt" => MaxFeatures::Sqrt,
                        "third" => MaxFeatures::Third,
                        "all" => MaxFeatures::All,
                        other => match other.parse::<usize>() {
                            Ok(k) => MaxFeatures::Count(k),
                            Err(_) => anyhow::bail!(
                                "rf_max_features entry `{other}` is not sqrt|third|all|<count>"
                            ),
                        },
                    });
                }
                rf_grid(m.rf_trees, &m.rf_min_samples_split, &m.rf_min_samples_leaf, &feats)
            }
            AlgorithmKind::HistGradientBoosting => {
                let depths: Vec<Option<usize>> = m
                    .hgb_max_depth
                    .iter()
                    .map(|&d| if d == 0 { None } else { Some(d) })
                    .collect();
                hgb_grid(
                    m.hgb_iterations,
                    &m.hgb_learning_rate,
                    &depths,
                    &m.hgb_max_leaf_nodes,
                    &m.hgb_max_bins,
                )
            }
        })
    }

    pub fn experiment_spec(&self, seed: u64) -> anyhow::Result<ExperimentSpec> {
        let algorithm = self.algorithm()?;
        Ok(ExperimentSpec {
            algorithm,
            strategy: self.strategy()?,
            smote_k_neighbors: self.model.smote_k_neighbors,
            candidates: self.grid(algorithm)?,
            cv_folds: self.model.cv_folds,
            cv_repeats: self.model.cv_repeats,
            train_window: self.train_window()?,
            test_window: self.test_window()?,
            seed,
        })
    }

    pub fn parse_group(&self, group: &str) -> anyhow::Result<Vec<FeatureCategory>> {
        group
            .split('+')
            .map(|part| {
                part.trim()
                    .parse::<FeatureCategory>()
                    .map_err(|e| anyhow::anyhow!("{e}"))
            })
            .collect()
    }

    pub fn synth_config(&self, seed: u64) -> anyhow::Result<SynthConfig> {
        let s = &self.synth;
        let mut cause_tilts = Vec::new();
        for (cause, feature, weight) in &s.cause_tilts {
            cause_tilts.push(CauseTilt {
                cause: parse_cause(cause).map_err(|e| anyhow::anyhow!(e))?,
                feature: feature.clone(),
                weight: *weight,
            });
        }
        Ok(SynthConfig {
            n_feeders: s.n_feeders,
            n_transmission: s.n_transmission,
            region_km: s.region_km,
            grid_spacing_km: s.grid_spacing_km,
            n_stations: s.n_stations,
            start_date: s.start_date,
            n_days: s.n_days,
            origin: (s.origin_lon, s.origin_lat),
            target_rate: s.target_rate,
            beta: s.beta.clone(),
            wiredown_rate: s.wiredown_rate,
            cause_weights: s.cause_weights,
            cause_tilts,
            missing_gust_rate: s.missing_gust_rate,
            daily_noise_scale: s.daily_noise_scale,
            seed,
        })
    }
}
