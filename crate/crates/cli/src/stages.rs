//! Pipeline stages. Each writes its artifacts under `<out>/<stage>/` plus a
//! manifest, never touching a prior stage's directory, and logs one line
//! per table with row counts and wall time.

use std::path::PathBuf;
use std::time::Instant;

use gridfire::evaluate::{
    auc, confusion_at, cv_select, render_results_table, roc_curve, write_roc_csv, CvReport,
    EvaluationReport,
};
use gridfire::featurize::{
    assemble_panel, read_matrix_csv, read_schema_csv, temporal_split, trailing_weather_variant,
    write_matrix_csv, write_schema_csv, Dataset, DatasetSummary,
};
use gridfire::importance::{
    ablation_run, cause_model_comparison, compare_trailing_weather, feature_drop_run,
    importance_of, CauseModelOutcome,
};
use gridfire::ingest::{
    load_corpus, write_circuits_geojson, write_events_csv, write_gridmet_csv,
    write_station_daily_csv, write_trees_csv, Cause, CauseMap, Corpus, CorpusPaths,
};
use gridfire::learn::{load_model, save_model};
use gridfire::resample;
use gridfire::{derive_seed, synth};

use crate::config::Resolved;
use crate::manifest::Manifest;

pub struct StageContext {
    pub out: PathBuf,
    pub resolved: Resolved,
    pub config_sha256: String,
}

impl StageContext {
    fn manifest(&self, stage: &str) -> Manifest {
        Manifest::new(stage, self.config_sha256.clone(), self.resolved.seed)
    }

    fn stage_dir(&self, stage: &str) -> anyhow::Result<PathBuf> {
        let dir = self.out.join(stage);
        std::fs::create_dir_all(&dir)
            .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", dir.display()))?;
        Ok(dir)
    }

    fn require(&self, stage: &str, name: &str) -> anyhow::Result<PathBuf> {
        let path = self.out.join(stage).join(name);
        if !path.exists() {
            anyhow::bail!(
                "missing prerequisite artifact {}: run `{stage}` first",
                path.display()
            );
        }
        Ok(path)
    }
}

fn log(stage: &str, start: Instant, message: &str) {
    eprintln!("[{stage}] {message} (wall={:.2}s)", start.elapsed().as_secs_f64());
}

// ── synth ────────────────────────────────────────────────────────────────

pub fn cmd_synth(ctx: &StageContext) -> anyhow::Result<()> {
    let start = Instant::now();
    let dir = ctx.stage_dir("synth")?;
    let config = ctx.resolved.config.synth_config(ctx.resolved.seed)?;
    let output = synth::generate(&config, &dir)?;
    log(
        "synth",
        start,
        &format!(
            "circuits={} ignitions={} wiredowns={} realized_rate={:.6}",
            config.n_feeders + config.n_transmission,
            output.n_ignitions,
            output.n_wiredowns,
            output.realized_rate
        ),
    );
    let mut manifest = ctx.manifest("synth");
    for name in [
        "circuits.geojson",
        "gridmet.csv",
        "station_hourly.csv",
        "trees.csv",
        "events.csv",
        "truth.csv",
    ] {
        manifest.record_artifact(name, &dir.join(name))?;
    }
    manifest.write(&dir)
}

// ── ingest ───────────────────────────────────────────────────────────────

fn input_paths(ctx: &StageContext) -> anyhow::Result<CorpusPaths> {
    let inputs = &ctx.resolved.config.inputs;
    let need = |name: &str, path: &Option<PathBuf>| -> anyhow::Result<PathBuf> {
        match path {
            Some(p) if p.exists() => Ok(p.clone()),
            Some(p) => anyhow::bail!("inputs.{name} does not exist: {}", p.display()),
            None => anyhow::bail!("inputs.{name} is not set in the config"),
        }
    };
    let station_hourly = match &inputs.station_hourly {
        Some(p) if p.exists() => Some(p.clone()),
        Some(p) => anyhow::bail!("inputs.station_hourly does not exist: {}", p.display()),
        None => None,
    };
    let station_daily = match &inputs.station_daily {
        Some(p) if p.exists() => Some(p.clone()),
        Some(p) => anyhow::bail!("inputs.station_daily does not exist: {}", p.display()),
        None => None,
    };
    if station_hourly.is_some() == station_daily.is_some() {
        anyhow::bail!("set exactly one of inputs.station_hourly / inputs.station_daily");
    }
    Ok(CorpusPaths {
        circuits: need("circuits", &inputs.circuits)?,
        gridmet: need("gridmet", &inputs.gridmet)?,
        station_hourly,
        station_daily,
        trees: need("trees", &inputs.trees)?,
        events: need("events", &inputs.events)?,
    })
}

pub fn cmd_ingest(ctx: &StageContext) -> anyhow::Result<()> {
    let start = Instant::now();
    let paths = input_paths(ctx)?;
    let corpus = load_corpus(&paths, &CauseMap::default())?;
    let dir = ctx.stage_dir("ingest")?;
    write_circuits_geojson(&dir.join("circuits.geojson"), &corpus.circuits)?;
    write_gridmet_csv(&dir.join("gridmet.csv"), &corpus.weather)?;
    write_station_daily_csv(&dir.join("station_daily.csv"), &corpus.station_days)?;
    write_trees_csv(&dir.join("trees.csv"), &corpus.trees)?;
    write_events_csv(&dir.join("events.csv"), &corpus.events)?;
    log(
        "ingest",
        start,
        &format!(
            "circuits={} weather_rows={} station_days={} trees={} events={}",
            corpus.circuits.len(),
            corpus.weather.len(),
            corpus.station_days.len(),
            corpus.trees.len(),
            corpus.events.len()
        ),
    );
    let mut manifest = ctx.manifest("ingest");
    manifest.record_input("circuits", &paths.circuits)?;
    manifest.record_input("gridmet", &paths.gridmet)?;
    if let Some(p) = &paths.station_hourly {
        manifest.record_input("station_hourly", p)?;
    }
    if let Some(p) = &paths.station_daily {
        manifest.record_input("station_daily", p)?;
    }
    manifest.record_input("trees", &paths.trees)?;
    manifest.record_input("events", &paths.events)?;
    for name in [
        "circuits.geojson",
        "gridmet.csv",
        "station_daily.csv",
        "trees.csv",
        "events.csv",
    ] {
        manifest.record_artifact(name, &dir.join(name))?;
    }
    manifest.write(&dir)
}

fn load_canonical_corpus(ctx: &StageContext) -> anyhow::Result<Corpus> {
    let paths = CorpusPaths {
        circuits: ctx.require("ingest", "circuits.geojson")?,
        gridmet: ctx.require("ingest", "gridmet.csv")?,
        station_hourly: None,
        station_daily: Some(ctx.require("ingest", "station_daily.csv")?),
        trees: ctx.require("ingest", "trees.csv")?,
        events: ctx.require("ingest", "events.csv")?,
    };
    Ok(load_corpus(&paths, &CauseMap::default())?)
}

// ── featurize ────────────────────────────────────────────────────────────

pub fn cmd_featurize(ctx: &StageContext) -> anyhow::Result<()> {
    let start = Instant::now();
    let corpus = load_canonical_corpus(ctx)?;
    let config = &ctx.resolved.config;
    let target = config.target()?;
    let panel = assemble_panel(&corpus, target, &config.radii(), config.feature_window()?)?;
    let dataset = panel.finalize()?;
    let dir = ctx.stage_dir("featurize")?;
    write_matrix_csv(&dir.join("matrix.csv"), &dataset)?;
    write_schema_csv(&dir.join("schema.csv"), &dataset.schema)?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&dataset.summary)? + "\n",
    )?;
    log(
        "featurize",
        start,
        &format!(
            "rows={} pos={} neg={} dropped={} dropped_positive={} imbalance={:.6}",
            dataset.n_rows(),
            dataset.summary.n_pos,
            dataset.summary.n_neg,
            dataset.summary.n_dropped,
            dataset.summary.n_dropped_positive,
            dataset.summary.imbalance_degree()
        ),
    );

    let mut manifest = ctx.manifest("featurize");
    for name in [
        "circuits.geojson",
        "gridmet.csv",
        "station_daily.csv",
        "trees.csv",
        "events.csv",
    ] {
        manifest.record_input(name, &ctx.out.join("ingest").join(name))?;
    }
    manifest.record_artifact("matrix.csv", &dir.join("matrix.csv"))?;
    manifest.record_artifact("schema.csv", &dir.join("schema.csv"))?;
    manifest.record_artifact("summary.json", &dir.join("summary.json"))?;

    if config.ablate.trailing_weather {
        let variant = trailing_weather_variant(&panel, config.featurize.trailing_window_days);
        let trailing = variant.finalize()?;
        write_matrix_csv(&dir.join("matrix_trailing.csv"), &trailing)?;
        std::fs::write(
            dir.join("summary_trailing.json"),
            serde_json::to_string_pretty(&trailing.summary)? + "\n",
        )?;
        log(
            "featurize",
            start,
            &format!(
                "trailing variant rows={} dropped={}",
                trailing.n_rows(),
                trailing.summary.n_dropped
            ),
        );
        manifest.record_artifact("matrix_trailing.csv", &dir.join("matrix_trailing.csv"))?;
        manifest.record_artifact("summary_trailing.json", &dir.join("summary_trailing.json"))?;
    }
    manifest.write(&dir)
}

fn load_dataset(ctx: &StageContext, matrix_name: &str) -> anyhow::Result<Dataset> {
    let schema_path = ctx.require("featurize", "schema.csv")?;
    let matrix_path = ctx.require("featurize", matrix_name)?;
    let schema = read_schema_csv(&schema_path, ctx.resolved.config.target()?)?;
    let mut dataset = read_matrix_csv(&matrix_path, &schema)?;
    // Restore the featurize run's drop statistics.
    let summary_name = if matrix_name == "matrix.csv" {
        "summary.json"
    } else {
        "summary_trailing.json"
    };
    if let Ok(path) = ctx.require("featurize", summary_name) {
        let text = std::fs::read_to_string(path)?;
        let stored: DatasetSummary = serde_json::from_str(&text)?;
        dataset.summary = stored;
    }
    Ok(dataset)
}

// ── train ────────────────────────────────────────────────────────────────

pub fn cmd_train(ctx: &StageContext) -> anyhow::Result<()> {
    let start = Instant::now();
    let config = &ctx.resolved.config;
    let dataset = load_dataset(ctx, "matrix.csv")?;
    let spec = config.experiment_spec(ctx.resolved.seed)?;
    let (train, _test) = temporal_split(&dataset, spec.train_window, spec.test_window)?;
    if train.n_rows() == 0 {
        anyhow::bail!("temporal split produced an empty training window");
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
    log(
        "train",
        start,
        &format!(
            "cv candidates={} chosen={} mean_auc={:.4} std={:.4}",
            cv.candidates.len(),
            chosen.describe(),
            cv.chosen_candidate().mean_auc,
            cv.chosen_candidate().std_auc
        ),
    );
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

    let dir = ctx.stage_dir("train")?;
    save_model(&dir.join("model.json"), &model)?;
    std::fs::write(
        dir.join("cv_report.json"),
        serde_json::to_string_pretty(&cv)? + "\n",
    )?;
    log("train", start, "model written");

    let mut manifest = ctx.manifest("train");
    manifest.record_input("matrix.csv", &ctx.out.join("featurize").join("matrix.csv"))?;
    manifest.record_input("schema.csv", &ctx.out.join("featurize").join("schema.csv"))?;
    manifest.record_artifact("model.json", &dir.join("model.json"))?;
    manifest.record_artifact("cv_report.json", &dir.join("cv_report.json"))?;
    manifest.write(&dir)
}

// ── evaluate ─────────────────────────────────────────────────────────────

pub fn cmd_evaluate(ctx: &StageContext) -> anyhow::Result<()> {
    let start = Instant::now();
    let config = &ctx.resolved.config;
    let dataset = load_dataset(ctx, "matrix.csv")?;
    let model_path = ctx.require("train", "model.json")?;
    let cv_path = ctx.require("train", "cv_report.json")?;
    let model = load_model(&model_path)?;
    let cv: CvReport = serde_json::from_str(&std::fs::read_to_string(&cv_path)?)?;

    let spec = config.experiment_spec(ctx.resolved.seed)?;
    let (train, test) = temporal_split(&dataset, spec.train_window, spec.test_window)?;
    if test.n_rows() == 0 {
        anyhow::bail!("temporal split produced an empty test window");
    }
    let scores = model.score(&test.x)?;
    let test_auc = auc(&scores, &test.y)?;
    let roc = roc_curve(&scores, &test.y)?;
    let confusion = confusion_at(&scores, &test.y, 0.5);
    let report = EvaluationReport {
        algorithm: config.algorithm()?,
        strategy: config.strategy()?,
        chosen_description: cv.chosen_candidate().description.clone(),
        cv,
        test_auc,
        roc,
        confusion,
        train_summary: train.summary,
        test_summary: test.summary,
        seed: ctx.resolved.seed,
    };

    let dir = ctx.stage_dir("evaluate")?;
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    write_roc_csv(&dir.join("roc.csv"), &report.roc)?;
    std::fs::write(dir.join("results_table.csv"), render_results_table(std::slice::from_ref(&report)))?;
    log(
        "evaluate",
        start,
        &format!(
            "test_auc={:.4} tp={} fp={} tn={} fn={}",
            report.test_auc,
            report.confusion.tp,
            report.confusion.fp,
            report.confusion.tn,
            report.confusion.fn_
        ),
    );

    let mut manifest = ctx.manifest("evaluate");
    manifest.record_input("matrix.csv", &ctx.out.join("featurize").join("matrix.csv"))?;
    manifest.record_input("model.json", &model_path)?;
    manifest.record_input("cv_report.json", &cv_path)?;
    for name in ["report.json", "roc.csv", "results_table.csv"] {
        manifest.record_artifact(name, &dir.join(name))?;
    }
    manifest.write(&dir)
}

// ── importance ───────────────────────────────────────────────────────────

pub fn cmd_importance(ctx: &StageContext) -> anyhow::Result<()> {
    let start = Instant::now();
    let config = &ctx.resolved.config;
    let schema_path = ctx.require("featurize", "schema.csv")?;
    let schema = read_schema_csv(&schema_path, config.target()?)?;
    let model_path = ctx.require("train", "model.json")?;
    let model = load_model(&model_path)?;
    let report = importance_of(&model, &schema)?;

    let dir = ctx.stage_dir("importance")?;
    report.write_csv(&dir.join("importance.csv"))?;
    let k = config.importance.top_k;
    let top_path = dir.join(format!("importance_top{k}.csv"));
    {
        use std::io::Write;
        let mut file = std::fs::File::create(&top_path)?;
        writeln!(file, "rank,feature,category,value")?;
        for entry in report.top_k(k) {
            writeln!(
                file,
                "{},{},{},{}",
                entry.rank, entry.feature, entry.category, entry.value
            )?;
        }
    }
    log(
        "importance",
        start,
        &format!("method={} features={}", report.method, report.entries.len()),
    );

    let mut manifest = ctx.manifest("importance");
    manifest.record_input("model.json", &model_path)?;
    manifest.record_input("schema.csv", &schema_path)?;
    manifest.record_artifact("importance.csv", &dir.join("importance.csv"))?;
    manifest.record_artifact(
        &format!("importance_top{k}.csv"),
        &top_path,
    )?;
    manifest.write(&dir)
}

// ── ablate ───────────────────────────────────────────────────────────────

pub fn cmd_ablate(ctx: &StageContext) -> anyhow::Result<()> {
    let start = Instant::now();
    let config = &ctx.resolved.config;
    let dataset = load_dataset(ctx, "matrix.csv")?;
    let spec = config.experiment_spec(ctx.resolved.seed)?;
    let dir = ctx.stage_dir("ablate")?;
    let mut manifest = ctx.manifest("ablate");
    manifest.record_input("matrix.csv", &ctx.out.join("featurize").join("matrix.csv"))?;

    let mut combos = Vec::new();
    for group in &config.ablate.groups {
        combos.push(config.parse_group(group)?);
    }
    let table = ablation_run(&dataset, &combos, &spec)?;
    std::fs::write(dir.join("ablation.csv"), table.to_csv())?;
    manifest.record_artifact("ablation.csv", &dir.join("ablation.csv"))?;
    log("ablate", start, &format!("group combinations={}", table.rows.len()));

    if !config.ablate.drop_feature_sets.is_empty() {
        let rows = feature_drop_run(&dataset, &config.ablate.drop_feature_sets, &spec)?;
        let mut csv = String::from("dropped,n_features,cv_mean_auc,cv_std_auc,test_auc\n");
        for row in &rows {
            csv.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                row.dropped.join("+"),
                row.n_features,
                row.cv_mean_auc,
                row.cv_std_auc,
                row.test_auc
            ));
        }
        std::fs::write(dir.join("feature_drop.csv"), csv)?;
        manifest.record_artifact("feature_drop.csv", &dir.join("feature_drop.csv"))?;
        log("ablate", start, &format!("feature-drop runs={}", rows.len()));
    }

    if config.ablate.trailing_weather {
        let trailing = load_dataset(ctx, "matrix_trailing.csv")?;
        let (actual_report, trailing_report) =
            compare_trailing_weather(&dataset, &trailing, &spec)?;
        let comparison = serde_json::json!({
            "auc_actual": actual_report.test_auc,
            "auc_trailing": trailing_report.test_auc,
            "actual": actual_report,
            "trailing": trailing_report,
        });
        std::fs::write(
            dir.join("trailing_comparison.json"),
            serde_json::to_string_pretty(&comparison)? + "\n",
        )?;
        manifest.record_artifact(
            "trailing_comparison.json",
            &dir.join("trailing_comparison.json"),
        )?;
        log(
            "ablate",
            start,
            &format!(
                "trailing comparison auc_actual={:.4} auc_trailing={:.4}",
                actual_report.test_auc, trailing_report.test_auc
            ),
        );
    }

    if config.ablate.cause_models {
        let results = cause_model_comparison(
            &dataset,
            &[Cause::VegetationContact, Cause::EquipmentFailure],
            &spec,
        )?;
        std::fs::write(
            dir.join("cause_models.json"),
            serde_json::to_string_pretty(&results)? + "\n",
        )?;
        manifest.record_artifact("cause_models.json", &dir.join("cause_models.json"))?;
        for result in &results {
            if let CauseModelOutcome::Report(report) = &result.outcome {
                let roc_path = dir.join(format!("roc_{}.csv", result.label));
                write_roc_csv(&roc_path, &report.roc)?;
                manifest.record_artifact(&format!("roc_{}.csv", result.label), &roc_path)?;
            }
        }
        log("ablate", start, &format!("cause models={}", results.len()));
    }
    manifest.write(&dir)
}
