//! Deterministic synthetic-corpus generator with known ground truth.
//!
//! Builds a desk-scale corpus in the ingest file schemas: circuits laid out
//! on a jittered grid (so event assignment is unambiguous), weather fields
//! as sums of a few low-frequency spatial sinusoids plus seasonal and
//! day-to-day terms, station hourly series, tree heights sampled along each
//! circuit, and events drawn per circuit-day as Bernoulli(σ(β·z + b)) where
//! z are z-scored feature values from the same aggregation path the
//! pipeline uses. The per-row true probabilities are written to a
//! `truth.csv` sidecar, which is what the Bayes-ceiling checks score
//! against.
//!
//! Every random draw comes from a purpose-derived ChaCha stream, and all
//! iteration orders are canonical, so a seed fully determines every output
//! byte. Generation parallelism is unnecessary at this scale and would buy
//! nothing; files are written in one pass.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::featurize::{assemble_panel, BufferRadii, DateWindow, FeatureSchema, TargetKind};
use crate::ingest::{
    reduce_station_hourly, write_circuits_geojson, write_events_csv, write_gridmet_csv,
    write_station_hourly_csv, write_trees_csv, Cause, Circuit, CircuitKind, CircuitStatic,
    ComponentAges, Corpus, CorpusPaths, DailyWeatherCell, EventKind, EventRecord, StationHourly,
    TreeHeightSample, GRIDMET_FIELDS,
};
use crate::spatial::{invert_to_lonlat, PlanarPoint, Polyline};
use crate::{derive_seed, Error, Result};

/// Multiplies one cause's selection logit by `weight · z(feature)`, letting
/// tests place cause-specific signal (e.g. vegetation contact driven by
/// tree height).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseTilt {
    pub cause: Cause,
    pub feature: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_feeders: usize,
    pub n_transmission: usize,
    /// Square region side, kilometers.
    pub region_km: f64,
    /// Weather grid node spacing, kilometers. Must not exceed ~4 km or
    /// 3-km buffers around short circuits can come up empty.
    pub grid_spacing_km: f64,
    pub n_stations: usize,
    pub start_date: NaiveDate,
    pub n_days: usize,
    /// Projection anchor for the emitted lon/lat files.
    pub origin: (f64, f64),
    /// Target ignition rate per feeder circuit-day. The intercept is
    /// solved from this and the coefficient mass.
    pub target_rate: f64,
    /// Coefficients over z-scored feeder features, by schema name.
    /// Historical-count features are not allowed (they depend on the
    /// events being drawn).
    pub beta: Vec<(String, f64)>,
    /// Flat wire-down rate per circuit-day (all circuits).
    pub wiredown_rate: f64,
    /// Relative weights for vegetation_contact, third_party,
    /// equipment_failure, unknown.
    pub cause_weights: [f64; 4],
    pub cause_tilts: Vec<CauseTilt>,
    /// Probability that a station-hour gust reading is missing; exercises
    /// the drop-missing path when nonzero.
    pub missing_gust_rate: f64,
    /// Scales the day-to-day noise of every gridded weather field. Values
    /// above one make day-of weather matter more than trailing averages.
    pub daily_noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_feeders: 100,
            n_transmission: 0,
            region_km: 44.0,
            grid_spacing_km: 4.0,
            n_stations: 12,
            start_date: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
            n_days: 1460,
            origin: (-122.0, 39.0),
            target_rate: 0.001,
            beta: vec![
                ("max_erc".into(), 0.8),
                ("max_bi".into(), 0.6),
                ("min_rh".into(), -0.5),
                ("max_tree_height_m".into(), 0.5),
            ],
            wiredown_rate: 0.0002,
            cause_weights: [0.35, 0.2, 0.3, 0.15],
            cause_tilts: Vec::new(),
            missing_gust_rate: 0.0,
            daily_noise_scale: 1.0,
            seed: 2016,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub circuit_id: String,
    pub date: NaiveDate,
    pub p: f64,
}

/// What `generate` produced: the written file paths, the truth table, and
/// realized event statistics.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub paths: CorpusPaths,
    pub truth_path: PathBuf,
    pub truth: Vec<TruthRow>,
    pub n_ignitions: usize,
    pub n_wiredowns: usize,
    pub realized_rate: f64,
}

fn validate(config: &SynthConfig) -> Result<()> {
    if config.n_feeders == 0 && config.n_transmission == 0 {
        return Err(Error::Config("need at least one circuit".into()));
    }
    if config.n_days == 0 {
        return Err(Error::Config("n_days must be positive".into()));
    }
    if [config.grid_spacing_km, config.region_km].iter().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::Config("region and grid spacing must be positive".into()));
    }
    if config.n_stations == 0 {
        return Err(Error::Config("need at least one station".into()));
    }
    if config.target_rate.is_nan() || config.target_rate <= 0.0 || config.target_rate >= 0.5 {
        return Err(Error::Config(format!(
            "target_rate {} outside (0, 0.5)",
            config.target_rate
        )));
    }
    let schema = FeatureSchema::feeder();
    for (name, _) in &config.beta {
        if name.starts_with("hist_") {
            return Err(Error::Config(format!(
                "beta may not reference event-count feature `{name}`"
            )));
        }
        if schema.index_of(name).is_none() {
            return Err(Error::Config(format!("unknown beta feature `{name}`")));
        }
    }
    if config.cause_weights.iter().any(|&w| w < 0.0)
        || config.cause_weights.iter().sum::<f64>() <= 0.0
    {
        return Err(Error::Config("cause_weights must be nonnegative, not all zero".into()));
    }
    Ok(())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// A random-walk polyline starting near `anchor`; segment lengths and
/// heading drift come from `rng`.
fn random_polyline(
    id: &str,
    anchor: PlanarPoint,
    n_segments: usize,
    seg_len: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Polyline {
    let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut vertices = vec![anchor];
    let mut current = anchor;
    for _ in 0..n_segments {
        let len = rng.gen_range(seg_len.0..seg_len.1);
        heading += rng.gen_range(-0.7..0.7);
        current = PlanarPoint::new(
            current.x + len * heading.cos(),
            current.y + len * heading.sin(),
        );
        vertices.push(current);
    }
    Polyline::new(id, vertices).expect("generated vertices are distinct")
}

struct FieldModel {
    offset: f64,
    spatial: [(f64, f64, f64, f64); 2], // (amplitude, kx, ky, phase)
    seasonal: (f64, f64),               // (amplitude, phase)
    daily_noise: f64,
}

impl FieldModel {
    fn sample(&self, loc: &PlanarPoint, day: usize, noise: f64) -> f64 {
        let mut v = self.offset;
        for (amp, kx, ky, phase) in self.spatial {
            v += amp * (kx * loc.x + ky * loc.y + phase).sin();
        }
        let (amp, phase) = self.seasonal;
        v += amp * (std::f64::consts::TAU * day as f64 / 365.25 + phase).sin();
        v + self.daily_noise * noise
    }
}

/// Generate the corpus files plus the `truth.csv` sidecar under `out_dir`.
pub fn generate(config: &SynthConfig, out_dir: &Path) -> Result<SynthOutput> {
    validate(config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let region_m = config.region_km * 1000.0;
    let window = DateWindow::new(
        config.start_date,
        config.start_date + chrono::Duration::days(config.n_days as i64 - 1),
    )?;

    // ── circuits on a jittered grid ──────────────────────────────────────
    let n_circuits = config.n_feeders + config.n_transmission;
    let cells_per_side = (n_circuits as f64).sqrt().ceil() as usize;
    let cell_m = region_m / cells_per_side as f64;
    let mut circuits = Vec::with_capacity(n_circuits);
    for i in 0..n_circuits {
        let is_feeder = i < config.n_feeders;
        let circuit_id = if is_feeder {
            format!("feeder_{i:04}")
        } else {
            format!("tline_{:04}", i - config.n_feeders)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("circuit.{circuit_id}")));
        let cell_x = (i % cells_per_side) as f64;
        let cell_y = (i / cells_per_side) as f64;
        let anchor = PlanarPoint::new(
            (cell_x + 0.5 + rng.gen_range(-0.1..0.1)) * cell_m,
            (cell_y + 0.5 + rng.gen_range(-0.1..0.1)) * cell_m,
        );
        let line = if is_feeder {
            random_polyline(&circuit_id, anchor, rng.gen_range(3..=6), (300.0, 800.0), &mut rng)
        } else {
            random_polyline(&circuit_id, anchor, rng.gen_range(2..=4), (1_500.0, 3_000.0), &mut rng)
        };

        let frac_family = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let scale = rng.gen_range(0.8..1.0) / total;
            raw.iter().map(|v| v * scale).collect()
        };
        let attrs = if is_feeder {
            let hftd = frac_family(&mut rng, 4);
            let pole = frac_family(&mut rng, 3);
            let cond = frac_family(&mut rng, 3);
            let wind = frac_family(&mut rng, 3);
            let zone = frac_family(&mut rng, 4);
            let mut ages_by_year = BTreeMap::new();
            let base_xfmr = rng.gen_range(5.0..40.0);
            let base_cond = rng.gen_range(10.0..50.0);
            let base_pole = rng.gen_range(10.0..45.0);
            for year in window.start.year()..=window.end.year() {
                let offset = (year - window.start.year()) as f64;
                ages_by_year.insert(
                    year,
                    ComponentAges {
                        transformer: base_xfmr + offset,
                        conductor: base_cond + offset,
                        pole: base_pole + offset,
                    },
                );
            }
            CircuitStatic {
                circuit_id: circuit_id.clone(),
                kind: CircuitKind::Feeder,
                voltage_kv: *[4.0, 12.0, 21.0].get(rng.gen_range(0..3)).unwrap(),
                length_mi: line.length_m / 1609.344 * rng.gen_range(1.0..1.3),
                hftd_fracs: [hftd[0], hftd[1], hftd[2], hftd[3]],
                overhead_frac: rng.gen_range(0.5..1.0),
                pole_fracs: [pole[0], pole[1], pole[2]],
                conductor_fracs: [cond[0], cond[1], cond[2]],
                wind_code_fracs: [wind[0], wind[1], wind[2]],
                xfmr_zone_fracs: [zone[0], zone[1], zone[2], zone[3]],
                ages_by_year,
            }
        } else {
            CircuitStatic {
                circuit_id: circuit_id.clone(),
                kind: CircuitKind::Transmission,
                voltage_kv: rng.gen_range(60.0..70.0),
                length_mi: line.length_m / 1609.344 * rng.gen_range(1.0..1.1),
                hftd_fracs: [0.0; 4],
                overhead_frac: 0.0,
                pole_fracs: [0.0; 3],
                conductor_fracs: [0.0; 3],
                wind_code_fracs: [0.0; 3],
                xfmr_zone_fracs: [0.0; 4],
                ages_by_year: BTreeMap::new(),
            }
        };
        let lonlat = invert_to_lonlat(&line.vertices, config.origin);
        circuits.push(Circuit {
            attrs,
            parts: vec![line],
            parts_lonlat: vec![lonlat],
        });
    }

    // ── gridded weather ──────────────────────────────────────────────────
    let spacing_m = config.grid_spacing_km * 1000.0;
    let nodes_per_side = (region_m / spacing_m).ceil() as usize + 1;
    let field_models: Vec<FieldModel> = GRIDMET_FIELDS
        .iter()
        .map(|name| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("field.{name}")));
            let wavelength = rng.gen_range(0.5..2.0) * region_m;
            let k = std::f64::consts::TAU / wavelength;
            FieldModel {
                offset: rng.gen_range(10.0..100.0),
                spatial: [
                    (
                        rng.gen_range(2.0..10.0),
                        k * rng.gen_range(0.5..1.5),
                        k * rng.gen_range(0.5..1.5),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    ),
                    (
                        rng.gen_range(1.0..5.0),
                        2.3 * k * rng.gen_range(0.5..1.5),
                        2.3 * k * rng.gen_range(0.5..1.5),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    ),
                ],
                seasonal: (rng.gen_range(2.0..8.0), rng.gen_range(0.0..std::f64::consts::TAU)),
                daily_noise: rng.gen_range(1.0..4.0) * config.daily_noise_scale,
            }
        })
        .collect();

    let mut weather = Vec::with_capacity(nodes_per_side * nodes_per_side * config.n_days);
    for gy in 0..nodes_per_side {
        for gx in 0..nodes_per_side {
            let cell_id = format!("cell_{gx:03}_{gy:03}");
            let loc = PlanarPoint::new(gx as f64 * spacing_m, gy as f64 * spacing_m);
            let lonlat = invert_to_lonlat(&[loc], config.origin)[0];
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("cell.{cell_id}")));
            for day in 0..config.n_days {
                let mut values = [None; 13];
                for (f, model) in field_models.iter().enumerate() {
                    let noise: f64 = rng.gen_range(-1.0..1.0);
                    values[f] = Some(model.sample(&loc, day, noise));
                }
                weather.push(DailyWeatherCell {
                    cell_id: cell_id.clone(),
                    lonlat,
                    location: loc,
                    date: window.day(day),
                    values,
                });
            }
        }
    }

    // ── station hourly series ────────────────────────────────────────────
    let station_side = (config.n_stations as f64).sqrt().ceil() as usize;
    let mut station_hourly = Vec::new();
    for s in 0..config.n_stations {
        let station_id = format!("stn_{s:03}");
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("station.{station_id}")));
        let sx = (s % station_side) as f64 + 0.5;
        let sy = (s / station_side) as f64 + 0.5;
        let loc = PlanarPoint::new(
            (sx / station_side as f64) * region_m + rng.gen_range(-0.02..0.02) * region_m,
            (sy / station_side as f64) * region_m + rng.gen_range(-0.02..0.02) * region_m,
        );
        let lonlat = invert_to_lonlat(&[loc], config.origin)[0];
        let ws_base = rng.gen_range(2.0..6.0);
        let t_base = rng.gen_range(10.0..25.0);
        for day in 0..config.n_days {
            let date = window.day(day);
            let season = (std::f64::consts::TAU * day as f64 / 365.25).sin();
            for hour in (0..24).step_by(3) {
                let diurnal = (std::f64::consts::TAU * hour as f64 / 24.0).sin();
                let ws = (ws_base + 2.0 * season + 1.5 * diurnal + rng.gen_range(-1.0..1.0))
                    .max(0.0);
                let gust = if rng.gen_bool(config.missing_gust_rate.clamp(0.0, 1.0)) {
                    None
                } else {
                    Some(ws * rng.gen_range(1.1..1.6))
                };
                let t = t_base + 8.0 * season + 4.0 * diurnal + rng.gen_range(-1.5..1.5);
                let rh = (55.0 - 20.0 * season - 10.0 * diurnal + rng.gen_range(-8.0..8.0))
                    .clamp(3.0, 100.0);
                station_hourly.push(StationHourly {
                    station_id: station_id.clone(),
                    lonlat,
                    location: loc,
                    timestamp: date.and_hms_opt(hour, 0, 0).unwrap(),
                    ws: Some(ws),
                    gust,
                    t: Some(t),
                    rh: Some(rh),
                });
            }
        }
    }

    // ── tree heights along circuits plus background samples ─────────────
    let first_tree_year = window.start.year().max(2016);
    let tree_years: Vec<i32> = (first_tree_year..=window.end.year().max(first_tree_year)).collect();
    let mut trees = Vec::new();
    for circuit in &circuits {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            &format!("trees.{}", circuit.id()),
        ));
        for part in &circuit.parts {
            let n_samples = (part.length_m / 60.0).ceil() as usize;
            for s in 0..n_samples {
                let t = (s as f64 + 0.5) / n_samples as f64;
                let on_line = part.point_at_fraction(t);
                let loc = PlanarPoint::new(
                    on_line.x + rng.gen_range(-6.0..6.0),
                    on_line.y + rng.gen_range(-6.0..6.0),
                );
                let lonlat = invert_to_lonlat(&[loc], config.origin)[0];
                let base_height = rng.gen_range(2.0..40.0);
                for (k, &year) in tree_years.iter().enumerate() {
                    trees.push(TreeHeightSample {
                        lonlat,
                        location: loc,
                        year,
                        height_m: (base_height + 0.4 * k as f64 + rng.gen_range(-0.5..0.5))
                            .max(0.0),
                    });
                }
            }
        }
    }
    {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "trees.background"));
        for _ in 0..200 {
            let loc = PlanarPoint::new(
                rng.gen_range(0.0..region_m),
                rng.gen_range(0.0..region_m),
            );
            let lonlat = invert_to_lonlat(&[loc], config.origin)[0];
            let base_height = rng.gen_range(2.0..40.0);
            for (k, &year) in tree_years.iter().enumerate() {
                trees.push(TreeHeightSample {
                    lonlat,
                    location: loc,
                    year,
                    height_m: (base_height + 0.4 * k as f64).max(0.0),
                });
            }
        }
    }

    // ── the true model: features → probabilities → events ───────────────
    let station_days = reduce_station_hourly(&station_hourly);
    let mut corpus = Corpus {
        origin: config.origin,
        circuits,
        weather,
        station_days,
        trees,
        events: Vec::new(),
    };
    let mut truth = Vec::new();
    let mut events = Vec::new();
    let mut n_ignitions = 0usize;
    let mut n_feeder_rows = 0usize;

    if config.n_feeders > 0 {
        let panel = assemble_panel(
            &corpus,
            TargetKind::FeederIgnition,
            &BufferRadii::default(),
            window,
        )?;
        let schema = &panel.schema;
        let beta_cols: Vec<(usize, f64)> = config
            .beta
            .iter()
            .map(|(name, b)| (schema.index_of(name).expect("validated"), *b))
            .collect();
        let tilt_cols: Vec<(Cause, usize, f64)> = config
            .cause_tilts
            .iter()
            .filter_map(|t| schema.index_of(&t.feature).map(|i| (t.cause, i, t.weight)))
            .collect();

        // Population z-scores over present values, per referenced column.
        let mut needed: std::collections::BTreeSet<usize> =
            beta_cols.iter().map(|&(c, _)| c).collect();
        needed.extend(tilt_cols.iter().map(|&(_, c, _)| c));
        let mut stats: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for col in needed {
            let values: Vec<f64> = panel
                .rows
                .iter()
                .map(|r| r.features[col])
                .filter(|v| !v.is_nan())
                .collect();
            let stat = if values.is_empty() {
                (0.0, 1.0)
            } else {
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / values.len() as f64;
                (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
            };
            stats.insert(col, stat);
        }
        let z = |row: &[f64], col: usize| -> f64 {
            let v = row[col];
            if v.is_nan() {
                return 0.0;
            }
            let (mean, std) = stats[&col];
            (v - mean) / std
        };

        // Solve the intercept so the panel-mean probability hits the target
        // rate exactly: mean σ(b + β·z) is monotone in b, so bisect.
        let row_scores: Vec<f64> = panel
            .rows
            .iter()
            .map(|row| {
                beta_cols
                    .iter()
                    .map(|&(col, b)| b * z(&row.features, col))
                    .sum::<f64>()
            })
            .collect();
        let mean_rate = |b: f64| -> f64 {
            row_scores.iter().map(|s| sigmoid(b + s)).sum::<f64>() / row_scores.len() as f64
        };
        let mut lo = logit(config.target_rate) - 40.0;
        let mut hi = logit(config.target_rate) + 40.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_rate(mid) < config.target_rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let intercept = 0.5 * (lo + hi);

        let mut event_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "events.ignition"));
        let circuit_by_id: BTreeMap<&str, &Circuit> = corpus
            .circuits
            .iter()
            .map(|c| (c.id(), c))
            .collect();
        n_feeder_rows = panel.rows.len();
        for (row, row_score) in panel.rows.iter().zip(&row_scores) {
            let p = sigmoid(intercept + row_score);
            truth.push(TruthRow {
                circuit_id: row.circuit_id.clone(),
                date: row.date,
                p,
            });
            if event_rng.gen_range(0.0..1.0) >= p {
                continue;
            }
            n_ignitions += 1;
            let circuit = circuit_by_id[row.circuit_id.as_str()];
            let part = &circuit.parts[event_rng.gen_range(0..circuit.parts.len())];
            let on_line = part.point_at_fraction(event_rng.gen_range(0.0..1.0));
            let angle = event_rng.gen_range(0.0..std::f64::consts::TAU);
            let radius = event_rng.gen_range(0.0..80.0);
            let loc = PlanarPoint::new(
                on_line.x + radius * angle.cos(),
                on_line.y + radius * angle.sin(),
            );
            let lonlat = invert_to_lonlat(&[loc], config.origin)[0];

            // Cause from the (optionally tilted) mixture.
            let causes = [
                Cause::VegetationContact,
                Cause::ThirdParty,
                Cause::EquipmentFailure,
                Cause::Unknown,
            ];
            let mut logits: Vec<f64> = config
                .cause_weights
                .iter()
                .map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
                .collect();
            for &(cause, col, weight) in &tilt_cols {
                let slot = causes.iter().position(|&c| c == cause).unwrap();
                logits[slot] += weight * z(&row.features, col);
            }
            let max_logit = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let probs: Vec<f64> = logits.iter().map(|l| (l - max_logit).exp()).collect();
            let total: f64 = probs.iter().sum();
            let mut u = event_rng.gen_range(0.0..1.0) * total;
            let mut cause = causes[3];
            for (k, &pr) in probs.iter().enumerate() {
                if u < pr {
                    cause = causes[k];
                    break;
                }
                u -= pr;
            }

            events.push(EventRecord {
                event_id: format!("ign_{n_ignitions:06}"),
                kind: EventKind::Ignition,
                date: row.date,
                lonlat: Some(lonlat),
                location: Some(loc),
                circuit_id: None,
                cause,
            });
        }
    }

    // Flat-rate wire-downs on every circuit.
    let mut n_wiredowns = 0usize;
    {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "events.wiredown"));
        let ids: Vec<String> = corpus.circuits.iter().map(|c| c.id().to_string()).collect();
        for id in &ids {
            for day in 0..config.n_days {
                if rng.gen_range(0.0..1.0) < config.wiredown_rate {
                    n_wiredowns += 1;
                    events.push(EventRecord {
                        event_id: format!("wd_{n_wiredowns:06}"),
                        kind: EventKind::WireDown,
                        date: window.day(day),
                        lonlat: None,
                        location: None,
                        circuit_id: Some(id.clone()),
                        cause: Cause::NotApplicable,
                    });
                }
            }
        }
    }
    events.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    corpus.events = events;

    // ── write everything ─────────────────────────────────────────────────
    let paths = CorpusPaths {
        circuits: out_dir.join("circuits.geojson"),
        gridmet: out_dir.join("gridmet.csv"),
        station_hourly: Some(out_dir.join("station_hourly.csv")),
        station_daily: None,
        trees: out_dir.join("trees.csv"),
        events: out_dir.join("events.csv"),
    };
    write_circuits_geojson(&paths.circuits, &corpus.circuits)?;
    write_gridmet_csv(&paths.gridmet, &corpus.weather)?;
    write_station_hourly_csv(paths.station_hourly.as_ref().unwrap(), &station_hourly)?;
    write_trees_csv(&paths.trees, &corpus.trees)?;
    write_events_csv(&paths.events, &corpus.events)?;
    let truth_path = out_dir.join("truth.csv");
    write_truth_csv(&truth_path, &truth)?;

    Ok(SynthOutput {
        paths,
        truth_path,
        truth,
        n_ignitions,
        n_wiredowns,
        realized_rate: if n_feeder_rows > 0 {
            n_ignitions as f64 / n_feeder_rows as f64
        } else {
            0.0
        },
    })
}

pub fn write_truth_csv(path: &Path, truth: &[TruthRow]) -> Result<()> {
    use std::io::Write;
    let file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut file = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(file, "circuit_id,date,p_true").map_err(io_err)?;
    for row in truth {
        writeln!(file, "{},{},{}", row.circuit_id, row.date, row.p).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<TruthRow>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    if lines.next() != Some("circuit_id,date,p_true") {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row: 0,
            field: "header".into(),
            message: "expected circuit_id,date,p_true".into(),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                row: i + 1,
                field: "record".into(),
                message: "expected 3 fields".into(),
            });
        }
        out.push(TruthRow {
            circuit_id: parts[0].to_string(),
            date: NaiveDate::parse_from_str(parts[1], "%Y-%m-%d").map_err(|_| Error::Parse {
                path: path.display().to_string(),
                row: i + 1,
                field: "date".into(),
                message: format!("bad date `{}`", parts[1]),
            })?,
            p: parts[2].parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                row: i + 1,
                field: "p_true".into(),
                message: format!("bad probability `{}`", parts[2]),
            })?,
        });
    }
    Ok(out)
}

/// Monte-Carlo estimate of the AUC attained by the true probability used as
/// the score, over the truth rows inside `window` (or all rows). Returns
/// (estimate, standard error). Positives are drawn with weight p, negatives
/// with weight 1−p; each draw scores concordance 1, ½ (tie), or 0.
pub fn true_bayes_auc(
    truth: &[TruthRow],
    window: Option<DateWindow>,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let rows: Vec<&TruthRow> = truth
        .iter()
        .filter(|r| window.is_none_or(|w| w.contains(r.date)))
        .collect();
    if rows.is_empty() {
        return Err(Error::Input("no truth rows in the requested window".into()));
    }
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be positive".into()));
    }
    let mut cum_pos = Vec::with_capacity(rows.len());
    let mut cum_neg = Vec::with_capacity(rows.len());
    let mut total_pos = 0.0;
    let mut total_neg = 0.0;
    for r in &rows {
        total_pos += r.p;
        total_neg += 1.0 - r.p;
        cum_pos.push(total_pos);
        cum_neg.push(total_neg);
    }
    if total_pos <= 0.0 || total_neg <= 0.0 {
        return Err(Error::UndefinedMetric(
            "degenerate truth: all-positive or all-negative mass".into(),
        ));
    }
    let draw = |cum: &[f64], total: f64, u: f64| -> usize {
        let target = u * total;
        cum.partition_point(|&c| c < target).min(cum.len() - 1)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_mc {
        let i = draw(&cum_pos, total_pos, rng.gen_range(0.0..1.0));
        let j = draw(&cum_neg, total_neg, rng.gen_range(0.0..1.0));
        let c = match rows[i].p.partial_cmp(&rows[j].p).unwrap() {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Less => 0.0,
        };
        sum += c;
        sum_sq += c * c;
    }
    let mean = sum / n_mc as f64;
    let var = (sum_sq / n_mc as f64 - mean * mean).max(0.0);
    Ok((mean, (var / n_mc as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_corpus, CauseMap};
    use crate::spatial::assign_event_to_line;

    fn small_config(seed: u64) -> SynthConfig {
        SynthConfig {
            n_feeders: 16,
            n_transmission: 2,
            region_km: 16.0,
            grid_spacing_km: 3.0,
            n_stations: 4,
            start_date: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
            n_days: 120,
            target_rate: 0.02,
            wiredown_rate: 0.002,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn zero_coefficients_and_tiny_rate_yield_no_events() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            n_feeders: 2,
            n_transmission: 0,
            region_km: 8.0,
            n_days: 3,
            n_stations: 1,
            beta: vec![],
            target_rate: 1e-12,
            wiredown_rate: 0.0,
            ..small_config(7)
        };
        let out = generate(&config, dir.path()).unwrap();
        assert_eq!(out.n_ignitions, 0);
        assert_eq!(out.n_wiredowns, 0);
        assert!(out.truth.iter().all(|r| r.p < 1e-9));
        assert_eq!(out.truth.len(), 2 * 3);
    }

    #[test]
    fn same_seed_produces_byte_identical_files() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let config = small_config(42);
        generate(&config, dir_a.path()).unwrap();
        generate(&config, dir_b.path()).unwrap();
        for name in [
            "circuits.geojson",
            "gridmet.csv",
            "station_hourly.csv",
            "trees.csv",
            "events.csv",
            "truth.csv",
        ] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs across identical runs");
        }
        // A different seed changes the corpus.
        let dir_c = tempfile::tempdir().unwrap();
        generate(&small_config(43), dir_c.path()).unwrap();
        let a = std::fs::read(dir_a.path().join("events.csv")).unwrap();
        let c = std::fs::read(dir_c.path().join("events.csv")).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn realized_rate_tracks_target() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            n_feeders: 36,
            n_days: 500,
            ..small_config(11)
        };
        let out = generate(&config, dir.path()).unwrap();
        let relative = (out.realized_rate - config.target_rate).abs() / config.target_rate;
        assert!(
            relative < 0.2,
            "target {} realized {} ({} ignitions)",
            config.target_rate,
            out.realized_rate,
            out.n_ignitions
        );
    }

    #[test]
    fn generated_files_pass_ingest_and_events_recover_their_circuit() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(13);
        let out = generate(&config, dir.path()).unwrap();
        assert!(out.n_ignitions > 0);
        let corpus = load_corpus(&out.paths, &CauseMap::default()).unwrap();
        assert_eq!(corpus.circuits.len(), 18);

        // Every ignition lands within the event buffer of its circuit and
        // assignment recovers a circuit for ≥ 99% of events.
        let all_parts: Vec<Polyline> = corpus
            .circuits
            .iter()
            .flat_map(|c| c.parts.iter().cloned())
            .collect();
        let mut assigned = 0usize;
        let mut total = 0usize;
        for event in corpus.events.iter().filter(|e| e.kind == EventKind::Ignition) {
            total += 1;
            if assign_event_to_line(&event.location.unwrap(), &all_parts, 100.0).is_some() {
                assigned += 1;
            }
        }
        assert!(total > 0);
        assert!(
            assigned as f64 >= 0.99 * total as f64,
            "{assigned}/{total} recovered"
        );
    }

    #[test]
    fn bayes_auc_is_half_for_flat_truth_and_grows_with_signal() {
        let flat: Vec<TruthRow> = (0..500)
            .map(|i| TruthRow {
                circuit_id: format!("c{i}"),
                date: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
                p: 0.01,
            })
            .collect();
        let (auc, se) = true_bayes_auc(&flat, None, 20_000, 1).unwrap();
        assert_eq!(auc, 0.5); // every pair ties
        assert_eq!(se, 0.0);

        // Strengthening a single coefficient drives the Bayes AUC up.
        let mut last = 0.5;
        for strength in [0.5f64, 1.5, 3.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let rows: Vec<TruthRow> = (0..4000)
                .map(|i| {
                    let z: f64 = rng.gen_range(-2.0..2.0);
                    TruthRow {
                        circuit_id: format!("c{i}"),
                        date: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
                        p: sigmoid(strength * z - 4.0),
                    }
                })
                .collect();
            let (auc, se) = true_bayes_auc(&rows, None, 100_000, 5).unwrap();
            assert!(auc > last, "strength {strength}: {auc} <= {last}");
            assert!(se < 0.005);
            last = auc;
        }
        assert!(last > 0.8);
    }

    #[test]
    fn truth_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let truth = vec![
            TruthRow {
                circuit_id: "a".into(),
                date: NaiveDate::from_ymd_opt(2018, 3, 4).unwrap(),
                p: 0.001234567890123,
            },
            TruthRow {
                circuit_id: "b".into(),
                date: NaiveDate::from_ymd_opt(2019, 11, 30).unwrap(),
                p: 1e-9,
            },
        ];
        let path = dir.path().join("truth.csv");
        write_truth_csv(&path, &truth).unwrap();
        assert_eq!(read_truth_csv(&path).unwrap(), truth);
    }

    #[test]
    fn config_validation_rejects_bad_beta_and_rates() {
        let dir = tempfile::tempdir().unwrap();
        let bad_beta = SynthConfig {
            beta: vec![("hist_ignition_count".into(), 1.0)],
            ..small_config(1)
        };
        assert!(generate(&bad_beta, dir.path()).is_err());
        let unknown = SynthConfig {
            beta: vec![("no_such_feature".into(), 1.0)],
            ..small_config(1)
        };
        assert!(generate(&unknown, dir.path()).is_err());
        let bad_rate = SynthConfig {
            target_rate: 0.9,
            ..small_config(1)
        };
        assert!(generate(&bad_rate, dir.path()).is_err());
    }
}
