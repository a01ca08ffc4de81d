//! Circuit-day model matrix assembly.
//!
//! One row per circuit per calendar day: weather aggregated over the
//! circuit's gridded-weather buffer, paired or averaged station features,
//! tree heights in a narrow buffer, static infrastructure attributes,
//! year-indexed component ages, historical event counts, and a binary label
//! marking whether a target-kind event was assigned to that circuit on that
//! day. Rows with any absent field are dropped and counted.
//!
//! Assembly parallelizes over circuits; per-circuit work is independent and
//! the output row order is always (circuit_id, date) regardless of
//! scheduling.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{
    gridmet_reduction, Cause, Circuit, CircuitKind, Corpus, EventKind, Reduction, StationDay,
    TreeHeightSample, GRIDMET_FIELDS,
};
use crate::matrix::Matrix;
use crate::spatial::{assign_event_to_line, point_parts_distance, PlanarPoint, Polyline};
use crate::{Error, Result};

/// Which positive class the matrix is labeled with. Feeder models predict
/// ignitions; transmission models predict wire-down events because ignitions
/// are too rare on the studied lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    FeederIgnition,
    TransmissionWireDown,
}

impl TargetKind {
    pub fn circuit_kind(self) -> CircuitKind {
        match self {
            TargetKind::FeederIgnition => CircuitKind::Feeder,
            TargetKind::TransmissionWireDown => CircuitKind::Transmission,
        }
    }

    pub fn event_kind(self) -> EventKind {
        match self {
            TargetKind::FeederIgnition => EventKind::Ignition,
            TargetKind::TransmissionWireDown => EventKind::WireDown,
        }
    }
}

/// The four feature categories used by the importance and ablation analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureCategory {
    PrimaryClimate,
    Derived,
    StaticInfrastructure,
    DynamicInfrastructure,
}

impl std::fmt::Display for FeatureCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FeatureCategory::PrimaryClimate => "primary_climate",
            FeatureCategory::Derived => "derived",
            FeatureCategory::StaticInfrastructure => "static_infrastructure",
            FeatureCategory::DynamicInfrastructure => "dynamic_infrastructure",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for FeatureCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "primary_climate" => Ok(FeatureCategory::PrimaryClimate),
            "derived" => Ok(FeatureCategory::Derived),
            "static_infrastructure" => Ok(FeatureCategory::StaticInfrastructure),
            "dynamic_infrastructure" => Ok(FeatureCategory::DynamicInfrastructure),
            other => Err(Error::Validation(format!("unknown feature category `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub category: FeatureCategory,
    /// Time-varying weather field, i.e. subject to the trailing-average
    /// variant. Covers the gridded and station weather values but not the
    /// static station distance or yearly tree heights.
    pub weather: bool,
}

/// Ordered feature list with category tags. Every matrix column maps to
/// exactly one entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub target: TargetKind,
    features: Vec<FeatureDef>,
}

fn def(name: &str, category: FeatureCategory, weather: bool) -> FeatureDef {
    FeatureDef {
        name: name.to_string(),
        category,
        weather,
    }
}

/// Category of a gridMET field: PR, RH, SPH, SRAD, T, WS are primary
/// climate; the fire-danger and moisture indices are derived.
fn gridmet_category(name: &str) -> FeatureCategory {
    match name {
        "min_pr" | "min_rh" | "min_sph" | "max_srad" | "max_t" | "max_ws" => {
            FeatureCategory::PrimaryClimate
        }
        _ => FeatureCategory::Derived,
    }
}

pub const STATION_VALUE_FIELDS: [&str; 5] = [
    "station_max_ws",
    "station_avg_ws",
    "station_max_gust",
    "station_max_t",
    "station_min_rh",
];

const FEEDER_STATIC_FIELDS: [&str; 20] = [
    "voltage_kv",
    "length_mi",
    "hftd_tier3_frac",
    "hftd_tier2_frac",
    "hftd_zone1_frac",
    "hftd_non_frac",
    "overhead_frac",
    "pole_wood_frac",
    "pole_thbr_frac",
    "pole_steel_frac",
    "cond_aac_frac",
    "cond_acsr_frac",
    "cond_copper_frac",
    "wind_code2_frac",
    "wind_code3_frac",
    "wind_code4_frac",
    "xfmr_zone_r_frac",
    "xfmr_zone_s_frac",
    "xfmr_zone_t_frac",
    "xfmr_zone_x_frac",
];

impl FeatureSchema {
    pub fn for_target(target: TargetKind) -> Self {
        match target {
            TargetKind::FeederIgnition => Self::feeder(),
            TargetKind::TransmissionWireDown => Self::transmission(),
        }
    }

    pub fn feeder() -> Self {
        let mut features = Vec::new();
        for name in GRIDMET_FIELDS {
            features.push(def(name, gridmet_category(name), true));
        }
        for name in STATION_VALUE_FIELDS {
            features.push(def(name, FeatureCategory::PrimaryClimate, true));
        }
        features.push(def("station_distance_m", FeatureCategory::PrimaryClimate, false));
        features.push(def("max_tree_height_m", FeatureCategory::Derived, false));
        features.push(def("avg_tree_height_m", FeatureCategory::Derived, false));
        for name in FEEDER_STATIC_FIELDS {
            features.push(def(name, FeatureCategory::StaticInfrastructure, false));
        }
        for name in ["avg_xfmr_age_yr", "avg_cond_age_yr", "avg_pole_age_yr"] {
            features.push(def(name, FeatureCategory::DynamicInfrastructure, false));
        }
        features.push(def("hist_ignition_count", FeatureCategory::DynamicInfrastructure, false));
        features.push(def("hist_wiredown_count", FeatureCategory::DynamicInfrastructure, false));
        FeatureSchema {
            target: TargetKind::FeederIgnition,
            features,
        }
    }

    pub fn transmission() -> Self {
        let mut features = Vec::new();
        for name in GRIDMET_FIELDS {
            features.push(def(name, gridmet_category(name), true));
        }
        for name in STATION_VALUE_FIELDS {
            features.push(def(name, FeatureCategory::PrimaryClimate, true));
        }
        features.push(def("station_distance_m", FeatureCategory::PrimaryClimate, false));
        features.push(def("max_tree_height_m", FeatureCategory::Derived, false));
        features.push(def("avg_tree_height_m", FeatureCategory::Derived, false));
        features.push(def("voltage_kv", FeatureCategory::StaticInfrastructure, false));
        features.push(def("length_mi", FeatureCategory::StaticInfrastructure, false));
        features.push(def("hist_ignition_count", FeatureCategory::DynamicInfrastructure, false));
        features.push(def("hist_wiredown_count", FeatureCategory::DynamicInfrastructure, false));
        FeatureSchema {
            target: TargetKind::TransmissionWireDown,
            features,
        }
    }

    /// Rebuild from a sidecar listing; names must be unique.
    pub fn from_defs(target: TargetKind, features: Vec<FeatureDef>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(f.name.clone()) {
                return Err(Error::Validation(format!("duplicate feature name `{}`", f.name)));
            }
        }
        Ok(FeatureSchema { target, features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn defs(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn indices_for_categories(&self, cats: &[FeatureCategory]) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| cats.contains(&f.category))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureSchema {
        FeatureSchema {
            target: self.target,
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
        }
    }
}

/// Positive/negative/drop counts for one assembled matrix.
///
/// `n_events_total` counts target-kind events in the corpus;
/// `n_events_assigned` counts those attached to an in-roster circuit within
/// the assembled date range (ignitions can miss every buffer, wire-downs can
/// fall outside the range). Together with `n_dropped_positive` this reports
/// event losses both before and after event-to-circuit assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DatasetSummary {
    pub n_pos: u64,
    pub n_neg: u64,
    pub n_dropped: u64,
    pub n_dropped_positive: u64,
    pub n_events_total: u64,
    pub n_events_assigned: u64,
}

impl DatasetSummary {
    /// N⁺/N⁻, computed from the integer counts on demand so it is exact.
    pub fn imbalance_degree(&self) -> f64 {
        self.n_pos as f64 / self.n_neg as f64
    }
}

/// Buffer radii in meters. Defaults are the study's values: 100 m event
/// assignment, 3 km gridded weather, 20 km transmission stations, 10 m trees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferRadii {
    pub event_m: f64,
    pub gridmet_m: f64,
    pub station_m: f64,
    pub trees_m: f64,
}

impl Default for BufferRadii {
    fn default() -> Self {
        BufferRadii {
            event_m: 100.0,
            gridmet_m: 3_000.0,
            station_m: 20_000.0,
            trees_m: 10.0,
        }
    }
}

/// Inclusive calendar-day window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Config(format!("date window {start}..{end} is empty")));
        }
        Ok(DateWindow { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn overlaps(&self, other: &DateWindow) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn n_days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn day(&self, index: usize) -> NaiveDate {
        self.start + chrono::Duration::days(index as i64)
    }
}

/// One pre-drop circuit-day row. `f64::NAN` marks an absent feature; rows
/// containing any NaN are dropped (and counted) at finalization.
#[derive(Debug, Clone)]
pub struct PanelRow {
    pub circuit_id: String,
    pub date: NaiveDate,
    pub features: Vec<f64>,
    pub label: u8,
    pub cause: Option<Cause>,
}

/// The full pre-drop circuit-day panel: exactly one row per (circuit, day),
/// sorted by (circuit_id, date).
#[derive(Debug, Clone)]
pub struct Panel {
    pub schema: FeatureSchema,
    pub window: DateWindow,
    pub rows: Vec<PanelRow>,
    pub n_circuits: usize,
    pub n_events_total: u64,
    pub n_events_assigned: u64,
}

/// Post-drop model matrix with row metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub x: Matrix,
    pub y: Vec<u8>,
    pub meta: Vec<RowMeta>,
    pub summary: DatasetSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub circuit_id: String,
    pub date: NaiveDate,
    pub cause: Option<Cause>,
}

// ── aggregation primitives ────────────────────────────────────────────────

/// Reduce the gridMET values of the cells inside one circuit-day buffer:
/// max-prefixed fields take the max over cells, min-prefixed the min. A
/// field with no reporting cell stays absent.
pub fn aggregate_weather(cell_values: &[&[Option<f64>; 13]]) -> [Option<f64>; 13] {
    let mut out = [None; 13];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc: Option<f64> = None;
        for values in cell_values {
            if let Some(v) = values[i] {
                acc = Some(match (acc, gridmet_reduction(i)) {
                    (None, _) => v,
                    (Some(a), Reduction::Max) => a.max(v),
                    (Some(a), Reduction::Min) => a.min(v),
                });
            }
        }
        *slot = acc;
    }
    out
}

/// A weather station's identity and fixed location.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSite {
    pub station_id: String,
    pub location: PlanarPoint,
}

/// Pair a feeder with the closest station to its arc-length midpoint.
/// Returns the winning site index and the distance in meters. Exact distance
/// ties break toward the lexicographically smallest station_id.
pub fn pair_feeder_station(centroid: &PlanarPoint, stations: &[StationSite]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in stations.iter().enumerate() {
        let d = centroid.distance(&s.location);
        let better = match best {
            None => true,
            Some((bi, bd)) => {
                d < bd || (d == bd && s.station_id < stations[bi].station_id)
            }
        };
        if better {
            best = Some((i, d));
        }
    }
    best
}

/// Arithmetic mean of each station-day field over the stations reporting it.
pub fn transmission_station_average(days: &[&StationDay]) -> [Option<f64>; 5] {
    let fields: [fn(&StationDay) -> Option<f64>; 5] = [
        |d| d.max_ws,
        |d| d.avg_ws,
        |d| d.max_gust,
        |d| d.max_t,
        |d| d.min_rh,
    ];
    let mut out = [None; 5];
    for (slot, get) in out.iter_mut().zip(fields) {
        let values: Vec<f64> = days.iter().filter_map(|d| get(d)).collect();
        if !values.is_empty() {
            *slot = Some(values.iter().sum::<f64>() / values.len() as f64);
        }
    }
    out
}

/// Map a record year onto an available tree-data year: exact match when
/// present, otherwise years before the earliest coverage use the earliest
/// year (the study pairs 2015 records with 2016 tree data). Years after the
/// latest coverage have no mapping.
pub fn map_tree_year(record_year: i32, available: &BTreeSet<i32>) -> Option<i32> {
    if available.contains(&record_year) {
        return Some(record_year);
    }
    let min = *available.iter().next()?;
    (record_year < min).then_some(min)
}

/// Max and mean tree height over the buffer samples for one (mapped) year,
/// or `None` when no sample matches.
pub fn aggregate_trees(samples: &[&TreeHeightSample], year: i32) -> Option<(f64, f64)> {
    let heights: Vec<f64> = samples
        .iter()
        .filter(|s| s.year == year)
        .map(|s| s.height_m)
        .collect();
    if heights.is_empty() {
        return None;
    }
    let max = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg = heights.iter().sum::<f64>() / heights.len() as f64;
    Some((max, avg))
}

/// Events assigned to one circuit, split by kind, date-sorted.
#[derive(Debug, Clone, Default)]
pub struct CircuitEventLog {
    pub ignition_dates: Vec<NaiveDate>,
    pub wiredown_dates: Vec<NaiveDate>,
}

/// Counts of ignitions and wire-downs on this circuit strictly before
/// `date`. Input date lists must be sorted ascending.
pub fn historical_counts(log: &CircuitEventLog, date: NaiveDate) -> (u64, u64) {
    let before = |dates: &[NaiveDate]| dates.partition_point(|&d| d < date) as u64;
    (before(&log.ignition_dates), before(&log.wiredown_dates))
}

// ── event assignment ─────────────────────────────────────────────────────

#[derive(Debug, Clone)]
struct AssignedEvent {
    circuit_id: String,
    date: NaiveDate,
    kind: EventKind,
    cause: Cause,
    event_id: String,
}

/// Attach every event to a circuit: wire-downs by their recorded circuit_id
/// (which must exist in the roster), ignitions by closest line within the
/// event buffer radius. Returns the assignments plus the count of ignitions
/// that missed every buffer.
fn assign_events(corpus: &Corpus, radii: &BufferRadii) -> Result<(Vec<AssignedEvent>, u64)> {
    let all_parts: Vec<&Polyline> = corpus.circuits.iter().flat_map(|c| c.parts.iter()).collect();
    let owned_parts: Vec<Polyline> = all_parts.iter().map(|p| (*p).clone()).collect();
    let roster: BTreeSet<&str> = corpus.circuits.iter().map(|c| c.id()).collect();
    let mut assigned = Vec::new();
    let mut unassigned = 0u64;
    for event in &corpus.events {
        match event.kind {
            EventKind::WireDown => {
                let circuit_id = event.circuit_id.clone().expect("validated at load");
                if !roster.contains(circuit_id.as_str()) {
                    return Err(Error::Validation(format!(
                        "wiredown `{}` names unknown circuit `{circuit_id}`",
                        event.event_id
                    )));
                }
                assigned.push(AssignedEvent {
                    circuit_id,
                    date: event.date,
                    kind: event.kind,
                    cause: event.cause,
                    event_id: event.event_id.clone(),
                });
            }
            EventKind::Ignition => {
                let location = event.location.expect("validated at load");
                match assign_event_to_line(&location, &owned_parts, radii.event_m) {
                    Some(circuit_id) => assigned.push(AssignedEvent {
                        circuit_id: circuit_id.to_string(),
                        date: event.date,
                        kind: event.kind,
                        cause: event.cause,
                        event_id: event.event_id.clone(),
                    }),
                    None => unassigned += 1,
                }
            }
        }
    }
    Ok((assigned, unassigned))
}

// ── panel assembly ───────────────────────────────────────────────────────

/// Assemble the pre-drop panel: one row per (target-kind circuit, day in
/// `window`), labels attached to the day of the event with same-day weather.
pub fn assemble_panel(corpus: &Corpus, target: TargetKind, radii: &BufferRadii, window: DateWindow) -> Result<Panel> {
    let schema = FeatureSchema::for_target(target);
    let n_days = window.n_days();

    let mut circuits: Vec<&Circuit> = corpus
        .circuits
        .iter()
        .filter(|c| c.attrs.kind == target.circuit_kind())
        .collect();
    circuits.sort_by(|a, b| a.id().cmp(b.id()));
    if circuits.is_empty() {
        return Err(Error::Validation(format!(
            "no circuits of kind {} in corpus",
            target.circuit_kind()
        )));
    }

    // Cell geometry and per-cell daily values indexed by day offset.
    let mut cell_locations: BTreeMap<&str, PlanarPoint> = BTreeMap::new();
    let mut cell_days: BTreeMap<&str, Vec<Option<&[Option<f64>; 13]>>> = BTreeMap::new();
    for cell in &corpus.weather {
        cell_locations.entry(&cell.cell_id).or_insert(cell.location);
        let days = cell_days
            .entry(&cell.cell_id)
            .or_insert_with(|| vec![None; n_days]);
        if window.contains(cell.date) {
            let idx = (cell.date - window.start).num_days() as usize;
            days[idx] = Some(&cell.values);
        }
    }

    // Station geometry and per-station daily records.
    let mut station_sites: Vec<StationSite> = Vec::new();
    let mut site_index: BTreeMap<&str, usize> = BTreeMap::new();
    for day in &corpus.station_days {
        if !site_index.contains_key(day.station_id.as_str()) {
            site_index.insert(&day.station_id, station_sites.len());
            station_sites.push(StationSite {
                station_id: day.station_id.clone(),
                location: day.location,
            });
        }
    }
    let mut station_day_grid: Vec<Vec<Option<&StationDay>>> =
        vec![vec![None; n_days]; station_sites.len()];
    for day in &corpus.station_days {
        if window.contains(day.date) {
            let s = site_index[day.station_id.as_str()];
            let idx = (day.date - window.start).num_days() as usize;
            station_day_grid[s][idx] = Some(day);
        }
    }

    let tree_years: BTreeSet<i32> = corpus.trees.iter().map(|t| t.year).collect();

    // Event assignment and per-circuit logs.
    let (assigned, _unassigned_ignitions) = assign_events(corpus, radii)?;
    let target_event_kind = target.event_kind();
    let n_events_total = corpus
        .events
        .iter()
        .filter(|e| e.kind == target_event_kind)
        .count() as u64;
    let mut logs: BTreeMap<&str, CircuitEventLog> = BTreeMap::new();
    // (circuit, day index) -> cause of the smallest event_id that day.
    let mut positives: BTreeMap<(String, usize), (String, Cause)> = BTreeMap::new();
    let mut n_events_assigned = 0u64;
    let circuit_kind: BTreeMap<&str, CircuitKind> = corpus
        .circuits
        .iter()
        .map(|c| (c.id(), c.attrs.kind))
        .collect();
    for event in &assigned {
        let log = logs.entry(event.circuit_id.as_str()).or_default();
        match event.kind {
            EventKind::Ignition => log.ignition_dates.push(event.date),
            EventKind::WireDown => log.wiredown_dates.push(event.date),
        }
        if event.kind == target_event_kind
            && circuit_kind.get(event.circuit_id.as_str()) == Some(&target.circuit_kind())
            && window.contains(event.date)
        {
            n_events_assigned += 1;
            let idx = (event.date - window.start).num_days() as usize;
            positives
                .entry((event.circuit_id.clone(), idx))
                .and_modify(|(id, cause)| {
                    if event.event_id < *id {
                        *id = event.event_id.clone();
                        *cause = event.cause;
                    }
                })
                .or_insert_with(|| (event.event_id.clone(), event.cause));
        }
    }
    for log in logs.values_mut() {
        log.ignition_dates.sort();
        log.wiredown_dates.sort();
    }

    let empty_log = CircuitEventLog::default();
    let p = schema.len();

    let rows: Vec<Vec<PanelRow>> = circuits
        .par_iter()
        .map(|circuit| {
            let attrs = &circuit.attrs;
            // Geometry joins, computed once per circuit.
            let member_cells: Vec<&str> = cell_locations
                .iter()
                .filter(|(_, loc)| point_parts_distance(loc, &circuit.parts) <= radii.gridmet_m)
                .map(|(id, _)| *id)
                .collect();
            let tree_buffer: Vec<&TreeHeightSample> = corpus
                .trees
                .iter()
                .filter(|t| point_parts_distance(&t.location, &circuit.parts) <= radii.trees_m)
                .collect();
            let tree_by_year: BTreeMap<i32, (f64, f64)> = tree_years
                .iter()
                .filter_map(|&y| aggregate_trees(&tree_buffer, y).map(|agg| (y, agg)))
                .collect();

            // Station join: feeders pair with the closest station to the
            // arc midpoint; transmission lines average stations in a 20-km
            // buffer, with a static average shortest distance.
            enum StationJoin {
                Paired { site: usize, distance_m: f64 },
                Buffered { sites: Vec<usize>, avg_distance_m: f64 },
                None,
            }
            let station_join = match target {
                TargetKind::FeederIgnition => {
                    match pair_feeder_station(&circuit.arc_midpoint(), &station_sites) {
                        Some((site, distance_m)) => StationJoin::Paired { site, distance_m },
                        None => StationJoin::None,
                    }
                }
                TargetKind::TransmissionWireDown => {
                    let sites: Vec<usize> = station_sites
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| {
                            point_parts_distance(&s.location, &circuit.parts) <= radii.station_m
                        })
                        .map(|(i, _)| i)
                        .collect();
                    if sites.is_empty() {
                        StationJoin::None
                    } else {
                        let avg_distance_m = sites
                            .iter()
                            .map(|&i| {
                                point_parts_distance(&station_sites[i].location, &circuit.parts)
                            })
                            .sum::<f64>()
                            / sites.len() as f64;
                        StationJoin::Buffered {
                            sites,
                            avg_distance_m,
                        }
                    }
                }
            };

            let log = logs.get(circuit.id()).unwrap_or(&empty_log);
            let mut circuit_rows = Vec::with_capacity(n_days);
            for day_idx in 0..n_days {
                let date = window.day(day_idx);
                let mut features = vec![f64::NAN; p];
                let mut k = 0usize;

                // gridMET block.
                let cell_values: Vec<&[Option<f64>; 13]> = member_cells
                    .iter()
                    .filter_map(|id| cell_days[id][day_idx])
                    .collect();
                let weather = aggregate_weather(&cell_values);
                for v in weather {
                    if let Some(v) = v {
                        features[k] = v;
                    }
                    k += 1;
                }

                // Station block: five values plus distance.
                match &station_join {
                    StationJoin::Paired { site, distance_m } => {
                        if let Some(day) = station_day_grid[*site][day_idx] {
                            let vals =
                                [day.max_ws, day.avg_ws, day.max_gust, day.max_t, day.min_rh];
                            for v in vals {
                                if let Some(v) = v {
                                    features[k] = v;
                                }
                                k += 1;
                            }
                        } else {
                            k += 5;
                        }
                        features[k] = *distance_m;
                        k += 1;
                    }
                    StationJoin::Buffered {
                        sites,
                        avg_distance_m,
                    } => {
                        let day_records: Vec<&StationDay> = sites
                            .iter()
                            .filter_map(|&s| station_day_grid[s][day_idx])
                            .collect();
                        for v in transmission_station_average(&day_records) {
                            if let Some(v) = v {
                                features[k] = v;
                            }
                            k += 1;
                        }
                        features[k] = *avg_distance_m;
                        k += 1;
                    }
                    StationJoin::None => k += 6,
                }

                // Tree heights for the mapped year.
                if let Some(year) = map_tree_year(date.year(), &tree_years) {
                    if let Some((max_h, avg_h)) = tree_by_year.get(&year) {
                        features[k] = *max_h;
                        features[k + 1] = *avg_h;
                    }
                }
                k += 2;

                // Infrastructure.
                features[k] = attrs.voltage_kv;
                features[k + 1] = attrs.length_mi;
                k += 2;
                if target == TargetKind::FeederIgnition {
                    let statics = [
                        attrs.hftd_fracs[0],
                        attrs.hftd_fracs[1],
                        attrs.hftd_fracs[2],
                        attrs.hftd_fracs[3],
                        attrs.overhead_frac,
                        attrs.pole_fracs[0],
                        attrs.pole_fracs[1],
                        attrs.pole_fracs[2],
                        attrs.conductor_fracs[0],
                        attrs.conductor_fracs[1],
                        attrs.conductor_fracs[2],
                        attrs.wind_code_fracs[0],
                        attrs.wind_code_fracs[1],
                        attrs.wind_code_fracs[2],
                        attrs.xfmr_zone_fracs[0],
                        attrs.xfmr_zone_fracs[1],
                        attrs.xfmr_zone_fracs[2],
                        attrs.xfmr_zone_fracs[3],
                    ];
                    for v in statics {
                        features[k] = v;
                        k += 1;
                    }
                    if let Some(ages) = attrs.ages_by_year.get(&date.year()) {
                        features[k] = ages.transformer;
                        features[k + 1] = ages.conductor;
                        features[k + 2] = ages.pole;
                    }
                    k += 3;
                }

                let (n_ign, n_wd) = historical_counts(log, date);
                features[k] = n_ign as f64;
                features[k + 1] = n_wd as f64;
                k += 2;
                debug_assert_eq!(k, p);

                let positive = positives.get(&(circuit.id().to_string(), day_idx));
                circuit_rows.push(PanelRow {
                    circuit_id: circuit.id().to_string(),
                    date,
                    features,
                    label: u8::from(positive.is_some()),
                    cause: positive.map(|(_, cause)| *cause),
                });
            }
            circuit_rows
        })
        .collect();

    Ok(Panel {
        schema,
        window,
        rows: rows.into_iter().flatten().collect(),
        n_circuits: circuits.len(),
        n_events_total,
        n_events_assigned,
    })
}

impl Panel {
    /// Drop rows with any absent field, count them, and produce the dense
    /// matrix. Errors when nothing survives.
    pub fn finalize(&self) -> Result<Dataset> {
        let p = self.schema.len();
        let mut x = Matrix::zeros(0, p);
        let mut y = Vec::new();
        let mut meta = Vec::new();
        let mut summary = DatasetSummary {
            n_events_total: self.n_events_total,
            n_events_assigned: self.n_events_assigned,
            ..DatasetSummary::default()
        };
        for row in &self.rows {
            if row.features.iter().any(|v| v.is_nan()) {
                summary.n_dropped += 1;
                summary.n_dropped_positive += u64::from(row.label == 1);
                continue;
            }
            x.push_row(&row.features);
            y.push(row.label);
            meta.push(RowMeta {
                circuit_id: row.circuit_id.clone(),
                date: row.date,
                cause: row.cause,
            });
            if row.label == 1 {
                summary.n_pos += 1;
            } else {
                summary.n_neg += 1;
            }
        }
        if y.is_empty() {
            return Err(Error::Validation(
                "no rows remain after dropping records with missing fields".into(),
            ));
        }
        Ok(Dataset {
            schema: self.schema.clone(),
            x,
            y,
            meta,
            summary,
        })
    }
}

/// Assemble and finalize in one step.
pub fn build_matrix(
    corpus: &Corpus,
    target: TargetKind,
    radii: &BufferRadii,
    window: DateWindow,
) -> Result<Dataset> {
    assemble_panel(corpus, target, radii, window)?.finalize()
}

/// Replace every time-varying weather feature with the mean of its values
/// over the `window_days` calendar days strictly before each row's date.
/// Rows without full history become absent in those columns and drop at
/// finalization. Non-weather features and labels are unchanged.
pub fn trailing_weather_variant(panel: &Panel, window_days: usize) -> Panel {
    let n_days = panel.window.n_days();
    let weather_cols: Vec<usize> = panel
        .schema
        .defs()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.weather)
        .map(|(i, _)| i)
        .collect();
    let mut out = panel.clone();
    for block_start in (0..panel.rows.len()).step_by(n_days) {
        for day_idx in 0..n_days {
            let row_idx = block_start + day_idx;
            for &col in &weather_cols {
                let value = if day_idx < window_days {
                    f64::NAN
                } else {
                    let mut sum = 0.0;
                    let mut ok = true;
                    for back in 1..=window_days {
                        let v = panel.rows[row_idx - back].features[col];
                        if v.is_nan() {
                            ok = false;
                            break;
                        }
                        sum += v;
                    }
                    if ok {
                        sum / window_days as f64
                    } else {
                        f64::NAN
                    }
                };
                out.rows[row_idx].features[col] = value;
            }
        }
    }
    out
}

/// Relabel: positive only where the row's cause equals `target_cause`;
/// days with other-cause events become negative.
pub fn cause_specific_labels(dataset: &Dataset, target_cause: Cause) -> Dataset {
    let mut out = dataset.clone();
    out.summary.n_pos = 0;
    out.summary.n_neg = 0;
    for (i, meta) in out.meta.iter().enumerate() {
        let positive = dataset.y[i] == 1 && meta.cause == Some(target_cause);
        out.y[i] = u8::from(positive);
        if positive {
            out.summary.n_pos += 1;
        } else {
            out.summary.n_neg += 1;
        }
    }
    out
}

/// Partition by record date into train and test windows; records outside
/// both windows are excluded. Windows must be disjoint.
pub fn temporal_split(
    dataset: &Dataset,
    train: DateWindow,
    test: DateWindow,
) -> Result<(Dataset, Dataset)> {
    if train.overlaps(&test) {
        return Err(Error::Config(format!(
            "train window {}..{} overlaps test window {}..{}",
            train.start, train.end, test.start, test.end
        )));
    }
    let select = |window: DateWindow| -> Dataset {
        let indices: Vec<usize> = dataset
            .meta
            .iter()
            .enumerate()
            .filter(|(_, m)| window.contains(m.date))
            .map(|(i, _)| i)
            .collect();
        dataset.select_rows(&indices)
    };
    Ok((select(train), select(test)))
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// Row subset as a new dataset; drop statistics are not meaningful for
    /// subsets and reset to zero.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let y: Vec<u8> = indices.iter().map(|&i| self.y[i]).collect();
        let n_pos = y.iter().filter(|&&v| v == 1).count() as u64;
        Dataset {
            schema: self.schema.clone(),
            x: self.x.select_rows(indices),
            meta: indices.iter().map(|&i| self.meta[i].clone()).collect(),
            summary: DatasetSummary {
                n_pos,
                n_neg: y.len() as u64 - n_pos,
                ..DatasetSummary::default()
            },
            y,
        }
    }

    /// Column subset (feature restriction for ablations), keeping schema
    /// order.
    pub fn restrict_features(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::Config("empty feature set".into()));
        }
        Ok(Dataset {
            schema: self.schema.subset(indices),
            x: self.x.select_cols(indices),
            y: self.y.clone(),
            meta: self.meta.clone(),
            summary: self.summary,
        })
    }
}

// ── matrix / schema serialization ────────────────────────────────────────

/// Write the model matrix as headered CSV: metadata columns then one column
/// per schema feature.
pub fn write_matrix_csv(path: &std::path::Path, dataset: &Dataset) -> Result<()> {
    use std::io::Write;
    let file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut file = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    let names = dataset.schema.names().join(",");
    writeln!(file, "circuit_id,date,label,cause,{names}").map_err(io_err)?;
    for i in 0..dataset.n_rows() {
        let meta = &dataset.meta[i];
        let cause = meta.cause.map(|c| c.to_string()).unwrap_or_default();
        let features: Vec<String> = dataset.x.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(
            file,
            "{},{},{},{},{}",
            meta.circuit_id,
            meta.date,
            dataset.y[i],
            cause,
            features.join(",")
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Sidecar schema listing: feature, category, weather flag.
pub fn write_schema_csv(path: &std::path::Path, schema: &FeatureSchema) -> Result<()> {
    use std::io::Write;
    let file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut file = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(file, "feature,category,weather").map_err(io_err)?;
    for f in schema.defs() {
        writeln!(file, "{},{},{}", f.name, f.category, f.weather).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_schema_csv(path: &std::path::Path, target: TargetKind) -> Result<FeatureSchema> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "feature,category,weather" {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row: 0,
            field: "header".into(),
            message: format!("unexpected schema header `{header}`"),
        });
    }
    let mut defs = Vec::new();
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
        defs.push(FeatureDef {
            name: parts[0].to_string(),
            category: parts[1].parse()?,
            weather: parts[2] == "true",
        });
    }
    FeatureSchema::from_defs(target, defs)
}

/// Load a matrix CSV against its schema. Positive/negative counts are
/// recomputed; drop statistics belong to the featurize run that wrote the
/// file and are restored by the caller when available.
pub fn read_matrix_csv(path: &std::path::Path, schema: &FeatureSchema) -> Result<Dataset> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let expected = format!("circuit_id,date,label,cause,{}", schema.names().join(","));
    let header = lines.next().unwrap_or_default();
    if header != expected {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row: 0,
            field: "header".into(),
            message: "matrix header does not match schema".into(),
        });
    }
    let p = schema.len();
    let mut x = Matrix::zeros(0, p);
    let mut y = Vec::new();
    let mut meta = Vec::new();
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 + p {
            return Err(Error::Parse {
                path: path.display().to_string(),
                row: i + 1,
                field: "record".into(),
                message: format!("expected {} fields, found {}", 4 + p, parts.len()),
            });
        }
        let parse_err = |field: &str, message: String| Error::Parse {
            path: path.display().to_string(),
            row: i + 1,
            field: field.into(),
            message,
        };
        let date = NaiveDate::parse_from_str(parts[1], "%Y-%m-%d")
            .map_err(|_| parse_err("date", format!("bad date `{}`", parts[1])))?;
        let label: u8 = parts[2]
            .parse()
            .map_err(|_| parse_err("label", format!("bad label `{}`", parts[2])))?;
        if label > 1 {
            return Err(parse_err("label", format!("label must be 0|1, got {label}")));
        }
        let cause = match parts[3] {
            "" => None,
            "vegetation_contact" => Some(Cause::VegetationContact),
            "third_party" => Some(Cause::ThirdParty),
            "equipment_failure" => Some(Cause::EquipmentFailure),
            "unknown" => Some(Cause::Unknown),
            "not_applicable" => Some(Cause::NotApplicable),
            other => return Err(parse_err("cause", format!("unknown cause `{other}`"))),
        };
        let mut row = Vec::with_capacity(p);
        for (j, raw) in parts[4..].iter().enumerate() {
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(schema.defs()[j].name.as_str(), format!("`{raw}` is not a number")))?;
            row.push(v);
        }
        x.push_row(&row);
        y.push(label);
        meta.push(RowMeta {
            circuit_id: parts[0].to_string(),
            date,
            cause,
        });
    }
    let n_pos = y.iter().filter(|&&v| v == 1).count() as u64;
    let n_neg = y.len() as u64 - n_pos;
    Ok(Dataset {
        schema: schema.clone(),
        x,
        meta,
        summary: DatasetSummary {
            n_pos,
            n_neg,
            ..DatasetSummary::default()
        },
        y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{CircuitStatic, ComponentAges, DailyWeatherCell, EventRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn feeder(id: &str, y_offset: f64) -> Circuit {
        let mut ages = BTreeMap::new();
        for year in 2015..=2019 {
            ages.insert(
                year,
                ComponentAges {
                    transformer: 10.0 + (year - 2015) as f64,
                    conductor: 20.0,
                    pole: 30.0,
                },
            );
        }
        let vertices = vec![
            PlanarPoint::new(0.0, y_offset),
            PlanarPoint::new(2_000.0, y_offset),
        ];
        Circuit {
            attrs: CircuitStatic {
                circuit_id: id.to_string(),
                kind: CircuitKind::Feeder,
                voltage_kv: 12.0,
                length_mi: 1.2,
                hftd_fracs: [0.1, 0.2, 0.3, 0.4],
                overhead_frac: 0.8,
                pole_fracs: [0.6, 0.1, 0.3],
                conductor_fracs: [0.5, 0.25, 0.25],
                wind_code_fracs: [0.2, 0.3, 0.5],
                xfmr_zone_fracs: [0.25, 0.25, 0.25, 0.25],
                ages_by_year: ages,
            },
            parts: vec![Polyline::new(id, vertices.clone()).unwrap()],
            parts_lonlat: vec![vertices.iter().map(|p| (p.x, p.y)).collect()],
        }
    }

    fn cell(id: &str, x: f64, y: f64, d: NaiveDate, fill: f64) -> DailyWeatherCell {
        DailyWeatherCell {
            cell_id: id.to_string(),
            lonlat: (x, y),
            location: PlanarPoint::new(x, y),
            date: d,
            values: [Some(fill); 13],
        }
    }

    fn station_day(id: &str, x: f64, y: f64, d: NaiveDate, ws: f64) -> StationDay {
        StationDay {
            station_id: id.to_string(),
            lonlat: (x, y),
            location: PlanarPoint::new(x, y),
            date: d,
            max_ws: Some(ws),
            avg_ws: Some(ws / 2.0),
            max_gust: Some(ws + 1.0),
            max_t: Some(25.0),
            min_rh: Some(30.0),
        }
    }

    fn tree(x: f64, y: f64, year: i32, h: f64) -> TreeHeightSample {
        TreeHeightSample {
            lonlat: (x, y),
            location: PlanarPoint::new(x, y),
            year,
            height_m: h,
        }
    }

    fn ignition(id: &str, d: NaiveDate, x: f64, y: f64, cause: Cause) -> EventRecord {
        EventRecord {
            event_id: id.to_string(),
            kind: EventKind::Ignition,
            date: d,
            lonlat: Some((x, y)),
            location: Some(PlanarPoint::new(x, y)),
            circuit_id: None,
            cause,
        }
    }

    /// Two well-separated feeders, dense weather/station/tree coverage over
    /// `window`, plus the given events.
    fn tiny_corpus(window: DateWindow, events: Vec<EventRecord>) -> Corpus {
        let circuits = vec![feeder("fa", 0.0), feeder("fb", 5_000.0)];
        let mut weather = Vec::new();
        let mut station_days = Vec::new();
        for i in 0..window.n_days() {
            let d = window.day(i);
            weather.push(cell("c0", 1_000.0, 0.0, d, 1.0 + i as f64));
            weather.push(cell("c1", 1_000.0, 5_000.0, d, 2.0 + i as f64));
            station_days.push(station_day("s0", 500.0, 1_000.0, d, 4.0));
            station_days.push(station_day("s1", 500.0, 6_000.0, d, 8.0));
        }
        let mut trees = Vec::new();
        for year in 2016..=2019 {
            trees.push(tree(100.0, 2.0, year, 10.0));
            trees.push(tree(200.0, -3.0, year, 20.0));
            trees.push(tree(100.0, 5_002.0, year, 30.0));
            // Out-of-buffer sample never contributes.
            trees.push(tree(100.0, 300.0, year, 99.0));
        }
        Corpus {
            origin: (0.0, 0.0),
            circuits,
            weather,
            station_days,
            trees,
            events,
        }
    }

    #[test]
    fn aggregate_weather_examples() {
        let a: [Option<f64>; 13] = [Some(3.0); 13];
        let b: [Option<f64>; 13] = [Some(7.0); 13];
        let c: [Option<f64>; 13] = [Some(5.0); 13];
        let out = aggregate_weather(&[&a, &b, &c]);
        // max_bi takes max, min_etr takes min.
        assert_eq!(out[0], Some(7.0));
        assert_eq!(out[2], Some(3.0));
        // Single cell passes through.
        let single = aggregate_weather(&[&a]);
        assert_eq!(single, a);
        // Empty buffer stays absent.
        assert_eq!(aggregate_weather(&[]), [None; 13]);
    }

    #[test]
    fn aggregate_weather_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let cells: Vec<[Option<f64>; 13]> = (0..50)
                .map(|_| {
                    let mut v = [None; 13];
                    for slot in v.iter_mut() {
                        if rng.gen_bool(0.85) {
                            *slot = Some(rng.gen_range(-10.0..40.0));
                        }
                    }
                    v
                })
                .collect();
            let refs: Vec<&[Option<f64>; 13]> = cells.iter().collect();
            let out = aggregate_weather(&refs);
            for i in 0..13 {
                let present: Vec<f64> = cells.iter().filter_map(|c| c[i]).collect();
                let expect = match gridmet_reduction(i) {
                    Reduction::Max => present.iter().copied().reduce(f64::max),
                    Reduction::Min => present.iter().copied().reduce(f64::min),
                };
                assert_eq!(out[i], expect);
            }
        }
    }

    #[test]
    fn station_pairing_trivial_and_brute_force() {
        let centroid = PlanarPoint::new(0.0, 0.0);
        let one = vec![StationSite {
            station_id: "only".into(),
            location: PlanarPoint::new(3.0, 4.0),
        }];
        assert_eq!(pair_feeder_station(&centroid, &one), Some((0, 5.0)));

        let two = vec![
            StationSite {
                station_id: "far".into(),
                location: PlanarPoint::new(5_000.0, 0.0),
            },
            StationSite {
                station_id: "near".into(),
                location: PlanarPoint::new(1_000.0, 0.0),
            },
        ];
        assert_eq!(pair_feeder_station(&centroid, &two), Some((1, 1_000.0)));

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let c = PlanarPoint::new(rng.gen_range(-1e4..1e4), rng.gen_range(-1e4..1e4));
            let sites: Vec<StationSite> = (0..rng.gen_range(1..20))
                .map(|i| StationSite {
                    station_id: format!("s{i}"),
                    location: PlanarPoint::new(rng.gen_range(-1e4..1e4), rng.gen_range(-1e4..1e4)),
                })
                .collect();
            let (idx, d) = pair_feeder_station(&c, &sites).unwrap();
            let best = sites
                .iter()
                .map(|s| c.distance(&s.location))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(d, best);
            assert_eq!(c.distance(&sites[idx].location), best);
        }
    }

    #[test]
    fn transmission_average_examples() {
        let d1 = station_day("a", 0.0, 0.0, date("2018-01-01"), 4.0);
        let d2 = station_day("b", 0.0, 0.0, date("2018-01-01"), 8.0);
        let out = transmission_station_average(&[&d1, &d2]);
        assert_eq!(out[0], Some(6.0)); // max_ws mean of {4, 8}
        let single = transmission_station_average(&[&d1]);
        assert_eq!(single[0], Some(4.0));
    }

    #[test]
    fn tree_aggregation_and_year_mapping() {
        let samples = [tree(0.0, 0.0, 2016, 10.0),
            tree(0.0, 0.0, 2016, 20.0),
            tree(0.0, 0.0, 2016, 30.0)];
        let refs: Vec<&TreeHeightSample> = samples.iter().collect();
        assert_eq!(aggregate_trees(&refs, 2016), Some((30.0, 20.0)));
        assert_eq!(aggregate_trees(&refs, 2017), None);

        let years: BTreeSet<i32> = [2016, 2017, 2018, 2019].into_iter().collect();
        assert_eq!(map_tree_year(2015, &years), Some(2016));
        assert_eq!(map_tree_year(2017, &years), Some(2017));
        assert_eq!(map_tree_year(2020, &years), None);
    }

    #[test]
    fn historical_counts_strictly_prior() {
        let log = CircuitEventLog {
            ignition_dates: vec![date("2017-05-01"), date("2018-01-01")],
            wiredown_dates: vec![date("2018-01-01")],
        };
        assert_eq!(historical_counts(&log, date("2016-01-01")), (0, 0));
        // Day-of events are not counted.
        assert_eq!(historical_counts(&log, date("2018-01-01")), (1, 0));
        assert_eq!(historical_counts(&log, date("2018-01-02")), (2, 1));
    }

    #[test]
    fn historical_counts_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = date("2015-01-01");
        let mut ign: Vec<NaiveDate> = (0..200)
            .map(|_| base + chrono::Duration::days(rng.gen_range(0..1500)))
            .collect();
        ign.sort();
        let log = CircuitEventLog {
            ignition_dates: ign.clone(),
            wiredown_dates: vec![],
        };
        for _ in 0..100 {
            let q = base + chrono::Duration::days(rng.gen_range(0..1600));
            let brute = ign.iter().filter(|&&d| d < q).count() as u64;
            assert_eq!(historical_counts(&log, q).0, brute);
        }
        // Nondecreasing in date.
        let mut prev = 0;
        for offset in 0..1600 {
            let (n, _) = historical_counts(&log, base + chrono::Duration::days(offset));
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn build_matrix_no_events_all_negative() {
        let window = DateWindow::new(date("2018-06-01"), date("2018-06-03")).unwrap();
        let corpus = tiny_corpus(window, vec![]);
        let dataset = build_matrix(&corpus, TargetKind::FeederIgnition, &BufferRadii::default(), window).unwrap();
        assert_eq!(dataset.n_rows(), 6); // 2 circuits x 3 days
        assert!(dataset.y.iter().all(|&v| v == 0));
        assert_eq!(dataset.summary.n_neg, 6);
        assert_eq!(dataset.summary.n_dropped, 0);
        // Canonical order: (circuit_id, date).
        let ids: Vec<&str> = dataset.meta.iter().map(|m| m.circuit_id.as_str()).collect();
        assert_eq!(ids, ["fa", "fa", "fa", "fb", "fb", "fb"]);
        assert_eq!(dataset.schema.len(), 46);
    }

    #[test]
    fn build_matrix_labels_and_counts() {
        let window = DateWindow::new(date("2018-06-01"), date("2018-06-05")).unwrap();
        let events = vec![
            ignition("e1", date("2018-06-02"), 1_000.0, 20.0, Cause::VegetationContact),
            ignition("e2", date("2018-06-04"), 1_200.0, -30.0, Cause::EquipmentFailure),
        ];
        let corpus = tiny_corpus(window, events);
        let dataset = build_matrix(&corpus, TargetKind::FeederIgnition, &BufferRadii::default(), window).unwrap();
        assert_eq!(dataset.summary.n_pos, 2);
        assert_eq!(dataset.summary.n_events_total, 2);
        assert_eq!(dataset.summary.n_events_assigned, 2);

        let ign_col = dataset.schema.index_of("hist_ignition_count").unwrap();
        for i in 0..dataset.n_rows() {
            let m = &dataset.meta[i];
            if m.circuit_id == "fa" {
                let expect_label = u8::from(m.date == date("2018-06-02") || m.date == date("2018-06-04"));
                assert_eq!(dataset.y[i], expect_label);
                // Counts are strictly prior to the day.
                let expect_count = [date("2018-06-02"), date("2018-06-04")]
                    .iter()
                    .filter(|&&d| d < m.date)
                    .count() as f64;
                assert_eq!(dataset.x.get(i, ign_col), expect_count);
            } else {
                assert_eq!(dataset.y[i], 0);
                assert_eq!(dataset.x.get(i, ign_col), 0.0);
            }
        }
        let causes: Vec<Option<Cause>> = dataset
            .meta
            .iter()
            .filter(|m| m.circuit_id == "fa" && m.date == date("2018-06-02"))
            .map(|m| m.cause)
            .collect();
        assert_eq!(causes, vec![Some(Cause::VegetationContact)]);
    }

    #[test]
    fn missing_weather_drops_row_and_counts_it() {
        let window = DateWindow::new(date("2018-06-01"), date("2018-06-03")).unwrap();
        let mut corpus = tiny_corpus(
            window,
            vec![ignition("e1", date("2018-06-02"), 1_000.0, 10.0, Cause::Unknown)],
        );
        // Blank one gridMET field for fa's cell on the event day.
        for cell in corpus.weather.iter_mut() {
            if cell.cell_id == "c0" && cell.date == date("2018-06-02") {
                cell.values[3] = None;
            }
        }
        let dataset = build_matrix(&corpus, TargetKind::FeederIgnition, &BufferRadii::default(), window).unwrap();
        assert_eq!(dataset.summary.n_dropped, 1);
        assert_eq!(dataset.summary.n_dropped_positive, 1);
        assert_eq!(dataset.summary.n_pos, 0);
        assert_eq!(dataset.n_rows(), 5);
    }

    #[test]
    fn panel_emits_one_row_per_circuit_day_and_no_nan_after_drop() {
        let window = DateWindow::new(date("2018-06-01"), date("2018-06-04")).unwrap();
        let corpus = tiny_corpus(window, vec![]);
        let panel = assemble_panel(&corpus, TargetKind::FeederIgnition, &BufferRadii::default(), window).unwrap();
        assert_eq!(panel.rows.len(), panel.n_circuits * window.n_days());
        let mut seen = BTreeSet::new();
        for row in &panel.rows {
            assert!(seen.insert((row.circuit_id.clone(), row.date)));
        }
        let dataset = panel.finalize().unwrap();
        for i in 0..dataset.n_rows() {
            assert!(dataset.x.row(i).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn imbalance_degree_is_exact_ratio() {
        let summary = DatasetSummary {
            n_pos: 3,
            n_neg: 5_000,
            ..DatasetSummary::default()
        };
        assert_eq!(summary.imbalance_degree(), 3.0 / 5_000.0);
    }

    #[test]
    fn trailing_variant_identity_on_constant_weather() {
        let window = DateWindow::new(date("2018-06-01"), date("2018-06-20")).unwrap();
        let mut corpus = tiny_corpus(window, vec![]);
        for cell in corpus.weather.iter_mut() {
            cell.values = [Some(5.5); 13];
        }
        let panel = assemble_panel(&corpus, TargetKind::FeederIgnition, &BufferRadii::default(), window).unwrap();
        let variant = trailing_weather_variant(&panel, 7);
        let n_days = window.n_days();
        for (i, (orig, var)) in panel.rows.iter().zip(&variant.rows).enumerate() {
            let day_idx = i % n_days;
            if day_idx < 7 {
                // Insufficient history: weather columns go absent.
                assert!(var.features[0].is_nan());
            } else {
                for (a, b) in orig.features.iter().zip(&var.features) {
                    assert!((a - b).abs() < 1e-12 || (a.is_nan() && b.is_nan()));
                }
            }
        }
        // Dropped rows are counted.
        let dataset = variant.finalize().unwrap();
        assert_eq!(dataset.summary.n_dropped, 2 * 7);
    }

    #[test]
    fn trailing_variant_window_mean() {
        let window = DateWindow::new(date("2018-06-01"), date("2018-06-10")).unwrap();
        let mut corpus = tiny_corpus(window, vec![]);
        // max_t ramps 1..=10 over the days for every cell.
        for cell in corpus.weather.iter_mut() {
            let day = (cell.date - window.start).num_days() as f64;
            cell.values[10] = Some(day + 1.0);
        }
        let panel = assemble_panel(&corpus, TargetKind::FeederIgnition, &BufferRadii::default(), window).unwrap();
        let variant = trailing_weather_variant(&panel, 7);
        let col = panel.schema.index_of("max_t").unwrap();
        // Day index 7 (the 8th day): prior values are 1..=7, mean 4.
        assert!((variant.rows[7].features[col] - 4.0).abs() < 1e-12);
        // Brute-force check on the remaining full-history days.
        for day_idx in 7..10 {
            let mean = (day_idx - 6..=day_idx).map(|d| d as f64).sum::<f64>() / 7.0;
            assert!((variant.rows[day_idx].features[col] - mean).abs() < 1e-12);
        }
        // Non-weather features unchanged everywhere.
        let static_col = panel.schema.index_of("voltage_kv").unwrap();
        for (orig, var) in panel.rows.iter().zip(&variant.rows) {
            assert_eq!(orig.features[static_col], var.features[static_col]);
            assert_eq!(orig.label, var.label);
        }
    }

    #[test]
    fn cause_relabeling() {
        let window = DateWindow::new(date("2018-06-01"), date("2018-06-05")).unwrap();
        let events = vec![
            ignition("e1", date("2018-06-02"), 1_000.0, 20.0, Cause::VegetationContact),
            ignition("e2", date("2018-06-04"), 1_200.0, -30.0, Cause::EquipmentFailure),
        ];
        let corpus = tiny_corpus(window, events);
        let dataset = build_matrix(&corpus, TargetKind::FeederIgnition, &BufferRadii::default(), window).unwrap();
        let veg = cause_specific_labels(&dataset, Cause::VegetationContact);
        assert_eq!(veg.summary.n_pos, 1);
        // The equipment-failure day is now negative.
        for i in 0..veg.n_rows() {
            if veg.meta[i].date == date("2018-06-04") {
                assert_eq!(veg.y[i], 0);
            }
        }
        // Cause-specific positives are a subset of all-ignition positives.
        for i in 0..veg.n_rows() {
            assert!(veg.y[i] <= dataset.y[i]);
        }
    }

    #[test]
    fn temporal_split_windows() {
        let window = DateWindow::new(date("2015-01-01"), date("2019-11-30")).unwrap();
        // Sparse corpus is too slow here; synthesize a dataset directly.
        let schema = FeatureSchema::feeder();
        let dates = [date("2017-03-01"), date("2019-07-04"), date("2019-01-15")];
        let mut x = Matrix::zeros(0, schema.len());
        let mut meta = Vec::new();
        for d in dates {
            x.push_row(&vec![0.0; schema.len()]);
            meta.push(RowMeta {
                circuit_id: "fa".into(),
                date: d,
                cause: None,
            });
        }
        let dataset = Dataset {
            schema,
            x,
            y: vec![0, 1, 0],
            meta,
            summary: DatasetSummary::default(),
        };
        let train_w = DateWindow::new(date("2015-01-01"), date("2018-12-31")).unwrap();
        let test_w = DateWindow::new(date("2019-06-01"), date("2019-11-30")).unwrap();
        let (train, test) = temporal_split(&dataset, train_w, test_w).unwrap();
        assert_eq!(train.n_rows(), 1);
        assert_eq!(train.meta[0].date, date("2017-03-01"));
        assert_eq!(test.n_rows(), 1);
        assert_eq!(test.meta[0].date, date("2019-07-04"));
        // 2019-01-15 is excluded from both.
        assert_eq!(train.n_rows() + test.n_rows(), 2);

        let overlapping = DateWindow::new(date("2018-06-01"), date("2019-07-01")).unwrap();
        assert!(temporal_split(&dataset, overlapping, test_w).is_err());
        let _ = window;
    }

    #[test]
    fn matrix_csv_round_trip() {
        let window = DateWindow::new(date("2018-06-01"), date("2018-06-03")).unwrap();
        let corpus = tiny_corpus(
            window,
            vec![ignition("e1", date("2018-06-02"), 1_000.0, 20.0, Cause::ThirdParty)],
        );
        let dataset = build_matrix(&corpus, TargetKind::FeederIgnition, &BufferRadii::default(), window).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let matrix_path = dir.path().join("matrix.csv");
        let schema_path = dir.path().join("schema.csv");
        write_matrix_csv(&matrix_path, &dataset).unwrap();
        write_schema_csv(&schema_path, &dataset.schema).unwrap();
        let schema = read_schema_csv(&schema_path, TargetKind::FeederIgnition).unwrap();
        assert_eq!(schema, dataset.schema);
        let reloaded = read_matrix_csv(&matrix_path, &schema).unwrap();
        assert_eq!(reloaded.x, dataset.x);
        assert_eq!(reloaded.y, dataset.y);
        assert_eq!(reloaded.meta, dataset.meta);
    }

    #[test]
    fn ablation_restriction_keeps_schema_order() {
        let schema = FeatureSchema::feeder();
        let idx = schema.indices_for_categories(&[FeatureCategory::Derived]);
        let names: Vec<&str> = idx.iter().map(|&i| schema.defs()[i].name.as_str()).collect();
        assert_eq!(
            names,
            [
                "max_bi",
                "max_erc",
                "min_etr",
                "min_fm100",
                "min_fm1000",
                "min_pet",
                "max_vpd",
                "max_tree_height_m",
                "avg_tree_height_m"
            ]
        );
        // Restricting to every category is the identity.
        let all = schema.indices_for_categories(&[
            FeatureCategory::PrimaryClimate,
            FeatureCategory::Derived,
            FeatureCategory::StaticInfrastructure,
            FeatureCategory::DynamicInfrastructure,
        ]);
        assert_eq!(all, (0..schema.len()).collect::<Vec<_>>());
    }
}
