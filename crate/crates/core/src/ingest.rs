//! Neutral-format input files and typed tables.
//!
//! The upstream source databases are proprietary, so the pipeline reads
//! documented CSV/GeoJSON schemas instead (see `SCHEMAS.md` in the repo
//! root): circuits as a GeoJSON FeatureCollection, weather and tree and
//! event tables as headered CSV with ISO-8601 dates. Absent values are
//! empty CSV fields, never sentinel numbers, so the downstream drop-missing
//! rule is unambiguous.
//!
//! Loading is single-threaded per file; distinct files may load
//! concurrently. All outputs are immutable tables.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde_json::Value;

use crate::spatial::{project_lonlat, PlanarPoint, Polyline};
use crate::{Error, Result};

/// The gridMET weather columns, in schema order. `max_`/`min_` prefixes name
/// the per-buffer reduction each field takes downstream.
pub const GRIDMET_FIELDS: [&str; 13] = [
    "max_bi",
    "max_erc",
    "min_etr",
    "min_fm100",
    "min_fm1000",
    "min_pet",
    "min_pr",
    "min_rh",
    "min_sph",
    "max_srad",
    "max_t",
    "max_vpd",
    "max_ws",
];

/// How a gridMET field aggregates over the cells inside a circuit's buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Max,
    Min,
}

/// Reduction direction for gridMET field `i`, taken from the name prefix.
pub fn gridmet_reduction(i: usize) -> Reduction {
    if GRIDMET_FIELDS[i].starts_with("max_") {
        Reduction::Max
    } else {
        Reduction::Min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitKind {
    Feeder,
    Transmission,
}

impl fmt::Display for CircuitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CircuitKind::Feeder => write!(f, "feeder"),
            CircuitKind::Transmission => write!(f, "transmission"),
        }
    }
}

/// Averaged component ages for one circuit in one calendar year.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ComponentAges {
    pub transformer: f64,
    pub conductor: f64,
    pub pole: f64,
}

/// Static infrastructure attributes of one feeder or transmission line.
///
/// Fraction families may sum to less than one (an unlisted class absorbs the
/// remainder) but never more than `1 + 1e-6`. Transmission lines carry only
/// voltage and length; the feeder-only families stay at zero.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CircuitStatic {
    pub circuit_id: String,
    pub kind: CircuitKind,
    pub voltage_kv: f64,
    pub length_mi: f64,
    /// Fractions of length in HFTD Tier 3, Tier 2, Zone 1, non-HFTD.
    pub hftd_fracs: [f64; 4],
    pub overhead_frac: f64,
    /// Pole material: wood, THBR, steel.
    pub pole_fracs: [f64; 3],
    /// Conductor material: AAC, ACSR, copper.
    pub conductor_fracs: [f64; 3],
    /// Conductor wind-speed code classes 2, 3, 4, ingested as given.
    pub wind_code_fracs: [f64; 3],
    /// Transformer climate zones R, S, T, X.
    pub xfmr_zone_fracs: [f64; 4],
    /// year -> (avg transformer age, avg overhead-conductor age, avg pole age).
    pub ages_by_year: BTreeMap<i32, ComponentAges>,
}

/// A circuit: static attributes plus projected geometry. MultiLineString
/// sources yield several parts; buffer rules treat the circuit as their union.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub attrs: CircuitStatic,
    pub parts: Vec<Polyline>,
    /// Original lon/lat vertices per part, kept for lossless serialization.
    pub parts_lonlat: Vec<Vec<(f64, f64)>>,
}

impl Circuit {
    pub fn id(&self) -> &str {
        &self.attrs.circuit_id
    }

    /// Total projected arc length over all parts, meters.
    pub fn arc_length_m(&self) -> f64 {
        self.parts.iter().map(|p| p.length_m).sum()
    }

    /// The point at half the total arc length, walking parts in file order.
    /// This is the "centroid" used for feeder-to-station pairing.
    pub fn arc_midpoint(&self) -> PlanarPoint {
        let target = self.arc_length_m() / 2.0;
        let mut walked = 0.0;
        for part in &self.parts {
            if walked + part.length_m >= target {
                return part.point_at_fraction((target - walked) / part.length_m);
            }
            walked += part.length_m;
        }
        *self.parts.last().unwrap().vertices.last().unwrap()
    }
}

/// One gridMET-style cell on one calendar day. Missing fields are `None`,
/// never zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyWeatherCell {
    pub cell_id: String,
    pub lonlat: (f64, f64),
    pub location: PlanarPoint,
    pub date: NaiveDate,
    pub values: [Option<f64>; 13],
}

/// One weather station reduced to one calendar day.
#[derive(Debug, Clone, PartialEq)]
pub struct StationDay {
    pub station_id: String,
    pub lonlat: (f64, f64),
    pub location: PlanarPoint,
    pub date: NaiveDate,
    pub max_ws: Option<f64>,
    pub avg_ws: Option<f64>,
    pub max_gust: Option<f64>,
    pub max_t: Option<f64>,
    pub min_rh: Option<f64>,
}

/// Raw hourly station reading before daily reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct StationHourly {
    pub station_id: String,
    pub lonlat: (f64, f64),
    pub location: PlanarPoint,
    pub timestamp: NaiveDateTime,
    pub ws: Option<f64>,
    pub gust: Option<f64>,
    pub t: Option<f64>,
    pub rh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeHeightSample {
    pub lonlat: (f64, f64),
    pub location: PlanarPoint,
    pub year: i32,
    pub height_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Ignition,
    WireDown,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Ignition => write!(f, "ignition"),
            EventKind::WireDown => write!(f, "wiredown"),
        }
    }
}

/// Ignition cause classes, plus `NotApplicable` for wire-down records.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    VegetationContact,
    ThirdParty,
    EquipmentFailure,
    Unknown,
    NotApplicable,
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Cause::VegetationContact => "vegetation_contact",
            Cause::ThirdParty => "third_party",
            Cause::EquipmentFailure => "equipment_failure",
            Cause::Unknown => "unknown",
            Cause::NotApplicable => "not_applicable",
        };
        write!(f, "{s}")
    }
}

/// One historical ignition or wire-down record.
///
/// Ignitions are located by lon/lat and assigned to a circuit spatially;
/// wire-down records already name their circuit. Ignitions carry one of the
/// four cause classes; wire-downs carry `NotApplicable`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub event_id: String,
    pub kind: EventKind,
    pub date: NaiveDate,
    pub lonlat: Option<(f64, f64)>,
    pub location: Option<PlanarPoint>,
    pub circuit_id: Option<String>,
    pub cause: Cause,
}

/// Raw-cause-string to cause-class mapping. Keys are matched after trimming
/// and lowercasing.
#[derive(Debug, Clone)]
pub struct CauseMap {
    map: BTreeMap<String, Cause>,
}

impl Default for CauseMap {
    fn default() -> Self {
        let mut map = BTreeMap::new();
        let entries: [(&str, Cause); 13] = [
            ("contact from vegetation", Cause::VegetationContact),
            ("vegetation", Cause::VegetationContact),
            ("vegetation_contact", Cause::VegetationContact),
            ("contact from 3rd party", Cause::ThirdParty),
            ("3rd party", Cause::ThirdParty),
            ("third_party", Cause::ThirdParty),
            ("car", Cause::ThirdParty),
            ("human", Cause::ThirdParty),
            ("animal", Cause::ThirdParty),
            ("equipment failure", Cause::EquipmentFailure),
            ("equipment_failure", Cause::EquipmentFailure),
            ("equipment", Cause::EquipmentFailure),
            ("unknown", Cause::Unknown),
        ];
        for (k, v) in entries {
            map.insert(k.to_string(), v);
        }
        CauseMap { map }
    }
}

impl CauseMap {
    pub fn with_entries(extra: &[(String, Cause)]) -> Self {
        let mut m = CauseMap::default();
        for (k, v) in extra {
            m.map.insert(k.trim().to_lowercase(), *v);
        }
        m
    }
}

/// Map a raw cause string onto the four-class cause enum.
pub fn encode_event_cause(raw: &str, mapping: &CauseMap) -> Result<Cause> {
    let key = raw.trim().to_lowercase();
    mapping
        .map
        .get(&key)
        .copied()
        .ok_or_else(|| Error::Validation(format!("unmapped event cause string: `{raw}`")))
}

/// Mean component age at `as_of_year`, or `None` when there are no
/// components. A future install year is a validation error.
pub fn average_component_age(install_years: &[i32], as_of_year: i32) -> Result<Option<f64>> {
    if install_years.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for &y in install_years {
        if y > as_of_year {
            return Err(Error::Validation(format!(
                "component install year {y} is after as-of year {as_of_year}"
            )));
        }
        sum += (as_of_year - y) as f64;
    }
    Ok(Some(sum / install_years.len() as f64))
}

/// Reduce hourly station rows to per-station-day extremes and means: max and
/// mean wind speed, max gust, max temperature, min relative humidity. A
/// field is absent for the day when every hourly value was absent.
pub fn reduce_station_hourly(rows: &[StationHourly]) -> Vec<StationDay> {
    let mut groups: BTreeMap<(String, NaiveDate), Vec<&StationHourly>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.station_id.clone(), row.timestamp.date()))
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|((station_id, date), rows)| {
            let first = rows[0];
            let ws: Vec<f64> = rows.iter().filter_map(|r| r.ws).collect();
            let gust: Vec<f64> = rows.iter().filter_map(|r| r.gust).collect();
            let t: Vec<f64> = rows.iter().filter_map(|r| r.t).collect();
            let rh: Vec<f64> = rows.iter().filter_map(|r| r.rh).collect();
            let max = |v: &[f64]| v.iter().copied().reduce(f64::max);
            let min = |v: &[f64]| v.iter().copied().reduce(f64::min);
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    None
                } else {
                    Some(v.iter().sum::<f64>() / v.len() as f64)
                }
            };
            StationDay {
                station_id,
                lonlat: first.lonlat,
                location: first.location,
                date,
                max_ws: max(&ws),
                avg_ws: mean(&ws),
                max_gust: max(&gust),
                max_t: max(&t),
                min_rh: min(&rh),
            }
        })
        .collect()
}

// ── file loading ─────────────────────────────────────────────────────────

/// Everything the featurizer needs, loaded and projected into one shared
/// planar frame.
#[derive(Debug, Clone)]
pub struct Corpus {
    /// Projection origin (lon, lat): the mean of all circuit vertices.
    pub origin: (f64, f64),
    pub circuits: Vec<Circuit>,
    pub weather: Vec<DailyWeatherCell>,
    pub station_days: Vec<StationDay>,
    pub trees: Vec<TreeHeightSample>,
    pub events: Vec<EventRecord>,
}

/// Input file locations. Station data may arrive raw (`station_hourly`) or
/// already reduced (`station_daily`); exactly one must be set.
#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub circuits: std::path::PathBuf,
    pub gridmet: std::path::PathBuf,
    pub station_hourly: Option<std::path::PathBuf>,
    pub station_daily: Option<std::path::PathBuf>,
    pub trees: std::path::PathBuf,
    pub events: std::path::PathBuf,
}

/// Load the full corpus. The projection origin is the mean of all circuit
/// vertices, so every table lands in the same planar frame.
pub fn load_corpus(paths: &CorpusPaths, cause_map: &CauseMap) -> Result<Corpus> {
    let origin = circuits_centroid(&paths.circuits)?;
    let circuits = load_circuits(&paths.circuits, origin)?;
    let weather = load_gridmet(&paths.gridmet, origin)?;
    let station_days = match (&paths.station_hourly, &paths.station_daily) {
        (Some(hourly), None) => {
            let rows = load_station_hourly(hourly, origin)?;
            reduce_station_hourly(&rows)
        }
        (None, Some(daily)) => load_station_daily(daily, origin)?,
        _ => {
            return Err(Error::Config(
                "exactly one of station_hourly / station_daily must be given".into(),
            ))
        }
    };
    let trees = load_trees(&paths.trees, origin)?;
    let events = load_events(&paths.events, origin, cause_map)?;
    Ok(Corpus {
        origin,
        circuits,
        weather,
        station_days,
        trees,
        events,
    })
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        row: e.line(),
        field: "json".into(),
        message: e.to_string(),
    })
}

/// Mean lon/lat over every circuit vertex: the canonical projection origin.
pub fn circuits_centroid(path: &Path) -> Result<(f64, f64)> {
    let doc = read_json(path)?;
    let mut sum = (0.0, 0.0);
    let mut n = 0usize;
    for feature in features(&doc, path)? {
        for part in geometry_parts(feature, path, 0)? {
            for (lon, lat) in part {
                sum.0 += lon;
                sum.1 += lat;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::Validation(format!(
            "{}: no circuit vertices, cannot anchor projection",
            path.display()
        )));
    }
    Ok((sum.0 / n as f64, sum.1 / n as f64))
}

fn features<'a>(doc: &'a Value, path: &Path) -> Result<&'a Vec<Value>> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row: 0,
            field: "type".into(),
            message: "expected a GeoJSON FeatureCollection".into(),
        });
    }
    doc.get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            row: 0,
            field: "features".into(),
            message: "missing features array".into(),
        })
}

fn geometry_parts(feature: &Value, path: &Path, row: usize) -> Result<Vec<Vec<(f64, f64)>>> {
    let parse_err = |field: &str, message: String| Error::Parse {
        path: path.display().to_string(),
        row,
        field: field.into(),
        message,
    };
    let geom = feature
        .get("geometry")
        .ok_or_else(|| parse_err("geometry", "missing geometry".into()))?;
    let gtype = geom
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| parse_err("geometry.type", "missing geometry type".into()))?;
    let coords = geom
        .get("coordinates")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("geometry.coordinates", "missing coordinates".into()))?;
    let parse_line = |line: &[Value]| -> Result<Vec<(f64, f64)>> {
        line.iter()
            .map(|pos| {
                let pair = pos
                    .as_array()
                    .filter(|a| a.len() >= 2)
                    .ok_or_else(|| parse_err("coordinates", "position is not [lon, lat]".into()))?;
                let lon = pair[0]
                    .as_f64()
                    .ok_or_else(|| parse_err("coordinates", "non-numeric longitude".into()))?;
                let lat = pair[1]
                    .as_f64()
                    .ok_or_else(|| parse_err("coordinates", "non-numeric latitude".into()))?;
                Ok((lon, lat))
            })
            .collect()
    };
    match gtype {
        "LineString" => Ok(vec![parse_line(coords)?]),
        "MultiLineString" => coords
            .iter()
            .map(|line| {
                let arr = line
                    .as_array()
                    .ok_or_else(|| parse_err("coordinates", "malformed MultiLineString".into()))?;
                parse_line(arr)
            })
            .collect(),
        other => Err(parse_err(
            "geometry.type",
            format!("unsupported geometry `{other}` (want LineString or MultiLineString)"),
        )),
    }
}

const FRACTION_KEYS: [(&str, usize); 17] = [
    ("hftd_tier3_frac", 0),
    ("hftd_tier2_frac", 1),
    ("hftd_zone1_frac", 2),
    ("hftd_non_frac", 3),
    ("pole_wood_frac", 4),
    ("pole_thbr_frac", 5),
    ("pole_steel_frac", 6),
    ("cond_aac_frac", 7),
    ("cond_acsr_frac", 8),
    ("cond_copper_frac", 9),
    ("wind_code2_frac", 10),
    ("wind_code3_frac", 11),
    ("wind_code4_frac", 12),
    ("xfmr_zone_r_frac", 13),
    ("xfmr_zone_s_frac", 14),
    ("xfmr_zone_t_frac", 15),
    ("xfmr_zone_x_frac", 16),
];

/// Load circuits from a GeoJSON FeatureCollection, validating fraction
/// families and projecting geometry around `origin`.
pub fn load_circuits(path: &Path, origin: (f64, f64)) -> Result<Vec<Circuit>> {
    let doc = read_json(path)?;
    let mut out = Vec::new();
    for (row, feature) in features(&doc, path)?.iter().enumerate() {
        let parse_err = |field: &str, message: String| Error::Parse {
            path: path.display().to_string(),
            row,
            field: field.into(),
            message,
        };
        let props = feature
            .get("properties")
            .and_then(Value::as_object)
            .ok_or_else(|| parse_err("properties", "missing properties object".into()))?;
        let get_str = |key: &str| -> Result<&str> {
            props
                .get(key)
                .and_then(Value::as_str)
                .ok_or_else(|| parse_err(key, "missing or non-string".into()))
        };
        let get_f64 = |key: &str| -> Result<f64> {
            props
                .get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| parse_err(key, "missing or non-numeric".into()))
        };
        let circuit_id = get_str("circuit_id")?.to_string();
        let kind = match get_str("kind")? {
            "feeder" => CircuitKind::Feeder,
            "transmission" => CircuitKind::Transmission,
            other => {
                return Err(parse_err(
                    "kind",
                    format!("`{other}` is not feeder|transmission"),
                ))
            }
        };
        let voltage_kv = get_f64("voltage_kv")?;
        let length_mi = get_f64("length_mi")?;
        if length_mi.is_nan() || length_mi <= 0.0 {
            return Err(Error::Validation(format!(
                "circuit `{circuit_id}`: length_mi must be positive, got {length_mi}"
            )));
        }

        let mut fracs = [0.0f64; 17];
        for (key, slot) in FRACTION_KEYS {
            if let Some(v) = props.get(key) {
                let f = v
                    .as_f64()
                    .ok_or_else(|| parse_err(key, "non-numeric fraction".into()))?;
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::Validation(format!(
                        "circuit `{circuit_id}`: {key} = {f} outside [0, 1]"
                    )));
                }
                fracs[slot] = f;
            }
        }
        let overhead_frac = match props.get("overhead_frac") {
            Some(v) => {
                let f = v
                    .as_f64()
                    .ok_or_else(|| parse_err("overhead_frac", "non-numeric".into()))?;
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::Validation(format!(
                        "circuit `{circuit_id}`: overhead_frac = {f} outside [0, 1]"
                    )));
                }
                f
            }
            None => 0.0,
        };
        let families: [(&str, &[f64]); 5] = [
            ("hftd", &fracs[0..4]),
            ("pole material", &fracs[4..7]),
            ("conductor material", &fracs[7..10]),
            ("wind-speed code", &fracs[10..13]),
            ("transformer zone", &fracs[13..17]),
        ];
        for (name, family) in families {
            let sum: f64 = family.iter().sum();
            if sum > 1.0 + 1e-6 {
                return Err(Error::Validation(format!(
                    "circuit `{circuit_id}`: {name} fractions sum to {sum} > 1"
                )));
            }
        }

        let mut ages_by_year = BTreeMap::new();
        if let Some(ages) = props.get("ages") {
            let obj = ages
                .as_object()
                .ok_or_else(|| parse_err("ages", "not an object".into()))?;
            for (year_key, entry) in obj {
                let year: i32 = year_key
                    .parse()
                    .map_err(|_| parse_err("ages", format!("bad year key `{year_key}`")))?;
                let get_age = |k: &str| -> Result<f64> {
                    let v = entry
                        .get(k)
                        .and_then(Value::as_f64)
                        .ok_or_else(|| parse_err("ages", format!("missing `{k}` for {year}")))?;
                    if v < 0.0 {
                        return Err(Error::Validation(format!(
                            "circuit `{circuit_id}`: negative age {v} for {year}/{k}"
                        )));
                    }
                    Ok(v)
                };
                ages_by_year.insert(
                    year,
                    ComponentAges {
                        transformer: get_age("xfmr")?,
                        conductor: get_age("cond")?,
                        pole: get_age("pole")?,
                    },
                );
            }
        }

        let parts_lonlat = geometry_parts(feature, path, row)?;
        let mut parts = Vec::with_capacity(parts_lonlat.len());
        for lonlat_part in &parts_lonlat {
            let vertices = project_lonlat(lonlat_part, origin)?;
            parts.push(Polyline::new(circuit_id.clone(), vertices)?);
        }

        out.push(Circuit {
            attrs: CircuitStatic {
                circuit_id,
                kind,
                voltage_kv,
                length_mi,
                hftd_fracs: [fracs[0], fracs[1], fracs[2], fracs[3]],
                overhead_frac,
                pole_fracs: [fracs[4], fracs[5], fracs[6]],
                conductor_fracs: [fracs[7], fracs[8], fracs[9]],
                wind_code_fracs: [fracs[10], fracs[11], fracs[12]],
                xfmr_zone_fracs: [fracs[13], fracs[14], fracs[15], fracs[16]],
                ages_by_year,
            },
            parts,
            parts_lonlat,
        });
    }
    Ok(out)
}

// ── CSV helpers ──────────────────────────────────────────────────────────

struct CsvTable {
    path: String,
    headers: Vec<String>,
    records: Vec<csv::StringRecord>,
}

fn read_csv(path: &Path, expected_headers: &[&str]) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row: 0,
            field: "file".into(),
            message: e.to_string(),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row: 0,
            field: "header".into(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if headers != expected_headers {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row: 0,
            field: "header".into(),
            message: format!(
                "expected columns {expected_headers:?}, found {headers:?}"
            ),
        });
    }
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        records.push(rec.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row: i + 1,
            field: "record".into(),
            message: e.to_string(),
        })?);
    }
    Ok(CsvTable {
        path: path.display().to_string(),
        headers,
        records,
    })
}

impl CsvTable {
    fn field<'a>(&self, rec: &'a csv::StringRecord, row: usize, col: usize) -> Result<&'a str> {
        rec.get(col).ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            row: row + 1,
            field: self.headers[col].clone(),
            message: "missing field".into(),
        })
    }

    fn f64_opt(&self, rec: &csv::StringRecord, row: usize, col: usize) -> Result<Option<f64>> {
        let raw = self.field(rec, row, col)?;
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse::<f64>().map(Some).map_err(|_| Error::Parse {
            path: self.path.clone(),
            row: row + 1,
            field: self.headers[col].clone(),
            message: format!("`{raw}` is not a number"),
        })
    }

    fn f64_req(&self, rec: &csv::StringRecord, row: usize, col: usize) -> Result<f64> {
        self.f64_opt(rec, row, col)?.ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            row: row + 1,
            field: self.headers[col].clone(),
            message: "required value is empty".into(),
        })
    }

    fn date(&self, rec: &csv::StringRecord, row: usize, col: usize) -> Result<NaiveDate> {
        let raw = self.field(rec, row, col)?;
        NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| Error::Parse {
            path: self.path.clone(),
            row: row + 1,
            field: self.headers[col].clone(),
            message: format!("`{raw}` is not an ISO-8601 date"),
        })
    }
}

pub const GRIDMET_HEADERS: [&str; 17] = [
    "cell_id",
    "lon",
    "lat",
    "date",
    "max_bi",
    "max_erc",
    "min_etr",
    "min_fm100",
    "min_fm1000",
    "min_pet",
    "min_pr",
    "min_rh",
    "min_sph",
    "max_srad",
    "max_t",
    "max_vpd",
    "max_ws",
];

pub fn load_gridmet(path: &Path, origin: (f64, f64)) -> Result<Vec<DailyWeatherCell>> {
    let table = read_csv(path, &GRIDMET_HEADERS)?;
    let mut out = Vec::with_capacity(table.records.len());
    for (row, rec) in table.records.iter().enumerate() {
        let cell_id = table.field(rec, row, 0)?.to_string();
        let lon = table.f64_req(rec, row, 1)?;
        let lat = table.f64_req(rec, row, 2)?;
        let date = table.date(rec, row, 3)?;
        let mut values = [None; 13];
        for (i, v) in values.iter_mut().enumerate() {
            *v = table.f64_opt(rec, row, 4 + i)?;
        }
        let location = project_lonlat(&[(lon, lat)], origin)?[0];
        out.push(DailyWeatherCell {
            cell_id,
            lonlat: (lon, lat),
            location,
            date,
            values,
        });
    }
    Ok(out)
}

pub const STATION_HOURLY_HEADERS: [&str; 8] =
    ["station_id", "lon", "lat", "timestamp", "ws", "gust", "t", "rh"];

pub fn load_station_hourly(path: &Path, origin: (f64, f64)) -> Result<Vec<StationHourly>> {
    let table = read_csv(path, &STATION_HOURLY_HEADERS)?;
    let mut out = Vec::with_capacity(table.records.len());
    for (row, rec) in table.records.iter().enumerate() {
        let raw_ts = table.field(rec, row, 3)?;
        let timestamp =
            NaiveDateTime::parse_from_str(raw_ts, "%Y-%m-%dT%H:%M:%S").map_err(|_| {
                Error::Parse {
                    path: table.path.clone(),
                    row: row + 1,
                    field: "timestamp".into(),
                    message: format!("`{raw_ts}` is not an ISO-8601 timestamp"),
                }
            })?;
        let lonlat = (table.f64_req(rec, row, 1)?, table.f64_req(rec, row, 2)?);
        out.push(StationHourly {
            station_id: table.field(rec, row, 0)?.to_string(),
            lonlat,
            location: project_lonlat(&[lonlat], origin)?[0],
            timestamp,
            ws: table.f64_opt(rec, row, 4)?,
            gust: table.f64_opt(rec, row, 5)?,
            t: table.f64_opt(rec, row, 6)?,
            rh: table.f64_opt(rec, row, 7)?,
        });
    }
    Ok(out)
}

pub const STATION_DAILY_HEADERS: [&str; 9] = [
    "station_id",
    "lon",
    "lat",
    "date",
    "max_ws",
    "avg_ws",
    "max_gust",
    "max_t",
    "min_rh",
];

pub fn load_station_daily(path: &Path, origin: (f64, f64)) -> Result<Vec<StationDay>> {
    let table = read_csv(path, &STATION_DAILY_HEADERS)?;
    let mut out = Vec::with_capacity(table.records.len());
    for (row, rec) in table.records.iter().enumerate() {
        let lonlat = (table.f64_req(rec, row, 1)?, table.f64_req(rec, row, 2)?);
        let day = StationDay {
            station_id: table.field(rec, row, 0)?.to_string(),
            lonlat,
            location: project_lonlat(&[lonlat], origin)?[0],
            date: table.date(rec, row, 3)?,
            max_ws: table.f64_opt(rec, row, 4)?,
            avg_ws: table.f64_opt(rec, row, 5)?,
            max_gust: table.f64_opt(rec, row, 6)?,
            max_t: table.f64_opt(rec, row, 7)?,
            min_rh: table.f64_opt(rec, row, 8)?,
        };
        if let (Some(mx), Some(av)) = (day.max_ws, day.avg_ws) {
            if mx < av {
                return Err(Error::Validation(format!(
                    "station `{}` on {}: max_ws {mx} < avg_ws {av}",
                    day.station_id, day.date
                )));
            }
        }
        out.push(day);
    }
    Ok(out)
}

pub const TREES_HEADERS: [&str; 4] = ["lon", "lat", "year", "height_m"];

pub fn load_trees(path: &Path, origin: (f64, f64)) -> Result<Vec<TreeHeightSample>> {
    let table = read_csv(path, &TREES_HEADERS)?;
    let mut out = Vec::with_capacity(table.records.len());
    for (row, rec) in table.records.iter().enumerate() {
        let lonlat = (table.f64_req(rec, row, 0)?, table.f64_req(rec, row, 1)?);
        let year = table.f64_req(rec, row, 2)? as i32;
        let height_m = table.f64_req(rec, row, 3)?;
        if height_m < 0.0 {
            return Err(Error::Validation(format!(
                "{} row {}: negative tree height {height_m}",
                table.path,
                row + 1
            )));
        }
        out.push(TreeHeightSample {
            lonlat,
            location: project_lonlat(&[lonlat], origin)?[0],
            year,
            height_m,
        });
    }
    Ok(out)
}

pub const EVENTS_HEADERS: [&str; 7] =
    ["event_id", "kind", "date", "lon", "lat", "circuit_id", "cause_raw"];

pub fn load_events(path: &Path, origin: (f64, f64), mapping: &CauseMap) -> Result<Vec<EventRecord>> {
    let table = read_csv(path, &EVENTS_HEADERS)?;
    let mut out = Vec::with_capacity(table.records.len());
    for (row, rec) in table.records.iter().enumerate() {
        let event_id = table.field(rec, row, 0)?.to_string();
        let kind = match table.field(rec, row, 1)? {
            "ignition" => EventKind::Ignition,
            "wiredown" => EventKind::WireDown,
            other => {
                return Err(Error::Parse {
                    path: table.path.clone(),
                    row: row + 1,
                    field: "kind".into(),
                    message: format!("`{other}` is not ignition|wiredown"),
                })
            }
        };
        let date = table.date(rec, row, 2)?;
        let lon = table.f64_opt(rec, row, 3)?;
        let lat = table.f64_opt(rec, row, 4)?;
        let circuit_id = {
            let raw = table.field(rec, row, 5)?;
            (!raw.is_empty()).then(|| raw.to_string())
        };
        let cause_raw = table.field(rec, row, 6)?;
        let (lonlat, location, circuit_id, cause) = match kind {
            EventKind::Ignition => {
                let (lon, lat) = match (lon, lat) {
                    (Some(lon), Some(lat)) => (lon, lat),
                    _ => {
                        return Err(Error::Validation(format!(
                            "ignition `{event_id}`: lon/lat required"
                        )))
                    }
                };
                if circuit_id.is_some() {
                    return Err(Error::Validation(format!(
                        "ignition `{event_id}`: circuit_id must be empty (assignment is spatial)"
                    )));
                }
                let cause = encode_event_cause(cause_raw, mapping)?;
                if cause == Cause::NotApplicable {
                    return Err(Error::Validation(format!(
                        "ignition `{event_id}`: cause must be one of the four ignition classes"
                    )));
                }
                let location = project_lonlat(&[(lon, lat)], origin)?[0];
                ((Some((lon, lat))), Some(location), None, cause)
            }
            EventKind::WireDown => {
                let circuit_id = circuit_id.ok_or_else(|| {
                    Error::Validation(format!("wiredown `{event_id}`: circuit_id required"))
                })?;
                let trimmed = cause_raw.trim();
                if !(trimmed.is_empty() || trimmed.eq_ignore_ascii_case("not_applicable")) {
                    return Err(Error::Validation(format!(
                        "wiredown `{event_id}`: cause_raw must be empty or not_applicable"
                    )));
                }
                (None, None, Some(circuit_id), Cause::NotApplicable)
            }
        };
        out.push(EventRecord {
            event_id,
            kind,
            date,
            lonlat,
            location,
            circuit_id,
            cause,
        });
    }
    Ok(out)
}

// ── canonical serialization ──────────────────────────────────────────────
//
// Writers emit exactly the schemas the loaders accept, so load → write →
// load is the identity on typed content. Floats use Rust's shortest
// round-trip formatting.

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(std::io::BufWriter::new(file))
}

pub fn write_circuits_geojson(path: &Path, circuits: &[Circuit]) -> Result<()> {
    let features: Vec<Value> = circuits
        .iter()
        .map(|c| {
            let a = &c.attrs;
            let mut props = serde_json::Map::new();
            props.insert("circuit_id".into(), a.circuit_id.clone().into());
            props.insert("kind".into(), a.kind.to_string().into());
            props.insert("voltage_kv".into(), a.voltage_kv.into());
            props.insert("length_mi".into(), a.length_mi.into());
            if a.kind == CircuitKind::Feeder {
                let fracs = [
                    a.hftd_fracs[0],
                    a.hftd_fracs[1],
                    a.hftd_fracs[2],
                    a.hftd_fracs[3],
                    a.pole_fracs[0],
                    a.pole_fracs[1],
                    a.pole_fracs[2],
                    a.conductor_fracs[0],
                    a.conductor_fracs[1],
                    a.conductor_fracs[2],
                    a.wind_code_fracs[0],
                    a.wind_code_fracs[1],
                    a.wind_code_fracs[2],
                    a.xfmr_zone_fracs[0],
                    a.xfmr_zone_fracs[1],
                    a.xfmr_zone_fracs[2],
                    a.xfmr_zone_fracs[3],
                ];
                for ((key, _), v) in FRACTION_KEYS.iter().zip(fracs) {
                    props.insert((*key).into(), v.into());
                }
                props.insert("overhead_frac".into(), a.overhead_frac.into());
                let mut ages = serde_json::Map::new();
                for (year, entry) in &a.ages_by_year {
                    let mut rec = serde_json::Map::new();
                    rec.insert("xfmr".into(), entry.transformer.into());
                    rec.insert("cond".into(), entry.conductor.into());
                    rec.insert("pole".into(), entry.pole.into());
                    ages.insert(year.to_string(), rec.into());
                }
                props.insert("ages".into(), ages.into());
            }
            let geometry: Value = if c.parts_lonlat.len() == 1 {
                serde_json::json!({
                    "type": "LineString",
                    "coordinates": c.parts_lonlat[0].iter().map(|(lon, lat)| vec![*lon, *lat]).collect::<Vec<_>>(),
                })
            } else {
                serde_json::json!({
                    "type": "MultiLineString",
                    "coordinates": c.parts_lonlat.iter().map(|part| part.iter().map(|(lon, lat)| vec![*lon, *lat]).collect::<Vec<_>>()).collect::<Vec<_>>(),
                })
            };
            serde_json::json!({
                "type": "Feature",
                "geometry": geometry,
                "properties": Value::Object(props),
            })
        })
        .collect();
    let doc = serde_json::json!({ "type": "FeatureCollection", "features": features });
    let mut file = create(path)?;
    serde_json::to_writer(&mut file, &doc).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        row: 0,
        field: "json".into(),
        message: e.to_string(),
    })?;
    writeln!(file).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn write_gridmet_csv(path: &Path, cells: &[DailyWeatherCell]) -> Result<()> {
    let mut file = create(path)?;
    writeln!(file, "{}", GRIDMET_HEADERS.join(",")).map_err(|e| Error::io(path.display().to_string(), e))?;
    for c in cells {
        let values: Vec<String> = c.values.iter().map(|v| fmt_opt(*v)).collect();
        writeln!(
            file,
            "{},{},{},{},{}",
            c.cell_id,
            c.lonlat.0,
            c.lonlat.1,
            c.date,
            values.join(",")
        )
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn write_station_daily_csv(path: &Path, days: &[StationDay]) -> Result<()> {
    let mut file = create(path)?;
    writeln!(file, "{}", STATION_DAILY_HEADERS.join(",")).map_err(|e| Error::io(path.display().to_string(), e))?;
    for d in days {
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{}",
            d.station_id,
            d.lonlat.0,
            d.lonlat.1,
            d.date,
            fmt_opt(d.max_ws),
            fmt_opt(d.avg_ws),
            fmt_opt(d.max_gust),
            fmt_opt(d.max_t),
            fmt_opt(d.min_rh)
        )
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn write_station_hourly_csv(path: &Path, rows: &[StationHourly]) -> Result<()> {
    let mut file = create(path)?;
    writeln!(file, "{}", STATION_HOURLY_HEADERS.join(",")).map_err(|e| Error::io(path.display().to_string(), e))?;
    for r in rows {
        writeln!(
            file,
            "{},{},{},{},{},{},{},{}",
            r.station_id,
            r.lonlat.0,
            r.lonlat.1,
            r.timestamp.format("%Y-%m-%dT%H:%M:%S"),
            fmt_opt(r.ws),
            fmt_opt(r.gust),
            fmt_opt(r.t),
            fmt_opt(r.rh)
        )
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn write_trees_csv(path: &Path, trees: &[TreeHeightSample]) -> Result<()> {
    let mut file = create(path)?;
    writeln!(file, "{}", TREES_HEADERS.join(",")).map_err(|e| Error::io(path.display().to_string(), e))?;
    for t in trees {
        writeln!(file, "{},{},{},{}", t.lonlat.0, t.lonlat.1, t.year, t.height_m)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn write_events_csv(path: &Path, events: &[EventRecord]) -> Result<()> {
    let mut file = create(path)?;
    writeln!(file, "{}", EVENTS_HEADERS.join(",")).map_err(|e| Error::io(path.display().to_string(), e))?;
    for e in events {
        let (lon, lat) = match e.lonlat {
            Some((lon, lat)) => (lon.to_string(), lat.to_string()),
            None => (String::new(), String::new()),
        };
        let cause = match e.kind {
            EventKind::Ignition => e.cause.to_string(),
            EventKind::WireDown => String::new(),
        };
        writeln!(
            file,
            "{},{},{},{},{},{},{}",
            e.event_id,
            e.kind,
            e.date,
            lon,
            lat,
            e.circuit_id.clone().unwrap_or_default(),
            cause
        )
        .map_err(|err| Error::io(path.display().to_string(), err))?;
    }
    Ok(())
}
