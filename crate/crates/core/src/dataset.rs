//! Tabular multi-station KPI time-series: data model, csv ingestion, temporal
//! feature derivation, and horizon-aligned train/evaluation slicing.
//!
//! Dates are carried as integer day offsets from 1970-01-01; calendar
//! conversion happens only at i/o boundaries so date arithmetic stays free of
//! timezone concerns. Missing data is modeled as absent rows, never as
//! sentinel values.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calendar day as an offset from 1970-01-01.
#[derive(Debug, Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Day(pub i64);

const EPOCH_DAYS_FROM_CE: i64 = 719_163; // 1970-01-01

impl Day {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Day> {
        NaiveDate::from_ymd_opt(year, month, day)
            .map(|d| Day(i64::from(d.num_days_from_ce()) - EPOCH_DAYS_FROM_CE))
    }

    pub fn parse_iso(s: &str) -> Option<Day> {
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .ok()
            .map(|d| Day(i64::from(d.num_days_from_ce()) - EPOCH_DAYS_FROM_CE))
    }

    fn to_naive(self) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt((self.0 + EPOCH_DAYS_FROM_CE) as i32)
            .expect("day offset out of calendar range")
    }

    /// Day of week with Monday = 0 .. Sunday = 6.
    pub fn day_of_week(self) -> u32 {
        // 1970-01-01 was a Thursday (= 3 under Monday = 0).
        ((self.0 + 3).rem_euclid(7)) as u32
    }

    pub fn month(self) -> u32 {
        self.to_naive().month()
    }

    pub fn year(self) -> i32 {
        self.to_naive().year()
    }

    pub fn offset(self, days: i64) -> Day {
        Day(self.0 + days)
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_naive().format("%Y-%m-%d"))
    }
}

impl Serialize for Day {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Day {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        Day::parse_iso(&s).ok_or_else(|| serde::de::Error::custom(format!("bad date {s:?}")))
    }
}

/// Stable identifier of a row within the frame universe it was created in.
/// Survives slicing and mitigation so provenance can be audited.
pub type RowId = u64;

/// One (station, date) observation: feature vector plus an optional target.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiRow {
    pub id: RowId,
    pub station: String,
    pub feature_date: Day,
    pub target_date: Day,
    pub features: Vec<f64>,
    pub target: Option<f64>,
}

/// Feature/target pairing across a forecast horizon.
#[derive(Debug, Copy, Clone, PartialEq, Eq)]
pub struct HorizonPair {
    pub feature_date: Day,
    pub target_date: Day,
    pub horizon_days: u32,
}

impl HorizonPair {
    pub fn new(feature_date: Day, horizon_days: u32) -> Result<HorizonPair> {
        if horizon_days == 0 {
            return Err(Error::EmptyResult("horizon must be >= 1".into()));
        }
        Ok(HorizonPair {
            feature_date,
            target_date: feature_date.offset(i64::from(horizon_days)),
            horizon_days,
        })
    }
}

/// Contiguous training window ending at `end_date`, covering
/// `[end_date - length_days + 1, end_date]` on feature dates.
#[derive(Debug, Copy, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainWindow {
    pub end_date: Day,
    pub length_days: u32,
}

impl TrainWindow {
    pub fn new(end_date: Day, length_days: u32) -> TrainWindow {
        assert!(length_days >= 1, "window length must be positive");
        TrainWindow {
            end_date,
            length_days,
        }
    }

    pub fn start_date(&self) -> Day {
        self.end_date.offset(-(i64::from(self.length_days) - 1))
    }

    pub fn contains(&self, d: Day) -> bool {
        d >= self.start_date() && d <= self.end_date
    }
}

/// Column roles for csv ingestion. Feature columns left empty means
/// "every column that is not station/date/target".
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub station: String,
    pub date: String,
    pub target: String,
    #[serde(default)]
    pub features: Vec<String>,
}

impl CsvSchema {
    pub fn with_target(target: &str) -> CsvSchema {
        CsvSchema {
            station: "station".into(),
            date: "date".into(),
            target: target.into(),
            features: Vec::new(),
        }
    }
}

/// Dense tabular dataset keyed by (station, date).
///
/// A raw frame has `horizon_days == 0` and `feature_date == target_date` on
/// every row; [`make_supervised`] produces frames whose rows pair the features
/// of `(station, t)` with the target observed at `t + horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiFrame {
    feature_names: Vec<String>,
    target_name: String,
    horizon_days: u32,
    rows: Vec<KpiRow>,
}

impl KpiFrame {
    /// Build a frame from parts, validating the dense-schema and finiteness
    /// invariants. Row ids are assigned sequentially.
    pub fn from_parts(
        feature_names: Vec<String>,
        target_name: String,
        rows: Vec<(String, Day, Vec<f64>, Option<f64>)>,
    ) -> Result<KpiFrame> {
        let mut seen: HashSet<(String, Day)> = HashSet::new();
        let mut out = Vec::with_capacity(rows.len());
        for (i, (station, date, features, target)) in rows.into_iter().enumerate() {
            if features.len() != feature_names.len() {
                return Err(Error::UnparseableCell {
                    row: i + 1,
                    column: "<features>".into(),
                    value: format!("{} values, expected {}", features.len(), feature_names.len()),
                });
            }
            if !seen.insert((station.clone(), date)) {
                return Err(Error::DuplicateKey {
                    station,
                    date: date.to_string(),
                });
            }
            if features.iter().any(|v| !v.is_finite())
                || target.is_some_and(|t| !t.is_finite())
            {
                return Err(Error::NonFiniteValues {
                    cells: vec![(i + 1, "<constructed>".into())],
                });
            }
            out.push(KpiRow {
                id: i as RowId,
                station,
                feature_date: date,
                target_date: date,
                features,
                target,
            });
        }
        Ok(KpiFrame {
            feature_names,
            target_name,
            horizon_days: 0,
            rows: out,
        })
    }

    /// Assemble a frame directly from rows that already carry ids and horizon
    /// metadata (mitigation output, slices). No uniqueness check: restructured
    /// training sets may intentionally duplicate rows.
    pub fn from_rows(
        feature_names: Vec<String>,
        target_name: String,
        horizon_days: u32,
        rows: Vec<KpiRow>,
    ) -> KpiFrame {
        KpiFrame {
            feature_names,
            target_name,
            horizon_days,
            rows,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn horizon_days(&self) -> u32 {
        self.horizon_days
    }

    pub fn rows(&self) -> &[KpiRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// Column of feature values in row order.
    pub fn feature_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .feature_index(name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r.features[idx]).collect())
    }

    /// Targets in row order; errors on the first unlabeled row.
    pub fn targets(&self) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.target.ok_or(Error::MissingTarget(r.id)))
            .collect()
    }

    pub fn min_feature_date(&self) -> Option<Day> {
        self.rows.iter().map(|r| r.feature_date).min()
    }

    pub fn max_feature_date(&self) -> Option<Day> {
        self.rows.iter().map(|r| r.feature_date).max()
    }

    pub fn max_target_date(&self) -> Option<Day> {
        self.rows.iter().map(|r| r.target_date).max()
    }

    /// Row indices grouped by target date, dates ascending.
    pub fn rows_by_target_date(&self) -> BTreeMap<Day, Vec<usize>> {
        let mut map: BTreeMap<Day, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            map.entry(r.target_date).or_default().push(i);
        }
        map
    }

    /// Sub-frame of rows whose target date lies in `[from, to]`.
    pub fn filter_target_dates(&self, from: Day, to: Day) -> KpiFrame {
        let rows = self
            .rows
            .iter()
            .filter(|r| r.target_date >= from && r.target_date <= to)
            .cloned()
            .collect();
        KpiFrame {
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            horizon_days: self.horizon_days,
            rows,
        }
    }

    /// Re-target the frame on another column: the named feature becomes the
    /// target and the old target joins the features under its own name.
    /// Requires every row to be labeled and a raw (horizon 0) frame.
    pub fn with_target(&self, name: &str) -> Result<KpiFrame> {
        if name == self.target_name {
            return Ok(self.clone());
        }
        let idx = self
            .feature_index(name)
            .ok_or_else(|| Error::TargetAbsent(name.to_string()))?;
        let mut feature_names = self.feature_names.clone();
        feature_names[idx] = self.target_name.clone();
        let mut rows = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            let old_target = r.target.ok_or(Error::MissingTarget(r.id))?;
            let mut features = r.features.clone();
            let new_target = features[idx];
            features[idx] = old_target;
            rows.push(KpiRow {
                target: Some(new_target),
                features,
                ..r.clone()
            });
        }
        Ok(KpiFrame {
            feature_names,
            target_name: name.to_string(),
            horizon_days: self.horizon_days,
            rows,
        })
    }
}

/// Load a csv file into a frame. Expects a header row, ISO-8601 dates, and
/// finite numerics; rows carrying non-finite values are rejected together in
/// one row-indexed report.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<KpiFrame> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let station_idx = col(&schema.station)?;
    let date_idx = col(&schema.date)?;
    let target_idx = col(&schema.target)?;

    let feature_names: Vec<String> = if schema.features.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != station_idx && *i != date_idx && *i != target_idx)
            .map(|(_, h)| h.clone())
            .collect()
    } else {
        schema.features.clone()
    };
    if feature_names.is_empty() {
        return Err(Error::MissingColumn("<at least one feature>".into()));
    }
    let feature_idx: Vec<usize> = feature_names
        .iter()
        .map(|n| col(n))
        .collect::<Result<_>>()?;

    let mut seen: HashSet<(String, Day)> = HashSet::new();
    let mut non_finite: Vec<(usize, String)> = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let station = record.get(station_idx).unwrap_or("").to_string();
        let date_str = record.get(date_idx).unwrap_or("");
        let date = Day::parse_iso(date_str).ok_or_else(|| Error::BadDate {
            row: row_no,
            value: date_str.to_string(),
        })?;
        if !seen.insert((station.clone(), date)) {
            return Err(Error::DuplicateKey {
                station,
                date: date.to_string(),
            });
        }
        let parse_cell = |idx: usize, name: &str| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            raw.trim()
                .parse::<f64>()
                .map_err(|_| Error::UnparseableCell {
                    row: row_no,
                    column: name.to_string(),
                    value: raw.to_string(),
                })
        };
        let mut features = Vec::with_capacity(feature_idx.len());
        for (idx, name) in feature_idx.iter().zip(&feature_names) {
            let v = parse_cell(*idx, name)?;
            if !v.is_finite() {
                non_finite.push((row_no, name.clone()));
            }
            features.push(v);
        }
        let target_raw = record.get(target_idx).unwrap_or("").trim();
        let target = if target_raw.is_empty() {
            None
        } else {
            let v = parse_cell(target_idx, &schema.target)?;
            if !v.is_finite() {
                non_finite.push((row_no, schema.target.clone()));
            }
            Some(v)
        };
        rows.push(KpiRow {
            id: i as RowId,
            station,
            feature_date: date,
            target_date: date,
            features,
            target,
        });
    }
    if !non_finite.is_empty() {
        return Err(Error::NonFiniteValues { cells: non_finite });
    }
    Ok(KpiFrame {
        feature_names,
        target_name: schema.target.clone(),
        horizon_days: 0,
        rows,
    })
}

/// Write a frame as csv: `station,date,<features...>,<target>`. Floats use the
/// shortest representation that round-trips, so load/write cycles are stable.
pub fn write_csv(frame: &KpiFrame, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["station".to_string(), "date".to_string()];
    header.extend(frame.feature_names.iter().cloned());
    header.push(frame.target_name.clone());
    writer.write_record(&header)?;
    for row in &frame.rows {
        let mut record = vec![row.station.clone(), row.feature_date.to_string()];
        record.extend(row.features.iter().map(|v| v.to_string()));
        record.push(row.target.map(|t| t.to_string()).unwrap_or_default());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Add `day_of_week` (Monday = 0), `month`, and `year` feature columns derived
/// from each row's feature date.
pub fn add_temporal_features(frame: &KpiFrame) -> Result<KpiFrame> {
    for name in ["day_of_week", "month", "year"] {
        if frame.feature_names.iter().any(|f| f == name) || frame.target_name == name {
            return Err(Error::ColumnCollision(name.to_string()));
        }
    }
    let mut feature_names = frame.feature_names.clone();
    feature_names.extend(["day_of_week".into(), "month".into(), "year".into()]);
    let rows = frame
        .rows
        .iter()
        .map(|r| {
            let mut features = r.features.clone();
            features.push(f64::from(r.feature_date.day_of_week()));
            features.push(f64::from(r.feature_date.month()));
            features.push(f64::from(r.feature_date.year()));
            KpiRow {
                features,
                ..r.clone()
            }
        })
        .collect();
    Ok(KpiFrame {
        feature_names,
        target_name: frame.target_name.clone(),
        horizon_days: frame.horizon_days,
        rows,
    })
}

/// True once the temporal columns are present.
pub fn has_temporal_features(frame: &KpiFrame) -> bool {
    ["day_of_week", "month", "year"]
        .iter()
        .all(|n| frame.feature_names.iter().any(|f| f == *n))
}

/// Pair the features of `(station, t)` with the target observed at
/// `(station, t + horizon_days)`. Rows with no partner at the horizon are
/// dropped; the surviving count is the output length.
pub fn make_supervised(frame: &KpiFrame, horizon_days: u32) -> Result<KpiFrame> {
    if horizon_days == 0 {
        return Err(Error::EmptyResult("horizon must be >= 1".into()));
    }
    let mut by_station: BTreeMap<&str, BTreeMap<Day, &KpiRow>> = BTreeMap::new();
    for row in &frame.rows {
        by_station
            .entry(row.station.as_str())
            .or_default()
            .insert(row.feature_date, row);
    }
    let mut rows = Vec::new();
    let mut next_id: RowId = 0;
    for dates in by_station.values() {
        for (&t, row) in dates {
            let target_date = t.offset(i64::from(horizon_days));
            if let Some(partner) = dates.get(&target_date) {
                if let Some(target) = partner.target {
                    rows.push(KpiRow {
                        id: next_id,
                        station: row.station.clone(),
                        feature_date: t,
                        target_date,
                        features: row.features.clone(),
                        target: Some(target),
                    });
                    next_id += 1;
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no (feature, target) pair exists at horizon {horizon_days}"
        )));
    }
    log::debug!(
        "make_supervised: {} rows in, {} supervised rows out (horizon {horizon_days})",
        frame.rows.len(),
        rows.len()
    );
    Ok(KpiFrame {
        feature_names: frame.feature_names.clone(),
        target_name: frame.target_name.clone(),
        horizon_days,
        rows,
    })
}

/// Rows whose feature date lies inside the window, all stations. Row ids are
/// preserved.
pub fn slice(frame: &KpiFrame, window: TrainWindow) -> Result<KpiFrame> {
    let rows: Vec<KpiRow> = frame
        .rows
        .iter()
        .filter(|r| window.contains(r.feature_date))
        .cloned()
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyResult(format!(
            "window {}..{} selects no rows",
            window.start_date(),
            window.end_date
        )));
    }
    Ok(KpiFrame {
        feature_names: frame.feature_names.clone(),
        target_name: frame.target_name.clone(),
        horizon_days: frame.horizon_days,
        rows,
    })
}

/// Content equality ignoring row ids (slices keep ids, re-pairing reassigns
/// them).
pub fn content_eq(a: &KpiFrame, b: &KpiFrame) -> bool {
    a.feature_names == b.feature_names
        && a.target_name == b.target_name
        && a.horizon_days == b.horizon_days
        && a.rows.len() == b.rows.len()
        && a.rows.iter().zip(&b.rows).all(|(x, y)| {
            x.station == y.station
                && x.feature_date == y.feature_date
                && x.target_date == y.target_date
                && x.features == y.features
                && x.target == y.target
        })
}

/// Concatenate unique-by-id rows of `a` and `b` into one candidate pool;
/// first occurrence wins.
pub fn union_by_id(a: &KpiFrame, b: &KpiFrame) -> KpiFrame {
    let mut seen: HashMap<RowId, ()> = HashMap::new();
    let mut rows = Vec::with_capacity(a.rows.len() + b.rows.len());
    for r in a.rows.iter().chain(b.rows.iter()) {
        if seen.insert(r.id, ()).is_none() {
            rows.push(r.clone());
        }
    }
    KpiFrame {
        feature_names: a.feature_names.clone(),
        target_name: a.target_name.clone(),
        horizon_days: a.horizon_days,
        rows,
    }
}
