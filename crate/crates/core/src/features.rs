//! Predictor construction: the sixteen model inputs plus next-shift payload
//! target, min-max scaling, chronological splitting, and look-back windowing
//! for the recurrent model.
//!
//! Lag conventions: `*_lag1` comes from shift t-1; four-shift rollups cover
//! t-3..=t; the six-shift rain sum covers t-5..=t; `*_next` fields take the
//! actual values of shift t+1 except the two fleet predictions, which come
//! from the fleet forecaster. Rows without a full six-shift history and the
//! final shift (no t+1) are dropped.

use crate::ingest::{ShiftKind, ShiftRecord};
use crate::scalar::Scalar;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("need at least {needed} shift records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("fleet forecasts misaligned: expected {expected} entries, got {got}")]
    ForecastMisaligned { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTraining,
    #[error("crew `{0}` not present in the training vocabulary")]
    UnknownCrew(String),
    #[error("train_fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("dataset needs at least 2 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("{path}: unexpected header `{found}`")]
    Header { path: String, found: String },
}

/// One model input row: the Table of predictors plus the forecast target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub origin_shift_index: u64,
    pub crew_next: String,
    pub working_trucks: f64,
    pub predicted_working_trucks_next: f64,
    pub predicted_working_shovels_next: f64,
    pub working_shovels: f64,
    pub cycle_count: f64,
    pub payload: f64,
    pub cycle_time: f64,
    pub payload_lag1: f64,
    pub payload_rolling_sum_4: f64,
    pub shift_next: ShiftKind,
    pub working_trucks_lag1: f64,
    pub working_trucks_mean4: f64,
    pub precipitation: f64,
    pub precipitation_next: f64,
    pub precipitation_sum6: f64,
    /// Planning ablation: the actual next-shift truck count.
    pub working_trucks_next_true: Option<f64>,
    pub target_next_payload: f64,
}

/// Chronologically ordered feature rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<FeatureRow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn has_ablation_column(&self) -> bool {
        self.rows.first().is_some_and(|r| r.working_trucks_next_true.is_some())
    }
}

/// Build the feature dataset from chronological shift records and per-shift
/// fleet point forecasts (entry t predicts shift t+1).
pub fn build_features(
    records: &[ShiftRecord],
    fleet_forecasts: &[(f64, f64)],
    include_true_next_trucks: bool,
) -> Result<Dataset, FeatureError> {
    if records.len() < 8 {
        return Err(FeatureError::TooFewRecords { needed: 8, got: records.len() });
    }
    if fleet_forecasts.len() != records.len() {
        return Err(FeatureError::ForecastMisaligned {
            expected: records.len(),
            got: fleet_forecasts.len(),
        });
    }
    let mut rows = Vec::with_capacity(records.len().saturating_sub(6));
    for t in 5..records.len() - 1 {
        let cur = &records[t];
        let next = &records[t + 1];
        let prev = &records[t - 1];
        let payload_rolling_sum_4: f64 = records[t - 3..=t].iter().map(|r| r.payload).sum();
        let working_trucks_mean4: f64 =
            records[t - 3..=t].iter().map(|r| r.working_trucks as f64).sum::<f64>() / 4.0;
        let precipitation_sum6: f64 = records[t - 5..=t].iter().map(|r| r.precipitation).sum();
        rows.push(FeatureRow {
            origin_shift_index: cur.shift_index,
            crew_next: next.crew.clone(),
            working_trucks: cur.working_trucks as f64,
            predicted_working_trucks_next: fleet_forecasts[t].0,
            predicted_working_shovels_next: fleet_forecasts[t].1,
            working_shovels: cur.working_shovels as f64,
            cycle_count: cur.cycle_count as f64,
            payload: cur.payload,
            cycle_time: cur.cycle_time,
            payload_lag1: prev.payload,
            payload_rolling_sum_4,
            shift_next: next.shift_kind,
            working_trucks_lag1: prev.working_trucks as f64,
            working_trucks_mean4,
            precipitation: cur.precipitation,
            precipitation_next: next.precipitation,
            precipitation_sum6,
            working_trucks_next_true: include_true_next_trucks
                .then_some(next.working_trucks as f64),
            target_next_payload: next.payload,
        });
    }
    Ok(Dataset { rows })
}

/// First `floor(n * train_fraction)` rows to train, the rest to test. No
/// shuffling: order is chronological.
pub fn chronological_split(
    dataset: &Dataset,
    train_fraction: f64,
) -> Result<(Dataset, Dataset), FeatureError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(FeatureError::InvalidFraction(train_fraction));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(FeatureError::TooFewRows(n));
    }
    let cut = ((n as f64) * train_fraction).floor() as usize;
    let cut = cut.clamp(1, n - 1);
    Ok((
        Dataset { rows: dataset.rows[..cut].to_vec() },
        Dataset { rows: dataset.rows[cut..].to_vec() },
    ))
}

/// Categorical encoding frozen from a training vocabulary: crews one-hot in
/// sorted label order, next shift kind as a single night indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoding {
    pub crews: Vec<String>,
}

impl CategoricalEncoding {
    pub fn fit(train: &Dataset) -> Self {
        let crews: BTreeSet<String> = train.rows.iter().map(|r| r.crew_next.clone()).collect();
        Self { crews: crews.into_iter().collect() }
    }
}

/// Numeric design matrix with its column names, targets, and row provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub origin_shift_index: Vec<u64>,
}

/// Encode a dataset against a frozen vocabulary. A crew label missing from
/// the vocabulary is an error.
pub fn encode(
    dataset: &Dataset,
    encoding: &CategoricalEncoding,
) -> Result<EncodedMatrix, FeatureError> {
    let mut feature_names: Vec<String> = encoding
        .crews
        .iter()
        .map(|c| format!("crew_next_{c}"))
        .collect();
    feature_names.extend(
        [
            "working_trucks",
            "predicted_working_trucks_next",
            "predicted_working_shovels_next",
            "working_shovels",
            "cycle_count",
            "payload",
            "cycle_time",
            "payload_lag1",
            "payload_rolling_sum_4",
            "shift_next",
            "working_trucks_lag1",
            "working_trucks_mean4",
            "precipitation",
            "precipitation_next",
            "precipitation_sum6",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    if dataset.has_ablation_column() {
        feature_names.push("working_trucks_next_true".to_string());
    }

    let mut rows = Vec::with_capacity(dataset.len());
    let mut targets = Vec::with_capacity(dataset.len());
    let mut origin = Vec::with_capacity(dataset.len());
    for r in &dataset.rows {
        let crew_pos = encoding
            .crews
            .iter()
            .position(|c| c == &r.crew_next)
            .ok_or_else(|| FeatureError::UnknownCrew(r.crew_next.clone()))?;
        let mut row = vec![0.0; encoding.crews.len()];
        row[crew_pos] = 1.0;
        row.extend_from_slice(&[
            r.working_trucks,
            r.predicted_working_trucks_next,
            r.predicted_working_shovels_next,
            r.working_shovels,
            r.cycle_count,
            r.payload,
            r.cycle_time,
            r.payload_lag1,
            r.payload_rolling_sum_4,
            if r.shift_next == ShiftKind::Night { 1.0 } else { 0.0 },
            r.working_trucks_lag1,
            r.working_trucks_mean4,
            r.precipitation,
            r.precipitation_next,
            r.precipitation_sum6,
        ]);
        if let Some(v) = r.working_trucks_next_true {
            row.push(v);
        }
        debug_assert_eq!(row.len(), feature_names.len());
        rows.push(row);
        targets.push(r.target_next_payload);
        origin.push(r.origin_shift_index);
    }
    Ok(EncodedMatrix { feature_names, rows, targets, origin_shift_index: origin })
}

/// Per-column min-max parameters fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams<S> {
    pub mins: Vec<S>,
    pub maxs: Vec<S>,
}

impl<S: Scalar> ScalerParams<S> {
    /// Fit on training rows. Errors on an empty set.
    pub fn fit(rows: &[Vec<S>]) -> Result<Self, FeatureError> {
        let first = rows.first().ok_or(FeatureError::EmptyTraining)?;
        let mut mins = first.clone();
        let mut maxs = first.clone();
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                if v < mins[j] {
                    mins[j] = v;
                }
                if v > maxs[j] {
                    maxs[j] = v;
                }
            }
        }
        Ok(Self { mins, maxs })
    }

    /// `(x - min) / (max - min)`; a constant column maps to 0. Values outside
    /// the training range are not clipped.
    pub fn transform(&self, rows: &[Vec<S>]) -> Vec<Vec<S>> {
        rows.iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, &v)| self.scale_value(j, v))
                    .collect()
            })
            .collect()
    }

    pub fn scale_value(&self, column: usize, v: S) -> S {
        let span = self.maxs[column] - self.mins[column];
        if span == S::zero() {
            S::zero()
        } else {
            (v - self.mins[column]) / span
        }
    }

    pub fn n_features(&self) -> usize {
        self.mins.len()
    }
}

/// Min-max parameters for a single value stream (the LSTM target).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueScaler<S> {
    pub min: S,
    pub max: S,
}

impl<S: Scalar> ValueScaler<S> {
    pub fn fit(values: &[S]) -> Result<Self, FeatureError> {
        if values.is_empty() {
            return Err(FeatureError::EmptyTraining);
        }
        let mut min = values[0];
        let mut max = values[0];
        for &v in values {
            min = min.min(v);
            max = max.max(v);
        }
        Ok(Self { min, max })
    }

    pub fn scale(&self, v: S) -> S {
        let span = self.max - self.min;
        if span == S::zero() {
            S::zero()
        } else {
            (v - self.min) / span
        }
    }

    pub fn unscale(&self, v: S) -> S {
        v * (self.max - self.min) + self.min
    }
}

/// Sliding windows of `lookback` consecutive rows; the window ending at row t
/// carries row t's target. Yields `max(0, n - lookback + 1)` windows.
pub fn make_sequences<S: Scalar>(
    rows: &[Vec<S>],
    targets: &[S],
    lookback: usize,
) -> Vec<(Array2<S>, S)> {
    assert_eq!(rows.len(), targets.len(), "rows/targets misaligned");
    assert!(lookback >= 1, "lookback must be at least 1");
    if rows.len() < lookback {
        return Vec::new();
    }
    let width = rows.first().map_or(0, Vec::len);
    (lookback - 1..rows.len())
        .map(|t| {
            let mut window = Array2::zeros((lookback, width));
            for (k, row) in rows[t + 1 - lookback..=t].iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    window[[k, j]] = v;
                }
            }
            (window, targets[t])
        })
        .collect()
}

fn fmt_cell<T: Display>(v: T) -> String {
    v.to_string()
}

fn csv_header(ablation: bool) -> String {
    let mut h = String::from(
        "origin_shift_index,crew_next,working_trucks,predicted_working_trucks_next,\
         predicted_working_shovels_next,working_shovels,cycle_count,payload,cycle_time,\
         payload_lag1,payload_rolling_sum_4,shift_next,working_trucks_lag1,\
         working_trucks_mean4,precipitation,precipitation_next,precipitation_sum6",
    )
    .replace(char::is_whitespace, "");
    if ablation {
        h.push_str(",working_trucks_next_true");
    }
    h.push_str(",target_next_payload");
    h
}

/// Write the dataset as CSV with the canonical column names.
pub fn save_features_csv(path: impl AsRef<Path>, dataset: &Dataset) -> Result<(), FeatureError> {
    let path = path.as_ref();
    let ablation = dataset.has_ablation_column();
    let mut out = csv_header(ablation);
    out.push('\n');
    for r in &dataset.rows {
        let mut cells = vec![
            fmt_cell(r.origin_shift_index),
            r.crew_next.clone(),
            fmt_cell(r.working_trucks),
            fmt_cell(r.predicted_working_trucks_next),
            fmt_cell(r.predicted_working_shovels_next),
            fmt_cell(r.working_shovels),
            fmt_cell(r.cycle_count),
            fmt_cell(r.payload),
            fmt_cell(r.cycle_time),
            fmt_cell(r.payload_lag1),
            fmt_cell(r.payload_rolling_sum_4),
            r.shift_next.to_string(),
            fmt_cell(r.working_trucks_lag1),
            fmt_cell(r.working_trucks_mean4),
            fmt_cell(r.precipitation),
            fmt_cell(r.precipitation_next),
            fmt_cell(r.precipitation_sum6),
        ];
        if ablation {
            cells.push(fmt_cell(r.working_trucks_next_true.unwrap_or(0.0)));
        }
        cells.push(fmt_cell(r.target_next_payload));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let mut file = File::create(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(out.as_bytes()).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load a feature CSV written by [`save_features_csv`].
pub fn load_features_csv(path: impl AsRef<Path>) -> Result<Dataset, FeatureError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|source| FeatureError::Io { path: path.display().to_string(), source })?
        .unwrap_or_default();
    let ablation = match header.trim_end() {
        h if h == csv_header(false) => false,
        h if h == csv_header(true) => true,
        found => {
            return Err(FeatureError::Header {
                path: path.display().to_string(),
                found: found.to_string(),
            })
        }
    };
    let n_cols = if ablation { 19 } else { 18 };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row_no = i + 2;
        let line = line.map_err(|source| FeatureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_cols {
            return Err(FeatureError::Row {
                row: row_no,
                message: format!("expected {n_cols} columns, found {}", cells.len()),
            });
        }
        let f = |idx: usize| -> Result<f64, FeatureError> {
            cells[idx].trim().parse().map_err(|e| FeatureError::Row {
                row: row_no,
                message: format!("cannot parse `{}`: {e}", cells[idx]),
            })
        };
        let shift_next: ShiftKind = cells[11]
            .trim()
            .parse()
            .map_err(|e| FeatureError::Row { row: row_no, message: e })?;
        rows.push(FeatureRow {
            origin_shift_index: cells[0].trim().parse().map_err(|e| FeatureError::Row {
                row: row_no,
                message: format!("cannot parse `{}`: {e}", cells[0]),
            })?,
            crew_next: cells[1].trim().to_string(),
            working_trucks: f(2)?,
            predicted_working_trucks_next: f(3)?,
            predicted_working_shovels_next: f(4)?,
            working_shovels: f(5)?,
            cycle_count: f(6)?,
            payload: f(7)?,
            cycle_time: f(8)?,
            payload_lag1: f(9)?,
            payload_rolling_sum_4: f(10)?,
            shift_next,
            working_trucks_lag1: f(12)?,
            working_trucks_mean4: f(13)?,
            precipitation: f(14)?,
            precipitation_next: f(15)?,
            precipitation_sum6: f(16)?,
            working_trucks_next_true: if ablation { Some(f(17)?) } else { None },
            target_next_payload: f(if ablation { 18 } else { 17 })?,
        });
    }
    Ok(Dataset { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ShiftKind;
    use chrono::NaiveDate;

    fn record(i: u64, payload: f64, trucks: u32, rain: f64) -> ShiftRecord {
        ShiftRecord {
            shift_index: i,
            date: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap()
                + chrono::Duration::days((i / 2) as i64),
            shift_kind: if i % 2 == 0 { ShiftKind::Day } else { ShiftKind::Night },
            crew: ["A", "B"][(i % 2) as usize].to_string(),
            working_trucks: trucks,
            working_shovels: 5,
            cycle_count: 150,
            payload,
            cycle_time: 64.0,
            precipitation: rain,
        }
    }

    fn flat_forecasts(n: usize) -> Vec<(f64, f64)> {
        vec![(14.0, 5.0); n]
    }

    #[test]
    fn constant_series_identities() {
        let records: Vec<ShiftRecord> = (0..12).map(|i| record(i, 100.0, 10, 0.0)).collect();
        let ds = build_features(&records, &flat_forecasts(12), false).unwrap();
        for row in &ds.rows {
            assert_eq!(row.payload_lag1, 100.0);
            assert_eq!(row.payload_rolling_sum_4, 400.0);
            assert_eq!(row.working_trucks_mean4, 10.0);
            assert_eq!(row.precipitation_sum6, 0.0);
            assert_eq!(row.target_next_payload, 100.0);
        }
    }

    #[test]
    fn ramp_windows_match_hand_computation() {
        let records: Vec<ShiftRecord> =
            (0..10).map(|i| record(i, (i + 1) as f64, 10, 0.0)).collect();
        let ds = build_features(&records, &flat_forecasts(10), false).unwrap();
        // Row for t = 6 (0-indexed) is the second emitted row.
        let row = &ds.rows[1];
        assert_eq!(row.origin_shift_index, 6);
        assert_eq!(row.payload_lag1, 6.0);
        assert_eq!(row.payload_rolling_sum_4, 4.0 + 5.0 + 6.0 + 7.0);
        assert_eq!(row.target_next_payload, 8.0);
    }

    #[test]
    fn window_drop_rule() {
        let records: Vec<ShiftRecord> = (0..10).map(|i| record(i, 100.0, 10, 0.0)).collect();
        let ds = build_features(&records, &flat_forecasts(10), false).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.rows[0].origin_shift_index, 5);
        assert_eq!(ds.rows[3].origin_shift_index, 8);
    }

    #[test]
    fn brute_force_recomputation_on_simulated_shifts() {
        let config = crate::simdata::SimConfig { n_shifts: 1000, ..Default::default() };
        let records = crate::simdata::simulate_shifts(&config).unwrap();
        let forecasts = flat_forecasts(records.len());
        let ds = build_features(&records, &forecasts, false).unwrap();
        assert_eq!(ds.len(), records.len() - 6);
        for row in &ds.rows {
            let t = row.origin_shift_index as usize;
            // Independent recomputation with explicit loops.
            let mut roll4 = 0.0;
            let mut trucks4 = 0.0;
            for k in t - 3..=t {
                roll4 += records[k].payload;
                trucks4 += records[k].working_trucks as f64;
            }
            let mut rain6 = 0.0;
            for k in t - 5..=t {
                rain6 += records[k].precipitation;
            }
            assert_eq!(row.payload_lag1, records[t - 1].payload);
            assert_eq!(row.working_trucks_lag1, records[t - 1].working_trucks as f64);
            assert_eq!(row.payload_rolling_sum_4, roll4);
            assert_eq!(row.working_trucks_mean4, trucks4 / 4.0);
            assert_eq!(row.precipitation_sum6, rain6);
            assert_eq!(row.precipitation, records[t].precipitation);
            assert_eq!(row.precipitation_next, records[t + 1].precipitation);
            assert_eq!(row.crew_next, records[t + 1].crew);
            assert_eq!(row.shift_next, records[t + 1].shift_kind);
            assert_eq!(row.target_next_payload, records[t + 1].payload);
        }
    }

    #[test]
    fn misaligned_forecasts_rejected() {
        let records: Vec<ShiftRecord> = (0..10).map(|i| record(i, 100.0, 10, 0.0)).collect();
        assert!(matches!(
            build_features(&records, &flat_forecasts(9), false),
            Err(FeatureError::ForecastMisaligned { .. })
        ));
    }

    #[test]
    fn too_few_records_rejected() {
        let records: Vec<ShiftRecord> = (0..7).map(|i| record(i, 100.0, 10, 0.0)).collect();
        assert!(matches!(
            build_features(&records, &flat_forecasts(7), false),
            Err(FeatureError::TooFewRecords { .. })
        ));
    }

    #[test]
    fn scaler_endpoints_and_midpoint() {
        let rows = vec![vec![0.0], vec![5.0], vec![10.0]];
        let scaler = ScalerParams::<f64>::fit(&rows).unwrap();
        let scaled = scaler.transform(&rows);
        assert_eq!(scaled, vec![vec![0.0], vec![0.5], vec![1.0]]);
    }

    #[test]
    fn scaler_constant_column_maps_to_zero() {
        let rows = vec![vec![7.0], vec![7.0], vec![7.0]];
        let scaler = ScalerParams::<f64>::fit(&rows).unwrap();
        assert_eq!(scaler.transform(&rows), vec![vec![0.0]; 3]);
    }

    #[test]
    fn scaler_does_not_clip_out_of_range() {
        let rows = vec![vec![0.0], vec![10.0]];
        let scaler = ScalerParams::<f64>::fit(&rows).unwrap();
        assert_eq!(scaler.scale_value(0, 15.0), 1.5);
    }

    #[test]
    fn split_exact_fraction() {
        let ds = Dataset { rows: (0..100).map(sample_feature_row).collect() };
        let (train, test) = chronological_split(&ds, 0.8).unwrap();
        assert_eq!(train.len(), 80);
        assert_eq!(test.len(), 20);
    }

    #[test]
    fn split_floor_rule() {
        let ds = Dataset { rows: (0..5).map(sample_feature_row).collect() };
        let (train, test) = chronological_split(&ds, 0.8).unwrap();
        assert_eq!((train.len(), test.len()), (4, 1));
    }

    #[test]
    fn split_matches_published_test_count() {
        let ds = Dataset { rows: (0..1895).map(sample_feature_row).collect() };
        let (train, test) = chronological_split(&ds, 0.8).unwrap();
        assert_eq!((train.len(), test.len()), (1516, 379));
    }

    #[test]
    fn split_preserves_order_without_overlap() {
        let ds = Dataset { rows: (0..53).map(sample_feature_row).collect() };
        let (train, test) = chronological_split(&ds, 0.8).unwrap();
        let last_train = train.rows.last().unwrap().origin_shift_index;
        let first_test = test.rows.first().unwrap().origin_shift_index;
        assert!(last_train < first_test);
    }

    #[test]
    fn sequence_counts() {
        let rows = vec![vec![0.0]; 10];
        let targets: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(make_sequences(&rows, &targets, 10).len(), 1);
        let rows12 = vec![vec![0.0]; 12];
        let targets12: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let seqs = make_sequences(&rows12, &targets12, 10);
        assert_eq!(seqs.len(), 3);
        assert_eq!(seqs[0].1, 9.0);
        assert_eq!(seqs[2].1, 11.0);
        let rows9 = vec![vec![0.0]; 9];
        let targets9 = vec![0.0; 9];
        assert!(make_sequences(&rows9, &targets9, 10).is_empty());
    }

    #[test]
    fn encoding_is_frozen_from_training_vocabulary() {
        let mut rows: Vec<FeatureRow> = (0..4).map(sample_feature_row).collect();
        let train = Dataset { rows: rows.clone() };
        let encoding = CategoricalEncoding::fit(&train);
        assert_eq!(encoding.crews, vec!["A".to_string(), "B".to_string()]);
        rows[0].crew_next = "Z".to_string();
        let err = encode(&Dataset { rows }, &encoding).unwrap_err();
        assert!(matches!(err, FeatureError::UnknownCrew(c) if c == "Z"));
    }

    #[test]
    fn encoded_matrix_layout() {
        let ds = Dataset { rows: (0..3).map(sample_feature_row).collect() };
        let encoding = CategoricalEncoding::fit(&ds);
        let m = encode(&ds, &encoding).unwrap();
        assert_eq!(m.feature_names.len(), 2 + 15);
        assert_eq!(m.feature_names[0], "crew_next_A");
        assert_eq!(m.feature_names[2], "working_trucks");
        let night_col = m.feature_names.iter().position(|n| n == "shift_next").unwrap();
        for (row, fr) in m.rows.iter().zip(&ds.rows) {
            let expected = if fr.shift_next == ShiftKind::Night { 1.0 } else { 0.0 };
            assert_eq!(row[night_col], expected);
        }
    }

    #[test]
    fn features_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let ds = Dataset { rows: (0..6).map(sample_feature_row).collect() };
        save_features_csv(&path, &ds).unwrap();
        let loaded = load_features_csv(&path).unwrap();
        assert_eq!(ds, loaded);
    }

    fn sample_feature_row(i: usize) -> FeatureRow {
        FeatureRow {
            origin_shift_index: i as u64 + 5,
            crew_next: ["A", "B"][i % 2].to_string(),
            working_trucks: 10.0 + i as f64,
            predicted_working_trucks_next: 13.5,
            predicted_working_shovels_next: 4.5,
            working_shovels: 5.0,
            cycle_count: 150.0,
            payload: 13000.0 + i as f64,
            cycle_time: 64.25,
            payload_lag1: 12900.0,
            payload_rolling_sum_4: 52000.0,
            shift_next: if i % 2 == 0 { ShiftKind::Night } else { ShiftKind::Day },
            working_trucks_lag1: 11.0,
            working_trucks_mean4: 12.25,
            precipitation: 0.5,
            precipitation_next: 1.5,
            precipitation_sum6: 4.5,
            working_trucks_next_true: None,
            target_next_payload: 13100.0 + i as f64,
        }
    }
}
