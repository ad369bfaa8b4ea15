//! Canonical shift-record data model, CSV ingestion, rain gap repair, and
//! hourly-to-shift precipitation aggregation.
//!
//! The shift CSV schema is fixed:
//! `shift_index,date,shift_kind,crew,working_trucks,working_shovels,cycle_count,payload,cycle_time,precipitation`
//! (comma separated, UTF-8, `.` decimal). The hourly rain schema is
//! `timestamp,precip_mm` with ISO-8601 timestamps; an empty cell is a missing
//! observation.

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

/// Exact header of the shift CSV.
pub const SHIFT_CSV_HEADER: &str = "shift_index,date,shift_kind,crew,working_trucks,working_shovels,cycle_count,payload,cycle_time,precipitation";
/// Exact header of the hourly rain CSV.
pub const RAIN_CSV_HEADER: &str = "timestamp,precip_mm";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header {
        path: String,
        expected: String,
        found: String,
    },
    #[error("row {row}: column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("record validation failed: {0}")]
    Validation(String),
    #[error("hourly series is empty")]
    EmptySeries,
    #[error("hourly series not strictly increasing at {0}")]
    Misordered(NaiveDateTime),
    #[error("timestamps not on an hourly grid near {0}")]
    NotHourly(NaiveDateTime),
    #[error("shift window not covered by the hourly series: {0}")]
    Coverage(String),
    #[error("unrepaired gap overlaps shift window {0}")]
    GapInWindow(String),
}

/// Day or night half of an operating date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftKind {
    Day,
    Night,
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShiftKind::Day => write!(f, "day"),
            ShiftKind::Night => write!(f, "night"),
        }
    }
}

impl std::str::FromStr for ShiftKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(ShiftKind::Day),
            "night" => Ok(ShiftKind::Night),
            other => Err(format!("expected `day` or `night`, got `{other}`")),
        }
    }
}

/// One 10.5-hour operating shift as recorded by the fleet management system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub shift_index: u64,
    pub date: NaiveDate,
    pub shift_kind: ShiftKind,
    pub crew: String,
    pub working_trucks: u32,
    pub working_shovels: u32,
    pub cycle_count: u32,
    pub payload: f64,
    pub cycle_time: f64,
    pub precipitation: f64,
}

impl ShiftRecord {
    /// Field-level bounds; index ordering is checked across the whole set.
    pub fn validate(&self) -> Result<(), String> {
        if !self.payload.is_finite() || self.payload < 0.0 {
            return Err(format!("payload must be finite and >= 0, got {}", self.payload));
        }
        if !self.cycle_time.is_finite() || self.cycle_time <= 0.0 {
            return Err(format!("cycle_time must be finite and > 0, got {}", self.cycle_time));
        }
        if !self.precipitation.is_finite() || self.precipitation < 0.0 {
            return Err(format!(
                "precipitation must be finite and >= 0, got {}",
                self.precipitation
            ));
        }
        if self.crew.is_empty() {
            return Err("crew label must not be empty".to_string());
        }
        Ok(())
    }
}

/// Validate cross-record invariants: strictly increasing shift_index, no
/// duplicate (date, kind), and day preceding night within a date.
pub fn validate_records(records: &[ShiftRecord]) -> Result<(), IngestError> {
    for pair in records.windows(2) {
        if pair[1].shift_index <= pair[0].shift_index {
            return Err(IngestError::Validation(format!(
                "shift_index not strictly increasing: {} then {}",
                pair[0].shift_index, pair[1].shift_index
            )));
        }
    }
    let mut seen: std::collections::BTreeMap<(NaiveDate, ShiftKind), u64> =
        std::collections::BTreeMap::new();
    for rec in records {
        if let Some(prev) = seen.insert((rec.date, rec.shift_kind), rec.shift_index) {
            return Err(IngestError::Validation(format!(
                "duplicate shift ({} {}) at indices {} and {}",
                rec.date, rec.shift_kind, prev, rec.shift_index
            )));
        }
    }
    for rec in records {
        if rec.shift_kind == ShiftKind::Day {
            if let Some(&night_idx) = seen.get(&(rec.date, ShiftKind::Night)) {
                if night_idx < rec.shift_index {
                    return Err(IngestError::Validation(format!(
                        "night shift precedes day shift on {}",
                        rec.date
                    )));
                }
            }
        }
    }
    Ok(())
}

fn parse_cell<T: std::str::FromStr>(
    raw: &str,
    row: usize,
    column: &str,
) -> Result<T, IngestError>
where
    T::Err: fmt::Display,
{
    raw.trim().parse::<T>().map_err(|e| IngestError::Cell {
        row,
        column: column.to_string(),
        message: format!("cannot parse `{raw}`: {e}"),
    })
}

fn parse_non_negative(raw: &str, row: usize, column: &str) -> Result<f64, IngestError> {
    let v: f64 = parse_cell(raw, row, column)?;
    if !v.is_finite() || v < 0.0 {
        return Err(IngestError::Cell {
            row,
            column: column.to_string(),
            message: format!("must be finite and >= 0, got {v}"),
        });
    }
    Ok(v)
}

/// Load and validate a shift CSV. Records are sorted by `shift_index` before
/// the cross-record invariants are checked.
pub fn load_shift_csv(path: impl AsRef<Path>) -> Result<Vec<ShiftRecord>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(Ok(h)) => h,
        Some(Err(source)) => {
            return Err(IngestError::Io {
                path: path.display().to_string(),
                source,
            })
        }
        None => String::new(),
    };
    if header.trim_end() != SHIFT_CSV_HEADER {
        return Err(IngestError::Header {
            path: path.display().to_string(),
            expected: SHIFT_CSV_HEADER.to_string(),
            found: header,
        });
    }

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2; // 1-based, after the header
        let line = line.map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 10 {
            return Err(IngestError::Row {
                row,
                message: format!("expected 10 columns, found {}", cells.len()),
            });
        }
        let date = NaiveDate::parse_from_str(cells[1].trim(), "%Y-%m-%d").map_err(|e| {
            IngestError::Cell {
                row,
                column: "date".to_string(),
                message: format!("cannot parse `{}`: {e}", cells[1]),
            }
        })?;
        let record = ShiftRecord {
            shift_index: parse_cell(cells[0], row, "shift_index")?,
            date,
            shift_kind: parse_cell(cells[2], row, "shift_kind")?,
            crew: cells[3].trim().to_string(),
            working_trucks: parse_cell(cells[4], row, "working_trucks")?,
            working_shovels: parse_cell(cells[5], row, "working_shovels")?,
            cycle_count: parse_cell(cells[6], row, "cycle_count")?,
            payload: parse_non_negative(cells[7], row, "payload")?,
            cycle_time: parse_cell(cells[8], row, "cycle_time")?,
            precipitation: parse_non_negative(cells[9], row, "precipitation")?,
        };
        record
            .validate()
            .map_err(|message| IngestError::Row { row, message })?;
        records.push(record);
    }
    records.sort_by_key(|r| r.shift_index);
    validate_records(&records)?;
    Ok(records)
}

/// Write records in the canonical schema. Floats use the shortest
/// representation that round-trips exactly.
pub fn save_shift_csv(path: impl AsRef<Path>, records: &[ShiftRecord]) -> Result<(), IngestError> {
    let path = path.as_ref();
    let mut out = String::with_capacity(records.len() * 64 + SHIFT_CSV_HEADER.len() + 1);
    out.push_str(SHIFT_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.shift_index,
            r.date,
            r.shift_kind,
            r.crew,
            r.working_trucks,
            r.working_shovels,
            r.cycle_count,
            r.payload,
            r.cycle_time,
            r.precipitation
        ));
    }
    let mut file = File::create(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(out.as_bytes()).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One hourly rain observation; `None` marks a missing value. The amount is
/// rain accumulated over the hour starting at `timestamp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyRain {
    pub timestamp: NaiveDateTime,
    pub amount: Option<f64>,
}

/// A run of missing hourly values that could not be repaired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapSpan {
    pub start: NaiveDateTime,
    pub hours: usize,
}

impl GapSpan {
    pub fn end(&self) -> NaiveDateTime {
        self.start + Duration::hours(self.hours as i64)
    }
}

impl fmt::Display for GapSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{} .. {}) ({} h)", self.start, self.end(), self.hours)
    }
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M"))
        .ok()
}

/// Load an hourly rain CSV and densify it onto a strict hourly grid: rows
/// skipped in the file become missing observations.
pub fn load_rain_csv(path: impl AsRef<Path>) -> Result<Vec<HourlyRain>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(Ok(h)) => h,
        Some(Err(source)) => {
            return Err(IngestError::Io {
                path: path.display().to_string(),
                source,
            })
        }
        None => String::new(),
    };
    if header.trim_end() != RAIN_CSV_HEADER {
        return Err(IngestError::Header {
            path: path.display().to_string(),
            expected: RAIN_CSV_HEADER.to_string(),
            found: header,
        });
    }
    let mut raw = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let line = line.map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let (ts_raw, amount_raw) = line.split_once(',').ok_or_else(|| IngestError::Row {
            row,
            message: "expected 2 columns".to_string(),
        })?;
        let timestamp = parse_timestamp(ts_raw).ok_or_else(|| IngestError::Cell {
            row,
            column: "timestamp".to_string(),
            message: format!("cannot parse `{ts_raw}` as ISO-8601"),
        })?;
        let amount = if amount_raw.trim().is_empty() {
            None
        } else {
            Some(parse_non_negative(amount_raw, row, "precip_mm")?)
        };
        raw.push(HourlyRain { timestamp, amount });
    }
    densify_hourly(raw)
}

/// Puts observations on a contiguous hourly grid, inserting missing values
/// for absent rows. Timestamps must be strictly increasing and whole hours
/// apart.
pub fn densify_hourly(raw: Vec<HourlyRain>) -> Result<Vec<HourlyRain>, IngestError> {
    if raw.is_empty() {
        return Err(IngestError::EmptySeries);
    }
    let mut series = Vec::with_capacity(raw.len());
    series.push(raw[0]);
    for obs in raw.into_iter().skip(1) {
        let prev = series.last().unwrap().timestamp;
        let delta = obs.timestamp - prev;
        if delta <= Duration::zero() {
            return Err(IngestError::Misordered(obs.timestamp));
        }
        let secs = delta.num_seconds();
        if secs % 3600 != 0 {
            return Err(IngestError::NotHourly(obs.timestamp));
        }
        for h in 1..secs / 3600 {
            series.push(HourlyRain {
                timestamp: prev + Duration::hours(h),
                amount: None,
            });
        }
        series.push(obs);
    }
    Ok(series)
}

/// Repair short missing runs by linear interpolation between the bounding
/// observations. Runs longer than `max_gap` hours, and runs touching either
/// boundary of the series, are left missing and reported as flagged spans.
/// Non-missing values are never modified.
pub fn fill_gaps(
    series: &[HourlyRain],
    max_gap: usize,
) -> Result<(Vec<HourlyRain>, Vec<GapSpan>), IngestError> {
    if series.is_empty() {
        return Err(IngestError::EmptySeries);
    }
    for pair in series.windows(2) {
        let delta = pair[1].timestamp - pair[0].timestamp;
        if delta != Duration::hours(1) {
            return Err(IngestError::NotHourly(pair[1].timestamp));
        }
    }
    let mut repaired = series.to_vec();
    let mut flags = Vec::new();
    let n = repaired.len();
    let mut i = 0;
    while i < n {
        if repaired[i].amount.is_some() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && repaired[i].amount.is_none() {
            i += 1;
        }
        let run_len = i - run_start;
        let bounded = run_start > 0 && i < n;
        if bounded && run_len <= max_gap {
            let lo = repaired[run_start - 1].amount.unwrap();
            let hi = repaired[i].amount.unwrap();
            for (k, slot) in repaired[run_start..i].iter_mut().enumerate() {
                let t = (k + 1) as f64 / (run_len + 1) as f64;
                slot.amount = Some(lo + (hi - lo) * t);
            }
        } else {
            flags.push(GapSpan {
                start: repaired[run_start].timestamp,
                hours: run_len,
            });
        }
    }
    Ok((repaired, flags))
}

/// Shift boundaries within an operating date. The two 10.5 h windows must not
/// overlap; rain falling in the changeover gaps belongs to the following
/// shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftCalendar {
    pub day_shift_start: NaiveTime,
    pub night_shift_start: NaiveTime,
    pub shift_minutes: i64,
}

impl Default for ShiftCalendar {
    fn default() -> Self {
        Self {
            day_shift_start: NaiveTime::from_hms_opt(5, 30, 0).unwrap(),
            night_shift_start: NaiveTime::from_hms_opt(17, 30, 0).unwrap(),
            shift_minutes: 630,
        }
    }
}

impl ShiftCalendar {
    pub fn validate(&self) -> Result<(), String> {
        if self.shift_minutes <= 0 {
            return Err("shift_minutes must be positive".to_string());
        }
        let (day_start, day_end) = self.window_for_date(NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(), ShiftKind::Day);
        let (night_start, night_end) =
            self.window_for_date(NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(), ShiftKind::Night);
        if day_end > night_start {
            return Err("day shift overlaps night shift".to_string());
        }
        // The night shift must clear the next day's day shift as well.
        if night_end > day_start + Duration::days(1) {
            return Err("night shift overlaps the next day shift".to_string());
        }
        Ok(())
    }

    /// Half-open [start, end) window of a shift.
    pub fn window_for_date(&self, date: NaiveDate, kind: ShiftKind) -> (NaiveDateTime, NaiveDateTime) {
        let start = match kind {
            ShiftKind::Day => date.and_time(self.day_shift_start),
            ShiftKind::Night => date.and_time(self.night_shift_start),
        };
        (start, start + Duration::minutes(self.shift_minutes))
    }
}

/// Aggregate an hourly rain series to per-shift totals.
///
/// Each observation is treated as rain falling uniformly over the hour that
/// starts at its timestamp. A shift collects the mass of `[start, end)` plus
/// the changeover gap before it (rain between the previous shift's end and
/// this shift's start), so consecutive shift totals conserve the series total.
/// Rain before the first requested shift folds into it; rain at or after the
/// last shift's end is left unassigned.
///
/// Errors: a shift whose collection interval the series does not reach at
/// all, or one overlapping an unrepaired (missing) observation.
pub fn aggregate_rain_to_shifts(
    series: &[HourlyRain],
    calendar: &ShiftCalendar,
    shifts: &[(NaiveDate, ShiftKind)],
) -> Result<Vec<f64>, IngestError> {
    if series.is_empty() {
        return Err(IngestError::EmptySeries);
    }
    calendar.validate().map_err(IngestError::Validation)?;
    let windows: Vec<(NaiveDateTime, NaiveDateTime)> = shifts
        .iter()
        .map(|&(date, kind)| calendar.window_for_date(date, kind))
        .collect();
    for pair in windows.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(IngestError::Validation(
                "requested shifts are not chronological".to_string(),
            ));
        }
    }
    let series_start = series[0].timestamp;
    let series_end = series[series.len() - 1].timestamp + Duration::hours(1);

    let mut totals = vec![0.0_f64; windows.len()];
    for (k, &(start, end)) in windows.iter().enumerate() {
        // Collection interval: from the previous shift's end (or the start of
        // the series for the first shift) to this shift's end.
        let collect_start = if k == 0 { series_start.min(start) } else { windows[k - 1].1 };
        let lo = collect_start.max(series_start);
        let hi = end.min(series_end);
        if lo >= hi {
            return Err(IngestError::Coverage(format!(
                "{} {} [{start} .. {end})",
                shifts[k].0, shifts[k].1
            )));
        }
        // Sum fractional overlaps of hour-long observations with [lo, hi).
        let first_idx = {
            let offset = (lo - series_start).num_seconds();
            (offset / 3600).max(0) as usize
        };
        let mut acc = 0.0;
        for obs in series.iter().skip(first_idx) {
            let obs_start = obs.timestamp;
            if obs_start >= hi {
                break;
            }
            let obs_end = obs_start + Duration::hours(1);
            let ov_lo = obs_start.max(lo);
            let ov_hi = obs_end.min(hi);
            if ov_lo >= ov_hi {
                continue;
            }
            let amount = obs.amount.ok_or_else(|| {
                IngestError::GapInWindow(format!(
                    "{} {} [{start} .. {end}) (missing hour {obs_start})",
                    shifts[k].0, shifts[k].1
                ))
            })?;
            let frac = (ov_hi - ov_lo).num_seconds() as f64 / 3600.0;
            acc += amount * frac;
        }
        totals[k] = acc;
    }
    Ok(totals)
}
