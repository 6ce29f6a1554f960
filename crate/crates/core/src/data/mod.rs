//! Per-minute occupant data, pooled features, windows and scenario masks.

mod calendar;
mod csv_io;
mod features;
mod synth;
mod window;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calendar::{Calendar, CalendarRange};
pub use csv_io::{
    parse_dataset, parse_dataset_reader, write_dataset, write_dataset_with_extra, DATASET_HEADER,
    TIMESTAMP_FORMAT,
};
pub use features::{
    pool_features, running_day_stats, scenario_filter, FeatureDescriptor, FeatureKind, FeaturePooler,
    FeatureMatrix, Scenario, FILL_LIMIT_MINUTES,
};
pub use synth::{synth_generate, PlantedSignal, SynthConfig};
pub use window::{make_windows, WindowedTensor};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("bad value in row {row}, column `{column}`: {message}")]
    BadValue {
        row: usize,
        column: String,
        message: String,
    },
    #[error("timestamps for occupant `{occupant}` are not strictly increasing at row {row}")]
    NonMonotonicTimestamp { occupant: String, row: usize },
    #[error("file has no data rows")]
    EmptyFile,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("scenario filter removed every feature")]
    NoFeaturesLeft,
    #[error("window length {requested} exceeds the longest contiguous run ({available} rows)")]
    WindowTooLong { requested: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("calendar line {line}: {message}")]
    InvalidCalendar { line: usize, message: String },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A monitored room resource. The declaration order is the serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    CeilingLight,
    DeskLight,
    CeilingFan,
    #[serde(alias = "ac")]
    AirCon,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 4] = [
        ResourceKind::CeilingLight,
        ResourceKind::DeskLight,
        ResourceKind::CeilingFan,
        ResourceKind::AirCon,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Stem used by the dataset CSV columns (`<stem>_status`, ...).
    pub fn column_stem(self) -> &'static str {
        match self {
            ResourceKind::CeilingLight => "ceiling_light",
            ResourceKind::DeskLight => "desk_light",
            ResourceKind::CeilingFan => "ceiling_fan",
            ResourceKind::AirCon => "ac",
        }
    }

    /// Prefix used by feature names (`ceilfan_pct_usage`, ...).
    pub fn feature_prefix(self) -> &'static str {
        match self {
            ResourceKind::CeilingLight => "ceillight",
            ResourceKind::DeskLight => "desklight",
            ResourceKind::CeilingFan => "ceilfan",
            ResourceKind::AirCon => "ac",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ResourceKind::CeilingLight => "Ceiling Light",
            ResourceKind::DeskLight => "Desk Light",
            ResourceKind::CeilingFan => "Ceiling Fan",
            ResourceKind::AirCon => "Air Con",
        }
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column_stem())
    }
}

impl FromStr for ResourceKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        match norm.as_str() {
            "ceiling_light" | "ceillight" => Ok(ResourceKind::CeilingLight),
            "desk_light" | "desklight" => Ok(ResourceKind::DeskLight),
            "ceiling_fan" | "ceilfan" => Ok(ResourceKind::CeilingFan),
            "ac" | "air_con" | "aircon" => Ok(ResourceKind::AirCon),
            _ => Err(DataError::InvalidConfig(format!("unknown resource `{s}`"))),
        }
    }
}

/// Environmental channels carried by every record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvChannel {
    #[serde(rename = "ext_temp_c")]
    ExtTemp,
    #[serde(rename = "ext_humidity_pct")]
    ExtHumidity,
    #[serde(rename = "ext_solar_wm2")]
    ExtSolar,
    #[serde(rename = "room_temp_c")]
    RoomTemp,
    #[serde(rename = "room_humidity_pct")]
    RoomHumidity,
}

impl EnvChannel {
    pub const ALL: [EnvChannel; 5] = [
        EnvChannel::ExtTemp,
        EnvChannel::ExtHumidity,
        EnvChannel::ExtSolar,
        EnvChannel::RoomTemp,
        EnvChannel::RoomHumidity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn column(self) -> &'static str {
        match self {
            EnvChannel::ExtTemp => "ext_temp_c",
            EnvChannel::ExtHumidity => "ext_humidity_pct",
            EnvChannel::ExtSolar => "ext_solar_wm2",
            EnvChannel::RoomTemp => "room_temp_c",
            EnvChannel::RoomHumidity => "room_humidity_pct",
        }
    }

    /// Room channels come from the in-room IoT tags.
    pub fn sensor_derived(self) -> bool {
        matches!(self, EnvChannel::RoomTemp | EnvChannel::RoomHumidity)
    }
}

impl FromStr for EnvChannel {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvChannel::ALL
            .into_iter()
            .find(|c| c.column() == s.trim())
            .ok_or_else(|| DataError::InvalidConfig(format!("unknown weather channel `{s}`")))
    }
}

/// One occupant-minute.
///
/// `usage_today[r]` counts on-minutes since local midnight up to and including
/// this minute, so it never exceeds `minute_of_day + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupantRecord {
    pub timestamp: NaiveDateTime,
    pub occupant_id: String,
    pub status: [bool; 4],
    pub usage_today: [u32; 4],
    pub baseline: [Option<f64>; 4],
    pub points_game: f64,
    pub points_survey: f64,
    pub rank: Option<u32>,
    pub portal_visits: u32,
    pub env: [Option<f64>; 5],
}

impl OccupantRecord {
    pub fn empty(occupant_id: impl Into<String>, timestamp: NaiveDateTime) -> Self {
        OccupantRecord {
            timestamp,
            occupant_id: occupant_id.into(),
            status: [false; 4],
            usage_today: [0; 4],
            baseline: [None; 4],
            points_game: 0.0,
            points_survey: 0.0,
            rank: None,
            portal_visits: 0,
            env: [None; 5],
        }
    }

    pub fn status_of(&self, r: ResourceKind) -> bool {
        self.status[r.index()]
    }

    pub fn env_of(&self, c: EnvChannel) -> Option<f64> {
        self.env[c.index()]
    }

    pub fn minute_of_day(&self) -> u32 {
        minute_of_day(&self.timestamp)
    }

    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }
}

pub(crate) fn minute_of_day(ts: &NaiveDateTime) -> u32 {
    ts.hour() * 60 + ts.minute()
}

pub fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Contiguous block of one occupant's records inside [`Dataset::records`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupantSpan {
    pub occupant_id: String,
    pub range: Range<usize>,
}

/// Validated per-minute records grouped by occupant (first-appearance order)
/// and time-ordered within each occupant.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<OccupantRecord>,
    spans: Vec<OccupantSpan>,
    /// Indices of records preceded by a gap of more than one minute.
    gaps: Vec<usize>,
}

impl Dataset {
    /// Groups and validates records. Row numbers in errors are 1-based
    /// positions in `records`.
    pub fn from_records(records: Vec<OccupantRecord>) -> Result<Self, DataError> {
        let mut order: Vec<String> = Vec::new();
        let mut buckets: std::collections::HashMap<String, Vec<(usize, OccupantRecord)>> =
            std::collections::HashMap::new();
        for (i, rec) in records.into_iter().enumerate() {
            validate_record(&rec, i + 1)?;
            let bucket = buckets.entry(rec.occupant_id.clone()).or_insert_with(|| {
                order.push(rec.occupant_id.clone());
                Vec::new()
            });
            if let Some((_, prev)) = bucket.last() {
                if rec.timestamp <= prev.timestamp {
                    return Err(DataError::NonMonotonicTimestamp {
                        occupant: rec.occupant_id.clone(),
                        row: i + 1,
                    });
                }
                if rec.date() == prev.date() {
                    for r in ResourceKind::ALL {
                        if rec.usage_today[r.index()] < prev.usage_today[r.index()] {
                            return Err(DataError::BadValue {
                                row: i + 1,
                                column: format!("{}_usage_min", r.column_stem()),
                                message: "daily usage decreased within a day".into(),
                            });
                        }
                    }
                }
            }
            bucket.push((i, rec));
        }

        let mut out = Vec::new();
        let mut spans = Vec::with_capacity(order.len());
        let mut gaps = Vec::new();
        for id in order {
            let bucket = buckets.remove(&id).unwrap_or_default();
            let start = out.len();
            let mut prev: Option<NaiveDateTime> = None;
            for (_, rec) in bucket {
                if let Some(p) = prev {
                    if (rec.timestamp - p).num_minutes() > 1 {
                        gaps.push(out.len());
                    }
                }
                prev = Some(rec.timestamp);
                out.push(rec);
            }
            spans.push(OccupantSpan {
                occupant_id: id,
                range: start..out.len(),
            });
        }
        Ok(Dataset {
            records: out,
            spans,
            gaps,
        })
    }

    pub fn records(&self) -> &[OccupantRecord] {
        &self.records
    }

    pub fn spans(&self) -> &[OccupantSpan] {
        &self.spans
    }

    pub fn gaps(&self) -> &[usize] {
        &self.gaps
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn occupant_ids(&self) -> Vec<&str> {
        self.spans.iter().map(|s| s.occupant_id.as_str()).collect()
    }

    pub fn occupant_records(&self, occupant_id: &str) -> Option<&[OccupantRecord]> {
        self.spans
            .iter()
            .find(|s| s.occupant_id == occupant_id)
            .map(|s| &self.records[s.range.clone()])
    }

    /// Records whose date lies in `[start, end]` (inclusive).
    pub fn filter_dates(&self, start: NaiveDate, end: NaiveDate) -> Dataset {
        self.filter(|r| r.date() >= start && r.date() <= end)
    }

    pub fn filter_occupant(&self, occupant_id: &str) -> Dataset {
        self.filter(|r| r.occupant_id == occupant_id)
    }

    fn filter(&self, keep: impl Fn(&OccupantRecord) -> bool) -> Dataset {
        let recs: Vec<OccupantRecord> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        // Subsets of a valid dataset stay valid.
        Dataset::from_records(recs).expect("subset of a validated dataset")
    }

    pub fn into_records(self) -> Vec<OccupantRecord> {
        self.records
    }
}

fn validate_record(rec: &OccupantRecord, row: usize) -> Result<(), DataError> {
    let bad = |column: String, message: &str| DataError::BadValue {
        row,
        column,
        message: message.to_string(),
    };
    if rec.occupant_id.is_empty() {
        return Err(bad("occupant_id".into(), "empty occupant id"));
    }
    if rec.timestamp.second() != 0 || rec.timestamp.nanosecond() != 0 {
        return Err(bad("timestamp".into(), "timestamps have minute resolution"));
    }
    let elapsed = rec.minute_of_day() + 1;
    for r in ResourceKind::ALL {
        if rec.usage_today[r.index()] > elapsed {
            return Err(bad(
                format!("{}_usage_min", r.column_stem()),
                "usage exceeds minutes elapsed since midnight",
            ));
        }
        if let Some(b) = rec.baseline[r.index()] {
            if !(b > 0.0) || !b.is_finite() {
                return Err(bad(
                    format!("{}_baseline_min", r.column_stem()),
                    "baseline must be positive",
                ));
            }
        }
    }
    if !rec.points_game.is_finite() {
        return Err(bad("points_game".into(), "not finite"));
    }
    if !rec.points_survey.is_finite() {
        return Err(bad("points_survey".into(), "not finite"));
    }
    if rec.rank == Some(0) {
        return Err(bad("rank".into(), "rank must be positive"));
    }
    for c in EnvChannel::ALL {
        if let Some(v) = rec.env_of(c) {
            if !v.is_finite() {
                return Err(bad(c.column().into(), "not finite"));
            }
            let humidity = matches!(c, EnvChannel::ExtHumidity | EnvChannel::RoomHumidity);
            if humidity && !(0.0..=100.0).contains(&v) {
                return Err(bad(c.column().into(), "humidity outside [0, 100]"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).unwrap()
    }

    #[test]
    fn groups_interleaved_occupants_in_first_appearance_order() {
        let recs = vec![
            OccupantRecord::empty("b", ts("2017-09-12T00:00")),
            OccupantRecord::empty("a", ts("2017-09-12T00:00")),
            OccupantRecord::empty("b", ts("2017-09-12T00:01")),
            OccupantRecord::empty("a", ts("2017-09-12T00:05")),
        ];
        let ds = Dataset::from_records(recs).unwrap();
        assert_eq!(ds.occupant_ids(), vec!["b", "a"]);
        assert_eq!(ds.spans()[0].range, 0..2);
        // "a" jumps four minutes.
        assert_eq!(ds.gaps(), &[3]);
    }

    #[test]
    fn rejects_decreasing_usage_and_excess_usage() {
        let mut r1 = OccupantRecord::empty("a", ts("2017-09-12T10:00"));
        r1.usage_today[0] = 5;
        let mut r2 = OccupantRecord::empty("a", ts("2017-09-12T10:01"));
        r2.usage_today[0] = 4;
        assert!(matches!(
            Dataset::from_records(vec![r1.clone(), r2]),
            Err(DataError::BadValue { row: 2, .. })
        ));
        let mut r3 = OccupantRecord::empty("a", ts("2017-09-12T00:01"));
        r3.usage_today[2] = 3;
        assert!(matches!(
            Dataset::from_records(vec![r3]),
            Err(DataError::BadValue { row: 1, .. })
        ));
        // Reset at midnight is fine.
        let mut r4 = OccupantRecord::empty("a", ts("2017-09-13T00:00"));
        r4.usage_today[0] = 0;
        assert!(Dataset::from_records(vec![r1, r4]).is_ok());
    }

    #[test]
    fn rejects_out_of_range_humidity() {
        let mut r = OccupantRecord::empty("a", ts("2017-09-12T10:00"));
        r.env[EnvChannel::ExtHumidity.index()] = Some(101.0);
        assert!(Dataset::from_records(vec![r]).is_err());
    }

    #[test]
    fn resource_names_parse_back() {
        for r in ResourceKind::ALL {
            assert_eq!(r.column_stem().parse::<ResourceKind>().unwrap(), r);
            assert_eq!(r.feature_prefix().parse::<ResourceKind>().unwrap(), r);
        }
        assert!("fridge".parse::<ResourceKind>().is_err());
    }
}
