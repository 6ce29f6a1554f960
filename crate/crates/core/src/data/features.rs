use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{is_weekend, Calendar, DataError, Dataset, EnvChannel, OccupantRecord, ResourceKind};

/// Missing environmental readings are forward-filled for at most this many
/// minutes; rows beyond it are dropped from the feature matrix.
pub const FILL_LIMIT_MINUTES: i64 = 15;

/// Morning is `[06:00, 18:00)`.
const MORNING_START_HOUR: u32 = 6;
const MORNING_END_HOUR: u32 = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Raw,
    CollegeDummy,
    SeasonalDummy,
    PooledContinuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    /// True iff the column is computed from in-room IoT readings.
    pub sensor_derived: bool,
}

impl FeatureDescriptor {
    pub fn new(name: impl Into<String>, kind: FeatureKind, sensor_derived: bool) -> Self {
        FeatureDescriptor {
            name: name.into(),
            kind,
            sensor_derived,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    StepAhead,
    SensorFree,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::StepAhead => "step-ahead",
            Scenario::SensorFree => "sensor-free",
        })
    }
}

impl FromStr for Scenario {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "step-ahead" | "stepahead" => Ok(Scenario::StepAhead),
            "sensor-free" | "sensorfree" => Ok(Scenario::SensorFree),
            _ => Err(DataError::InvalidConfig(format!("unknown scenario `{s}`"))),
        }
    }
}

/// Rows of named features with one binary label vector per resource.
///
/// Sensor-derived features in row `t` only use readings strictly before
/// minute `t`; the label of row `t` is the resource status at minute `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub descriptors: Vec<FeatureDescriptor>,
    pub rows: Array2<f64>,
    /// Indexed by [`ResourceKind::index`].
    pub labels: [Vec<u8>; 4],
    pub row_timestamps: Vec<NaiveDateTime>,
    /// Index into `occupant_ids` for every row.
    pub row_occupants: Vec<usize>,
    pub occupant_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.descriptors.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.descriptors.iter().map(|d| d.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.name == name)
    }

    pub fn labels(&self, r: ResourceKind) -> &[u8] {
        &self.labels[r.index()]
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            descriptors: self.descriptors.clone(),
            rows: self.rows.select(Axis(0), idx),
            labels: std::array::from_fn(|r| idx.iter().map(|&i| self.labels[r][i]).collect()),
            row_timestamps: idx.iter().map(|&i| self.row_timestamps[i]).collect(),
            row_occupants: idx.iter().map(|&i| self.row_occupants[i]).collect(),
            occupant_ids: self.occupant_ids.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            descriptors: cols.iter().map(|&c| self.descriptors[c].clone()).collect(),
            rows: self.rows.select(Axis(1), cols),
            labels: self.labels.clone(),
            row_timestamps: self.row_timestamps.clone(),
            row_occupants: self.row_occupants.clone(),
            occupant_ids: self.occupant_ids.clone(),
        }
    }

    pub fn select_features(&self, names: &[String]) -> Result<FeatureMatrix, DataError> {
        let cols = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| DataError::UnknownFeature(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.select_columns(&cols))
    }

    /// Row indices whose date lies in `[start, end]`.
    pub fn rows_between(&self, start: NaiveDate, end: NaiveDate) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| {
                let d = self.row_timestamps[i].date();
                d >= start && d <= end
            })
            .collect()
    }

    pub fn rows_of_occupant(&self, occupant_id: &str) -> Vec<usize> {
        match self.occupant_ids.iter().position(|o| o == occupant_id) {
            Some(k) => (0..self.n_rows())
                .filter(|&i| self.row_occupants[i] == k)
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Switch count and percent-on through each minute of one day's status
/// sequence (inclusive of that minute).
pub fn running_day_stats(statuses: &[bool]) -> Vec<(u32, f64)> {
    let mut switches = 0u32;
    let mut on = 0u32;
    statuses
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if i > 0 && statuses[i - 1] != s {
                switches += 1;
            }
            on += u32::from(s);
            (switches, 100.0 * f64::from(on) / (i + 1) as f64)
        })
        .collect()
}

/// Column layout produced by [`pool_features`].
pub(crate) fn feature_layout(calendar: &Calendar) -> Vec<FeatureDescriptor> {
    use FeatureKind::*;
    let mut d = Vec::new();
    for c in EnvChannel::ALL {
        d.push(FeatureDescriptor::new(c.column(), Raw, c.sensor_derived()));
    }
    d.push(FeatureDescriptor::new("points_game", Raw, true));
    d.push(FeatureDescriptor::new("points_survey", Raw, false));
    d.push(FeatureDescriptor::new("rank", Raw, true));
    d.push(FeatureDescriptor::new("portal_visits", Raw, false));
    for r in ResourceKind::ALL {
        let p = r.feature_prefix();
        d.push(FeatureDescriptor::new(format!("{p}_prev_status"), Raw, true));
        d.push(FeatureDescriptor::new(format!("{p}_usage_min"), Raw, true));
        d.push(FeatureDescriptor::new(format!("{p}_baseline_min"), Raw, true));
    }
    for name in calendar.names() {
        d.push(FeatureDescriptor::new(format!("{name}_dummy"), CollegeDummy, false));
    }
    for name in ["morning_dummy", "evening_dummy", "weekday_dummy", "weekend_dummy"] {
        d.push(FeatureDescriptor::new(name, SeasonalDummy, false));
    }
    for r in ResourceKind::ALL {
        let p = r.feature_prefix();
        d.push(FeatureDescriptor::new(format!("{p}_switches"), PooledContinuous, true));
        d.push(FeatureDescriptor::new(format!("{p}_pct_usage"), PooledContinuous, true));
    }
    d
}

/// Incremental feature builder for one occupant's record stream. Shared by
/// [`pool_features`] and the closed-loop game simulation.
#[derive(Debug, Clone)]
pub struct FeaturePooler {
    calendar: Calendar,
    calendar_names: Vec<String>,
    prev: Option<(NaiveDateTime, [bool; 4], [u32; 4])>,
    day: Option<NaiveDate>,
    day_minutes: u32,
    day_on: [u32; 4],
    day_switches: [u32; 4],
    last_env: [Option<(f64, NaiveDateTime)>; 5],
}

impl FeaturePooler {
    pub fn new(calendar: &Calendar) -> Self {
        FeaturePooler {
            calendar: calendar.clone(),
            calendar_names: calendar.names(),
            prev: None,
            day: None,
            day_minutes: 0,
            day_on: [0; 4],
            day_switches: [0; 4],
            last_env: [None; 5],
        }
    }

    pub fn descriptors(&self) -> Vec<FeatureDescriptor> {
        feature_layout(&self.calendar)
    }

    /// Consumes the next record (strictly later than the previous one) and
    /// returns its feature row, or `None` when an environmental reading is
    /// missing beyond the fill limit.
    pub fn push(&mut self, rec: &OccupantRecord) -> Option<Vec<f64>> {
        let row = self.features(rec);
        self.fold(rec);
        row
    }

    /// Feature row of `rec` without consuming it. The row reads only earlier
    /// minutes' statuses, so `rec.status` may still be undecided; call
    /// [`Self::fold`] with the final record before the next minute.
    pub fn features(&mut self, rec: &OccupantRecord) -> Option<Vec<f64>> {
        let date = rec.date();
        if self.day != Some(date) {
            self.day = Some(date);
            self.day_minutes = 0;
            self.day_on = [0; 4];
            self.day_switches = [0; 4];
        }

        let mut env = [0.0; 5];
        let mut valid = true;
        for c in EnvChannel::ALL {
            let k = c.index();
            match rec.env[k] {
                Some(v) => {
                    self.last_env[k] = Some((v, rec.timestamp));
                    env[k] = v;
                }
                None => match self.last_env[k] {
                    Some((v, at)) if (rec.timestamp - at).num_minutes() <= FILL_LIMIT_MINUTES => {
                        env[k] = v
                    }
                    _ => valid = false,
                },
            }
        }

        let (prev_status, prev_usage) = match self.prev {
            Some((ts, status, usage)) if ts.date() == date => {
                let adjacent = (rec.timestamp - ts).num_minutes() == 1;
                (if adjacent { status } else { [false; 4] }, usage)
            }
            Some((ts, status, _)) if (rec.timestamp - ts).num_minutes() == 1 => (status, [0; 4]),
            _ => ([false; 4], [0; 4]),
        };

        let mut row = Vec::with_capacity(27 + self.calendar_names.len());
        row.extend_from_slice(&env);
        row.push(rec.points_game);
        row.push(rec.points_survey);
        row.push(rec.rank.map_or(0.0, f64::from));
        row.push(f64::from(rec.portal_visits));
        for r in ResourceKind::ALL {
            let k = r.index();
            row.push(if prev_status[k] { 1.0 } else { 0.0 });
            row.push(f64::from(prev_usage[k]));
            row.push(rec.baseline[k].unwrap_or(0.0));
        }
        for name in &self.calendar_names {
            row.push(if self.calendar.contains(name, date) { 1.0 } else { 0.0 });
        }
        let hour = rec.timestamp.hour();
        let morning = (MORNING_START_HOUR..MORNING_END_HOUR).contains(&hour);
        let weekend = is_weekend(date);
        row.push(f64::from(u8::from(morning)));
        row.push(f64::from(u8::from(!morning)));
        row.push(f64::from(u8::from(!weekend)));
        row.push(f64::from(u8::from(weekend)));
        for r in ResourceKind::ALL {
            let k = r.index();
            row.push(f64::from(self.day_switches[k]));
            row.push(if self.day_minutes == 0 {
                0.0
            } else {
                100.0 * f64::from(self.day_on[k]) / f64::from(self.day_minutes)
            });
        }

        valid.then_some(row)
    }

    /// Folds `rec` (same minute as the last [`Self::features`] call) into the
    /// day-so-far statistics.
    pub fn fold(&mut self, rec: &OccupantRecord) {
        let date = rec.date();
        let same_day_prev = matches!(self.prev, Some((ts, _, _)) if ts.date() == date);
        for r in ResourceKind::ALL {
            let k = r.index();
            if same_day_prev {
                if let Some((_, status, _)) = self.prev {
                    if status[k] != rec.status[k] {
                        self.day_switches[k] += 1;
                    }
                }
            }
            self.day_on[k] += u32::from(rec.status[k]);
        }
        self.day_minutes += 1;
        self.prev = Some((rec.timestamp, rec.status, rec.usage_today));
    }
}

/// Builds raw, college-dummy, seasonal-dummy and pooled per-resource features
/// for every record. Rows whose environmental readings cannot be filled are
/// dropped.
pub fn pool_features(ds: &Dataset, calendar: &Calendar) -> Result<FeatureMatrix, DataError> {
    if ds.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let descriptors = feature_layout(calendar);
    let d = descriptors.len();
    let mut flat = Vec::with_capacity(ds.len() * d);
    let mut labels: [Vec<u8>; 4] = Default::default();
    let mut row_timestamps = Vec::with_capacity(ds.len());
    let mut row_occupants = Vec::with_capacity(ds.len());
    let mut occupant_ids = Vec::new();
    for (k, span) in ds.spans().iter().enumerate() {
        occupant_ids.push(span.occupant_id.clone());
        let mut pooler = FeaturePooler::new(calendar);
        for rec in &ds.records()[span.range.clone()] {
            if let Some(row) = pooler.push(rec) {
                debug_assert_eq!(row.len(), d);
                flat.extend(row);
                for r in ResourceKind::ALL {
                    labels[r.index()].push(u8::from(rec.status[r.index()]));
                }
                row_timestamps.push(rec.timestamp);
                row_occupants.push(k);
            }
        }
    }
    let n = row_timestamps.len();
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    let rows = Array2::from_shape_vec((n, d), flat).expect("row-major feature buffer");
    Ok(FeatureMatrix {
        descriptors,
        rows,
        labels,
        row_timestamps,
        row_occupants,
        occupant_ids,
    })
}

/// Applies the scenario mask: step-ahead keeps everything, sensor-free drops
/// every sensor-derived column.
pub fn scenario_filter(fm: &FeatureMatrix, scenario: Scenario) -> Result<FeatureMatrix, DataError> {
    match scenario {
        Scenario::StepAhead => Ok(fm.clone()),
        Scenario::SensorFree => {
            let keep: Vec<usize> = fm
                .descriptors
                .iter()
                .enumerate()
                .filter(|(_, d)| !d.sensor_derived)
                .map(|(i, _)| i)
                .collect();
            if keep.is_empty() {
                return Err(DataError::NoFeaturesLeft);
            }
            Ok(fm.select_columns(&keep))
        }
    }
}

/// Descriptor names must be unique within a matrix.
#[cfg(test)]
pub(crate) fn assert_unique_names(descriptors: &[FeatureDescriptor]) -> bool {
    let mut seen = std::collections::HashSet::new();
    descriptors.iter().all(|d| seen.insert(d.name.as_str()))
}
