use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;

use super::{DataError, Dataset, EnvChannel, OccupantRecord, ResourceKind};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

/// Canonical dataset header, in write order.
pub const DATASET_HEADER: [&str; 23] = [
    "timestamp",
    "occupant_id",
    "ceiling_light_status",
    "desk_light_status",
    "ceiling_fan_status",
    "ac_status",
    "ceiling_light_usage_min",
    "desk_light_usage_min",
    "ceiling_fan_usage_min",
    "ac_usage_min",
    "ceiling_light_baseline_min",
    "desk_light_baseline_min",
    "ceiling_fan_baseline_min",
    "ac_baseline_min",
    "points_game",
    "points_survey",
    "rank",
    "portal_visits",
    "ext_temp_c",
    "ext_humidity_pct",
    "ext_solar_wm2",
    "room_temp_c",
    "room_humidity_pct",
];

const COL_TS: usize = 0;
const COL_OCC: usize = 1;
const COL_STATUS: usize = 2;
const COL_USAGE: usize = 6;
const COL_BASELINE: usize = 10;
const COL_PGAME: usize = 14;
const COL_PSURVEY: usize = 15;
const COL_RANK: usize = 16;
const COL_VISITS: usize = 17;
const COL_ENV: usize = 18;

pub fn parse_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    parse_dataset_reader(file)
}

/// Parses the dataset CSV. Columns are matched by name; unknown extra
/// columns are ignored and dropped from the canonical form.
pub fn parse_dataset_reader<R: Read>(reader: R) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::EmptyFile);
    }
    let mut positions = [0usize; 23];
    for (k, name) in DATASET_HEADER.iter().enumerate() {
        positions[k] = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| DataError::MissingColumn((*name).to_string()))?;
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let field = |k: usize| row.get(positions[k]).unwrap_or("").trim();
        records.push(parse_row(&field, row_no)?);
    }
    if records.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Dataset::from_records(records)
}

fn parse_row<'a>(field: &dyn Fn(usize) -> &'a str, row: usize) -> Result<OccupantRecord, DataError> {
    let bad = |k: usize, message: &str| DataError::BadValue {
        row,
        column: DATASET_HEADER[k].to_string(),
        message: message.to_string(),
    };
    let timestamp = NaiveDateTime::parse_from_str(field(COL_TS), TIMESTAMP_FORMAT)
        .map_err(|_| bad(COL_TS, "expected YYYY-MM-DDTHH:MM"))?;
    let occupant_id = field(COL_OCC).to_string();
    if occupant_id.is_empty() {
        return Err(bad(COL_OCC, "empty occupant id"));
    }
    let mut rec = OccupantRecord::empty(occupant_id, timestamp);
    for r in ResourceKind::ALL {
        let k = COL_STATUS + r.index();
        rec.status[r.index()] = match field(k) {
            "0" => false,
            "1" => true,
            _ => return Err(bad(k, "status must be 0 or 1")),
        };
        let k = COL_USAGE + r.index();
        rec.usage_today[r.index()] = field(k)
            .parse::<u32>()
            .map_err(|_| bad(k, "usage must be a non-negative integer"))?;
        let k = COL_BASELINE + r.index();
        rec.baseline[r.index()] = parse_opt_f64(field(k)).map_err(|m| bad(k, m))?;
    }
    rec.points_game = parse_f64(field(COL_PGAME)).map_err(|m| bad(COL_PGAME, m))?;
    rec.points_survey = parse_f64(field(COL_PSURVEY)).map_err(|m| bad(COL_PSURVEY, m))?;
    rec.rank = match field(COL_RANK) {
        "" => None,
        s => Some(
            s.parse::<u32>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| bad(COL_RANK, "rank must be a positive integer"))?,
        ),
    };
    rec.portal_visits = field(COL_VISITS)
        .parse::<u32>()
        .map_err(|_| bad(COL_VISITS, "visits must be a non-negative integer"))?;
    for c in EnvChannel::ALL {
        let k = COL_ENV + c.index();
        rec.env[c.index()] = parse_opt_f64(field(k)).map_err(|m| bad(k, m))?;
    }
    Ok(rec)
}

fn parse_f64(s: &str) -> Result<f64, &'static str> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err("expected a finite number"),
    }
}

fn parse_opt_f64(s: &str) -> Result<Option<f64>, &'static str> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s).map(Some)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record_fields(rec: &OccupantRecord) -> Vec<String> {
    let mut out = Vec::with_capacity(23);
    out.push(rec.timestamp.format(TIMESTAMP_FORMAT).to_string());
    out.push(rec.occupant_id.clone());
    out.extend(rec.status.iter().map(|&s| if s { "1" } else { "0" }.to_string()));
    out.extend(rec.usage_today.iter().map(|u| u.to_string()));
    out.extend(rec.baseline.iter().map(|b| fmt_opt(*b)));
    out.push(rec.points_game.to_string());
    out.push(rec.points_survey.to_string());
    out.push(rec.rank.map(|r| r.to_string()).unwrap_or_default());
    out.push(rec.portal_visits.to_string());
    out.extend(rec.env.iter().map(|e| fmt_opt(*e)));
    out
}

/// Writes the canonical CSV form: schema header order, grouped by occupant,
/// shortest round-trip decimal reals, empty fields for missing values.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<(), DataError> {
    write_dataset_with_extra(ds.records(), &[], &[], writer)
}

/// Canonical CSV plus trailing extra columns; `extra[i]` belongs to `records[i]`.
pub fn write_dataset_with_extra<W: Write>(
    records: &[OccupantRecord],
    extra_header: &[String],
    extra: &[Vec<String>],
    writer: W,
) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let mut header: Vec<String> = DATASET_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend(extra_header.iter().cloned());
    w.write_record(&header)?;
    for (i, rec) in records.iter().enumerate() {
        let mut fields = record_fields(rec);
        if !extra_header.is_empty() {
            fields.extend(extra[i].iter().cloned());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
