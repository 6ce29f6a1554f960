use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::DataError;

/// One named date range, inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarRange {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// College schedule: breaks, holidays, midterms, exams. Each distinct name
/// becomes one `<name>_dummy` feature.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    pub ranges: Vec<CalendarRange>,
}

impl Calendar {
    /// Parses `name,start_date,end_date` lines. Blank lines and `#` comments
    /// are skipped, as is a literal header line.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut ranges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line == "name,start_date,end_date" {
                continue;
            }
            let err = |message: &str| DataError::InvalidCalendar {
                line: i + 1,
                message: message.to_string(),
            };
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(err("expected name,start_date,end_date"));
            }
            let name = sanitize(parts[0]);
            if name.is_empty() {
                return Err(err("empty range name"));
            }
            let start = NaiveDate::parse_from_str(parts[1], "%Y-%m-%d")
                .map_err(|_| err("bad start date"))?;
            let end = NaiveDate::parse_from_str(parts[2], "%Y-%m-%d")
                .map_err(|_| err("bad end date"))?;
            if end < start {
                return Err(err("end date before start date"));
            }
            ranges.push(CalendarRange { name, start, end });
        }
        Ok(Calendar { ranges })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Distinct range names in first-appearance order.
    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.ranges {
            if !out.contains(&r.name) {
                out.push(r.name.clone());
            }
        }
        out
    }

    pub fn contains(&self, name: &str, date: NaiveDate) -> bool {
        self.ranges
            .iter()
            .any(|r| r.name == name && r.start <= date && date <= r.end)
    }
}

fn sanitize(name: &str) -> String {
    name.trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}
