//! Before/after and weekday/weekend usage tests, savings percentages and
//! Cronbach's α for Likert surveys.
//!
//! Usage samples are daily minutes per (occupant, date). Report percentages
//! round half away from zero to one decimal; a printed 5.6 for a computed
//! 5.65 is truncation, not this rule.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::beta::checked_beta_reg;
use thiserror::Error;

use crate::data::{is_weekend, Dataset, ResourceKind};
use crate::points::daily_totals;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("baseline mean must be positive, got {0}")]
    NonPositiveBefore(f64),
    #[error("need at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("need at least 2 respondents, got {0}")]
    TooFewRespondents(usize),
    #[error("total score has zero variance")]
    ZeroVariance,
    #[error("unknown survey item `{0}`")]
    UnknownItem(String),
    #[error("survey: {0}")]
    InvalidSurvey(String),
    #[error("dataset is empty")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestVariant {
    #[default]
    Pooled,
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
    pub mean_a: f64,
    pub mean_b: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sided tail `P(|T| ≥ |t|)` of Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    checked_beta_reg(df / 2.0, 0.5, x).map_or(f64::NAN, |p| p.clamp(0.0, 1.0))
}

pub fn two_sample_ttest(a: &[f64], b: &[f64], variant: TTestVariant) -> Result<TTestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::DegenerateSample(format!("sizes {} and {}; need 2 each", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::DegenerateSample("non-finite value".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(StatsError::DegenerateSample("both samples are constant".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (se, df) = match variant {
        TTestVariant::Pooled => {
            let df = na + nb - 2.0;
            let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            ((sp2 * (1.0 / na + 1.0 / nb)).sqrt(), df)
        }
        TTestVariant::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            ((qa + qb).sqrt(), df)
        }
    };
    let t = (ma - mb) / se;
    Ok(TTestResult { t, df, p: t_two_sided_p(t, df), mean_a: ma, mean_b: mb })
}

/// `100 · (before − after) / before`.
pub fn savings_delta(before_mean: f64, after_mean: f64) -> Result<f64, StatsError> {
    if !(before_mean > 0.0) {
        return Err(StatsError::NonPositiveBefore(before_mean));
    }
    Ok(100.0 * ((before_mean - after_mean) / before_mean))
}

/// Rounds half away from zero to `decimals` places.
pub fn round_half_up(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayPeriod {
    Weekday,
    Weekend,
}

impl DayPeriod {
    pub const ALL: [DayPeriod; 2] = [DayPeriod::Weekday, DayPeriod::Weekend];

    fn name(self) -> &'static str {
        match self {
            DayPeriod::Weekday => "weekday",
            DayPeriod::Weekend => "weekend",
        }
    }
}

/// Before/after comparison of one device in one day period. Numeric fields
/// are `None` when the row is N/A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub device: ResourceKind,
    pub period: DayPeriod,
    pub before_mean: Option<f64>,
    pub after_mean: Option<f64>,
    pub p: Option<f64>,
    pub delta_pct: Option<f64>,
    /// Reason the row is (partly) N/A.
    pub note: Option<String>,
}

/// Weekday against weekend usage of one device within one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodComparisonRow {
    pub device: ResourceKind,
    pub weekday_mean: Option<f64>,
    pub weekend_mean: Option<f64>,
    pub p: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub before_after: Vec<SavingsRow>,
    /// Computed on the after (in-game) dataset.
    pub weekday_weekend: Vec<PeriodComparisonRow>,
}

/// Daily minutes per (occupant, date) for each device and period.
fn usage_samples(ds: &Dataset) -> BTreeMap<(ResourceKind, DayPeriod), Vec<f64>> {
    let mut out: BTreeMap<(ResourceKind, DayPeriod), Vec<f64>> = BTreeMap::new();
    for ((_, date), usage) in daily_totals(ds) {
        let period = if is_weekend(date) { DayPeriod::Weekend } else { DayPeriod::Weekday };
        for r in ResourceKind::ALL {
            out.entry((r, period)).or_default().push(f64::from(usage[r.index()]));
        }
    }
    out
}

/// Devices with any recorded usage.
fn present_devices(ds: &Dataset) -> BTreeSet<ResourceKind> {
    ResourceKind::ALL
        .into_iter()
        .filter(|r| ds.records().iter().any(|rec| rec.usage_today[r.index()] > 0 || rec.status_of(*r)))
        .collect()
}

fn mean(x: &[f64]) -> Option<f64> {
    (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64)
}

/// Per device × period before/after means, pooled t-test and savings, plus the
/// weekday/weekend comparison on `after`. A device with no usage in a
/// dataset is N/A there.
pub fn savings_table(before: &Dataset, after: &Dataset, variant: TTestVariant) -> Result<SavingsReport, StatsError> {
    if before.is_empty() || after.is_empty() {
        return Err(StatsError::EmptyDataset);
    }
    let (sb, sa) = (usage_samples(before), usage_samples(after));
    let (pb, pa) = (present_devices(before), present_devices(after));
    let empty = Vec::new();
    let mut rows = Vec::new();
    for r in ResourceKind::ALL {
        for period in DayPeriod::ALL {
            if !pb.contains(&r) || !pa.contains(&r) {
                let which = if pb.contains(&r) { "after" } else { "before" };
                rows.push(SavingsRow {
                    device: r,
                    period,
                    before_mean: None,
                    after_mean: None,
                    p: None,
                    delta_pct: None,
                    note: Some(format!("device unused in {which} period")),
                });
                continue;
            }
            let b = sb.get(&(r, period)).unwrap_or(&empty);
            let a = sa.get(&(r, period)).unwrap_or(&empty);
            let (bm, am) = (mean(b), mean(a));
            let delta = match (bm, am) {
                (Some(x), Some(y)) => savings_delta(x, y).ok(),
                _ => None,
            };
            let (p, note) = match two_sample_ttest(b, a, variant) {
                Ok(t) => (Some(t.p), None),
                Err(e) => (None, Some(e.to_string())),
            };
            rows.push(SavingsRow { device: r, period, before_mean: bm, after_mean: am, p, delta_pct: delta, note });
        }
    }
    let weekday_weekend = ResourceKind::ALL
        .into_iter()
        .map(|r| {
            if !pa.contains(&r) {
                return PeriodComparisonRow {
                    device: r,
                    weekday_mean: None,
                    weekend_mean: None,
                    p: None,
                    note: Some("device unused".into()),
                };
            }
            let wd = sa.get(&(r, DayPeriod::Weekday)).unwrap_or(&empty);
            let we = sa.get(&(r, DayPeriod::Weekend)).unwrap_or(&empty);
            let (p, note) = match two_sample_ttest(wd, we, variant) {
                Ok(t) => (Some(t.p), None),
                Err(e) => (None, Some(e.to_string())),
            };
            PeriodComparisonRow { device: r, weekday_mean: mean(wd), weekend_mean: mean(we), p, note }
        })
        .collect();
    Ok(SavingsReport { before_after: rows, weekday_weekend })
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "N/A".into(), |x| format!("{x:.decimals$}"))
}

impl SavingsReport {
    /// `device,period,before_mean,after_mean,p_value,delta_pct,note`; means
    /// and Δ% at one decimal (Δ% rounded half up), p at four.
    pub fn write_savings_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["device", "period", "before_mean", "after_mean", "p_value", "delta_pct", "note"])?;
        for r in &self.before_after {
            w.write_record([
                r.device.to_string(),
                r.period.name().to_string(),
                fmt_opt(r.before_mean, 1),
                fmt_opt(r.after_mean, 1),
                fmt_opt(r.p, 4),
                fmt_opt(r.delta_pct.map(|d| round_half_up(d, 1)), 1),
                r.note.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `device,weekday_mean,weekend_mean,p_value,note`.
    pub fn write_period_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["device", "weekday_mean", "weekend_mean", "p_value", "note"])?;
        for r in &self.weekday_weekend {
            w.write_record([
                r.device.to_string(),
                fmt_opt(r.weekday_mean, 1),
                fmt_opt(r.weekend_mean, 1),
                fmt_opt(r.p, 4),
                r.note.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Respondent × item responses on a 1..=5 scale, complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertSurvey {
    pub respondents: Vec<String>,
    pub items: Vec<String>,
    /// `values[respondent][item]`, as answered.
    pub values: Vec<Vec<u8>>,
    /// Item is phrased in the opposite direction; scored as `6 − v`.
    pub reverse_coded: Vec<bool>,
}

#[derive(Debug, Deserialize)]
struct SurveyRow {
    respondent_id: String,
    item_id: String,
    value: u8,
    reverse_coded: u8,
}

impl LikertSurvey {
    /// Parses `respondent_id,item_id,value,reverse_coded` rows. Respondents and
    /// items keep first-appearance order; every pair must appear once.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, StatsError> {
        let bad = |m: String| StatsError::InvalidSurvey(m);
        let mut rdr = csv::Reader::from_reader(reader);
        let mut respondents: Vec<String> = Vec::new();
        let mut items: Vec<String> = Vec::new();
        let mut reverse: Vec<bool> = Vec::new();
        let mut cells: BTreeMap<(usize, usize), u8> = BTreeMap::new();
        for (line, row) in rdr.deserialize::<SurveyRow>().enumerate() {
            let row = row.map_err(|e| bad(e.to_string()))?;
            let at = line + 2;
            if !(1..=5).contains(&row.value) {
                return Err(bad(format!("line {at}: value {} outside 1..=5", row.value)));
            }
            if row.reverse_coded > 1 {
                return Err(bad(format!("line {at}: reverse_coded must be 0 or 1")));
            }
            let rev = row.reverse_coded == 1;
            let ri = respondents.iter().position(|r| *r == row.respondent_id).unwrap_or_else(|| {
                respondents.push(row.respondent_id.clone());
                respondents.len() - 1
            });
            let ii = match items.iter().position(|i| *i == row.item_id) {
                Some(i) if reverse[i] != rev => {
                    return Err(bad(format!("line {at}: item `{}` changes polarity", row.item_id)));
                }
                Some(i) => i,
                None => {
                    items.push(row.item_id.clone());
                    reverse.push(rev);
                    items.len() - 1
                }
            };
            if cells.insert((ri, ii), row.value).is_some() {
                return Err(bad(format!("line {at}: duplicate response")));
            }
        }
        let mut values = vec![vec![0u8; items.len()]; respondents.len()];
        for (ri, row) in values.iter_mut().enumerate() {
            for (ii, v) in row.iter_mut().enumerate() {
                *v = *cells
                    .get(&(ri, ii))
                    .ok_or_else(|| bad(format!("`{}` did not answer `{}`", respondents[ri], items[ii])))?;
            }
        }
        Ok(LikertSurvey { respondents, items, values, reverse_coded: reverse })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StatsError> {
        let f = std::fs::File::open(path).map_err(|e| StatsError::InvalidSurvey(e.to_string()))?;
        Self::from_csv_reader(f)
    }

    /// Score after reverse-coding.
    pub fn scored(&self, respondent: usize, item: usize) -> f64 {
        let v = f64::from(self.values[respondent][item]);
        if self.reverse_coded[item] {
            6.0 - v
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CronbachResult {
    /// At most 1; negative for anti-correlated items.
    pub alpha: f64,
    pub n_items: usize,
    /// Carried through from an external report; not computed.
    pub p_value: Option<f64>,
}

/// `k/(k−1) · (1 − Σ var(item) / var(total))` over `items` after
/// reverse-coding.
pub fn cronbach_alpha(survey: &LikertSurvey, items: &[&str]) -> Result<CronbachResult, StatsError> {
    let k = items.len();
    if k < 2 {
        return Err(StatsError::TooFewItems(k));
    }
    let n = survey.respondents.len();
    if n < 2 {
        return Err(StatsError::TooFewRespondents(n));
    }
    let cols: Vec<usize> = items
        .iter()
        .map(|name| {
            survey.items.iter().position(|i| i == name).ok_or_else(|| StatsError::UnknownItem(name.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let item_var: f64 = cols
        .iter()
        .map(|&c| mean_var(&(0..n).map(|r| survey.scored(r, c)).collect::<Vec<_>>()).1)
        .sum();
    let totals: Vec<f64> = (0..n).map(|r| cols.iter().map(|&c| survey.scored(r, c)).sum()).collect();
    let total_var = mean_var(&totals).1;
    if total_var == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let kf = k as f64;
    Ok(CronbachResult { alpha: kf / (kf - 1.0) * (1.0 - item_var / total_var), n_items: k, p_value: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OccupantRecord;
    use chrono::{Duration, NaiveDate};

    /// Student-t two-sided tails in closed form for small even/odd df.
    fn p_closed_form(t: f64, df: u32) -> f64 {
        let t = t.abs();
        match df {
            1 => 1.0 - 2.0 / std::f64::consts::PI * t.atan(),
            2 => 1.0 - t / (2.0 + t * t).sqrt(),
            4 => {
                let q = t * t / (1.0 + t * t / 4.0);
                let cdf = 0.5 + 3.0 / 8.0 * (t / (1.0 + t * t / 4.0).sqrt()) * (1.0 - q / 12.0);
                2.0 * (1.0 - cdf)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn pooled_hand_case() {
        let r = two_sample_ttest(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], TTestVariant::Pooled).unwrap();
        // sp² = 1, se = sqrt(2/3), t = −3 / se.
        assert!((r.t - (-3.0 / (2.0f64 / 3.0).sqrt())).abs() < 1e-12);
        assert!((r.t + 3.674).abs() < 5e-4);
        assert_eq!(r.df, 4.0);
        assert!((r.p - p_closed_form(r.t, 4)).abs() < 1e-10);
        assert!((r.p - 0.021).abs() < 1e-3);
    }

    #[test]
    fn tail_matches_closed_forms() {
        for &t in &[0.0, 0.3, 1.0, 2.5, 7.0, -4.2] {
            for df in [1, 2, 4] {
                assert!((t_two_sided_p(t, f64::from(df)) - p_closed_form(t, df)).abs() < 1e-10, "t={t} df={df}");
            }
        }
    }

    #[test]
    fn identical_and_swapped_samples() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0];
        let r = two_sample_ttest(&a, &a, TTestVariant::Pooled).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let b = [2.0, 7.0, 1.0, 8.0];
        for v in [TTestVariant::Pooled, TTestVariant::Welch] {
            let (x, y) = (two_sample_ttest(&a, &b, v).unwrap(), two_sample_ttest(&b, &a, v).unwrap());
            assert_eq!(x.t, -y.t);
            assert_eq!(x.p, y.p);
        }
        assert!(two_sample_ttest(&[1.0], &b, TTestVariant::Pooled).is_err());
        assert!(two_sample_ttest(&[1.0, 1.0], &[2.0, 2.0], TTestVariant::Pooled).is_err());
    }

    #[test]
    fn welch_equals_pooled_for_equal_sizes_and_variances() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, 5.0, 6.0];
        let w = two_sample_ttest(&a, &b, TTestVariant::Welch).unwrap();
        let p = two_sample_ttest(&a, &b, TTestVariant::Pooled).unwrap();
        assert!((w.t - p.t).abs() < 1e-12 && (w.df - 4.0).abs() < 1e-12);
    }

    #[test]
    fn savings_examples() {
        assert!((savings_delta(402.2, 157.5).unwrap() - 60.8).abs() < 0.05);
        assert!((savings_delta(663.5, 537.6).unwrap() - 19.0).abs() < 0.05);
        assert!((savings_delta(469.8, 225.8).unwrap() - 51.9).abs() < 0.05);
        assert_eq!(savings_delta(10.0, 10.0).unwrap(), 0.0);
        assert_eq!(savings_delta(417.5, 0.0).unwrap(), 100.0);
        assert_eq!(savings_delta(0.0, 1.0), Err(StatsError::NonPositiveBefore(0.0)));
        assert_eq!(round_half_up(savings_delta(417.5, 393.9).unwrap(), 1), 5.7);
        assert_eq!(round_half_up(0.25, 1), 0.3);
    }

    /// One end-of-day record per occupant and date carrying that day's totals.
    fn usage_dataset(start: NaiveDate, days: usize, minutes: &dyn Fn(usize, usize) -> [u32; 4], occupants: usize) -> Dataset {
        let mut recs = Vec::new();
        for o in 0..occupants {
            for d in 0..days {
                let date = start + Duration::days(d as i64);
                let mut rec = OccupantRecord::empty(format!("o{o}"), date.and_hms_opt(23, 59, 0).unwrap());
                rec.usage_today = minutes(o, d);
                recs.push(rec);
            }
        }
        Dataset::from_records(recs).unwrap()
    }

    #[test]
    fn savings_table_reproduces_means_and_na() {
        let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(); // Monday
        // Ceiling light weekday samples with means 417.5 and 393.9.
        let before = usage_dataset(start, 5, &|o, d| [[410, 425][(o + d) % 2], 5 + (d as u32), 0, 0], 2);
        let after = usage_dataset(start + Duration::days(7), 5, &|o, d| [394 - u32::from(o == 0 && d == 0), 2 + (o as u32), 0, 1], 2);
        let rep = savings_table(&before, &after, TTestVariant::Pooled).unwrap();
        let row = rep.before_after.iter().find(|r| r.device == ResourceKind::CeilingLight && r.period == DayPeriod::Weekday).unwrap();
        assert_eq!(row.before_mean, Some(417.5));
        assert!((row.after_mean.unwrap() - 393.9).abs() < 1e-9);
        assert!((row.delta_pct.unwrap() - 5.6527).abs() < 1e-4);
        let air = rep.before_after.iter().find(|r| r.device == ResourceKind::AirCon).unwrap();
        assert_eq!(air.delta_pct, None);
        assert_eq!(air.note.as_deref(), Some("device unused in before period"));
        let fan = rep.weekday_weekend.iter().find(|r| r.device == ResourceKind::CeilingFan).unwrap();
        assert_eq!(fan.note.as_deref(), Some("device unused"));
        let mut buf = Vec::new();
        rep.write_savings_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().any(|l| l.starts_with("ceiling_light,weekday,417.5,393.9,") && l.contains(",5.7,")));
        assert!(text.contains("ac,weekday,N/A,N/A,N/A,N/A,device unused in before period"));
    }

    #[test]
    fn same_dataset_gives_no_savings() {
        let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
        let ds = usage_dataset(start, 14, &|o, d| [100 + (o * 7 + d * 13) as u32 % 40, 50 + (d as u32 % 5), 0, 0], 3);
        let rep = savings_table(&ds, &ds, TTestVariant::Pooled).unwrap();
        for r in rep.before_after.iter().filter(|r| r.device <= ResourceKind::DeskLight) {
            assert_eq!(r.delta_pct, Some(0.0));
            assert!((r.p.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    fn survey(cols: &[(&str, bool, &[u8])]) -> LikertSurvey {
        let mut text = String::from("respondent_id,item_id,value,reverse_coded\n");
        for (item, rev, vals) in cols {
            for (r, v) in vals.iter().enumerate() {
                text.push_str(&format!("r{r},{item},{v},{}\n", u8::from(*rev)));
            }
        }
        LikertSurvey::from_csv_reader(text.as_bytes()).unwrap()
    }

    #[test]
    fn cronbach_cases() {
        let s = survey(&[("a", false, &[1, 3, 4, 5]), ("b", false, &[1, 3, 4, 5]), ("c", false, &[1, 2, 4, 5]), ("d", false, &[5, 5, 2, 1])]);
        assert!((cronbach_alpha(&s, &["a", "b"]).unwrap().alpha - 1.0).abs() < 1e-12);
        // α = 4·cov / var(total) for two items: cov = −11/3, var(total) = 1/4.
        let neg = cronbach_alpha(&s, &["c", "d"]).unwrap().alpha;
        assert!((neg - 4.0 * (-11.0 / 3.0) / 0.25).abs() < 1e-9);
        assert!(neg < 0.0);
        assert_eq!(cronbach_alpha(&s, &["a"]), Err(StatsError::TooFewItems(1)));
        assert_eq!(cronbach_alpha(&s, &["a", "zz"]), Err(StatsError::UnknownItem("zz".into())));
    }

    #[test]
    fn mirrored_items_cancel_unless_reverse_coded() {
        let x: &[u8] = &[1, 2, 4, 5];
        let mirrored: &[u8] = &[5, 4, 2, 1];
        // x + (6 − x) is constant, so the raw total has no variance.
        let raw = survey(&[("p", false, x), ("q", false, mirrored)]);
        assert_eq!(cronbach_alpha(&raw, &["p", "q"]), Err(StatsError::ZeroVariance));
        let coded = survey(&[("p", false, x), ("q", true, mirrored)]);
        assert!((cronbach_alpha(&coded, &["p", "q"]).unwrap().alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn survey_parser_rejects_bad_rows() {
        let parse = |t: &str| LikertSurvey::from_csv_reader(t.as_bytes());
        let h = "respondent_id,item_id,value,reverse_coded\n";
        assert!(parse(&format!("{h}r1,a,6,0\n")).is_err());
        assert!(parse(&format!("{h}r1,a,3,0\nr1,a,4,0\n")).is_err());
        assert!(parse(&format!("{h}r1,a,3,0\nr2,a,4,1\n")).is_err());
        assert!(parse(&format!("{h}r1,a,3,0\nr2,b,4,0\n")).is_err());
    }
}
