//! Baselines, daily game points, rankings and the points-weighted lottery.
//!
//! Daily points for a resource are `s * (b - u) / b`, where `b` is the
//! occupant's baseline minutes for that kind of day, `u` the minutes used and
//! `s` the resource booster. Using less than the baseline earns points; using
//! more loses them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::NaiveDate;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{is_weekend, Dataset, ResourceKind};
use crate::seed::rng_from_seed;

/// Zero pre-game baselines are raised to this many minutes.
pub const MIN_BASELINE_MIN: f64 = 1.0;
pub const DEFAULT_BOOSTER: f64 = 100.0;
pub const DEFAULT_AWARD_PERIOD_DAYS: u32 = 14;
/// Pre-game history needed before a baseline is trusted.
pub const MIN_BASELINE_DAYS: usize = 7;

#[derive(Debug, Error, PartialEq)]
pub enum PointsError {
    #[error("occupant `{0}` has insufficient pre-game history")]
    InsufficientHistory(String),
    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("booster must be positive, got {0}")]
    NonPositiveBooster(f64),
    #[error("usage must be non-negative, got {0}")]
    NegativeUsage(f64),
    #[error("{requested} winners requested but only {available} participants have positive points")]
    NotEnoughParticipants { requested: usize, available: usize },
}

/// Mean daily usage minutes per resource, split by weekday and weekend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub weekday_min: [f64; 4],
    pub weekend_min: [f64; 4],
}

impl Baseline {
    pub fn for_date(&self, r: ResourceKind, date: NaiveDate) -> f64 {
        if is_weekend(date) {
            self.weekend_min[r.index()]
        } else {
            self.weekday_min[r.index()]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointsConfig {
    /// Booster per resource, in [`ResourceKind`] order.
    pub booster: [f64; 4],
    pub award_period_days: u32,
}

impl Default for PointsConfig {
    fn default() -> Self {
        PointsConfig {
            booster: [DEFAULT_BOOSTER; 4],
            award_period_days: DEFAULT_AWARD_PERIOD_DAYS,
        }
    }
}

impl PointsConfig {
    pub fn validate(&self) -> Result<(), PointsError> {
        match self.booster.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            Some(&s) => Err(PointsError::NonPositiveBooster(s)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub occupant_id: String,
    pub points: f64,
    pub rank: u32,
}

/// Cumulative points per occupant with their current ranks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointsLedger {
    pub entries: Vec<LedgerEntry>,
}

impl PointsLedger {
    /// Ledger with the given points, ranked.
    pub fn from_points<I, S>(points: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let entries = points
            .into_iter()
            .map(|(id, p)| LedgerEntry {
                occupant_id: id.into(),
                points: p,
                rank: 0,
            })
            .collect();
        update_rankings(PointsLedger { entries })
    }

    pub fn rank_of(&self, occupant_id: &str) -> Option<u32> {
        self.entries
            .iter()
            .find(|e| e.occupant_id == occupant_id)
            .map(|e| e.rank)
    }

    /// Writes `occupant_id,points,rank` rows in rank order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["occupant_id", "points", "rank"])?;
        let mut sorted: Vec<&LedgerEntry> = self.entries.iter().collect();
        sorted.sort_by_key(|e| e.rank);
        for e in sorted {
            w.write_record([e.occupant_id.clone(), e.points.to_string(), e.rank.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Total minutes used per (occupant, date, resource): the last `usage_today`
/// seen on each date.
pub fn daily_totals(ds: &Dataset) -> BTreeMap<(String, NaiveDate), [u32; 4]> {
    let mut out = BTreeMap::new();
    for rec in ds.records() {
        let slot = out
            .entry((rec.occupant_id.clone(), rec.date()))
            .or_insert([0u32; 4]);
        for k in 0..4 {
            slot[k] = slot[k].max(rec.usage_today[k]);
        }
    }
    out
}

/// Per-occupant weekday and weekend mean daily usage. Needs at least
/// [`MIN_BASELINE_DAYS`] distinct days including a weekend day and a weekday.
pub fn compute_baselines(pre_game: &Dataset) -> Result<BTreeMap<String, Baseline>, PointsError> {
    if pre_game.is_empty() {
        return Err(PointsError::InsufficientHistory(String::new()));
    }
    let totals = daily_totals(pre_game);
    let mut out = BTreeMap::new();
    for id in pre_game.occupant_ids() {
        let days: Vec<(&NaiveDate, &[u32; 4])> = totals
            .range((id.to_string(), NaiveDate::MIN)..=(id.to_string(), NaiveDate::MAX))
            .map(|((_, d), u)| (d, u))
            .collect();
        let (weekend, weekday): (Vec<_>, Vec<_>) = days.iter().partition(|(d, _)| is_weekend(**d));
        if days.len() < MIN_BASELINE_DAYS || weekend.is_empty() || weekday.is_empty() {
            return Err(PointsError::InsufficientHistory(id.to_string()));
        }
        let mean = |set: &[&(&NaiveDate, &[u32; 4])]| {
            let mut m = [0.0; 4];
            for k in 0..4 {
                let total: f64 = set.iter().map(|(_, u)| f64::from(u[k])).sum();
                m[k] = (total / set.len() as f64).max(MIN_BASELINE_MIN);
            }
            m
        };
        out.insert(
            id.to_string(),
            Baseline {
                weekday_min: mean(&weekday),
                weekend_min: mean(&weekend),
            },
        );
    }
    Ok(out)
}

/// `s * (b - u) / b`, evaluated as `s * ((b - u) / b)` so that `u = 0`
/// yields exactly `s` and `u = b` exactly zero.
pub fn daily_points(b: f64, u: f64, s: f64) -> Result<f64, PointsError> {
    if !(b > 0.0) {
        return Err(PointsError::NonPositiveBaseline(b));
    }
    if !(s > 0.0) {
        return Err(PointsError::NonPositiveBooster(s));
    }
    if !(u >= 0.0) {
        return Err(PointsError::NegativeUsage(u));
    }
    Ok(s * ((b - u) / b))
}

/// Sum of daily points across resources for one occupant-day.
pub fn day_points(
    baseline: &Baseline,
    date: NaiveDate,
    usage: &[u32; 4],
    cfg: &PointsConfig,
) -> Result<f64, PointsError> {
    ResourceKind::ALL.iter().try_fold(0.0, |acc, &r| {
        Ok(acc
            + daily_points(
                baseline.for_date(r, date),
                f64::from(usage[r.index()]),
                cfg.booster[r.index()],
            )?)
    })
}

/// Ranks 1..n by descending points; equal points rank by occupant id.
pub fn update_rankings(mut ledger: PointsLedger) -> PointsLedger {
    let mut order: Vec<usize> = (0..ledger.entries.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&ledger.entries[a], &ledger.entries[b]);
        eb.points
            .total_cmp(&ea.points)
            .then_with(|| ea.occupant_id.cmp(&eb.occupant_id))
    });
    for (rank, &i) in order.iter().enumerate() {
        ledger.entries[i].rank = rank as u32 + 1;
    }
    ledger
}

/// Draws `winners` distinct occupants without replacement, each draw with
/// probability proportional to `max(points, 0)` among those left.
pub fn run_lottery(ledger: &PointsLedger, winners: usize, seed: u64) -> Result<Vec<String>, PointsError> {
    let mut pool: Vec<(&str, f64)> = ledger
        .entries
        .iter()
        .filter(|e| e.points > 0.0)
        .map(|e| (e.occupant_id.as_str(), e.points))
        .collect();
    if winners > pool.len() {
        return Err(PointsError::NotEnoughParticipants {
            requested: winners,
            available: pool.len(),
        });
    }
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(winners);
    for _ in 0..winners {
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = pool.len() - 1;
        for (i, (_, w)) in pool.iter().enumerate() {
            if target < *w {
                pick = i;
                break;
            }
            target -= w;
        }
        out.push(pool.remove(pick).0.to_string());
    }
    Ok(out)
}

/// Cumulative game points per occupant over the in-game dataset.
pub fn game_ledger(
    game: &Dataset,
    baselines: &BTreeMap<String, Baseline>,
    cfg: &PointsConfig,
) -> Result<PointsLedger, PointsError> {
    let mut points: BTreeMap<String, f64> = BTreeMap::new();
    let ids: BTreeSet<&str> = game.occupant_ids().into_iter().collect();
    for ((id, date), usage) in daily_totals(game) {
        let b = baselines
            .get(&id)
            .ok_or_else(|| PointsError::InsufficientHistory(id.clone()))?;
        *points.entry(id).or_default() += day_points(b, date, &usage, cfg)?;
    }
    Ok(PointsLedger::from_points(
        ids.into_iter().map(|id| (id, points.get(id).copied().unwrap_or(0.0))),
    ))
}
