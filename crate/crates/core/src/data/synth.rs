use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, EnvChannel, OccupantRecord, ResourceKind};
use crate::points::{compute_baselines, day_points, update_rankings, PointsConfig, PointsLedger};
use crate::seed::{derive_seed, rng_from_seed, Rng};

const MINUTES_PER_DAY: usize = 1440;

/// How the target resource's status is generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantedSignal {
    /// On exactly when the weather channel exceeds `threshold` this minute.
    Memoryless { channel: EnvChannel, threshold: f64 },
    /// Two interleaved chains: status at t repeats status at t−2 with
    /// probability `persistence`, otherwise flips.
    MarkovOrder2 { persistence: f64 },
    /// On exactly when the external temperature exceeds `threshold`.
    WeatherOnly { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub occupants: usize,
    pub days: usize,
    pub planted_signal: PlantedSignal,
    #[serde(default)]
    pub noise_flip_prob: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    #[serde(default = "default_target")]
    pub target: ResourceKind,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 9, 12).expect("valid date")
}

fn default_target() -> ResourceKind {
    ResourceKind::CeilingFan
}

impl SynthConfig {
    pub fn new(occupants: usize, days: usize, planted_signal: PlantedSignal, seed: u64) -> Self {
        SynthConfig {
            occupants,
            days,
            planted_signal,
            noise_flip_prob: 0.0,
            seed,
            start_date: default_start(),
            target: default_target(),
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        if self.occupants == 0 || self.days == 0 {
            return bad("synth needs at least one occupant and one day");
        }
        if !(0.0..0.5).contains(&self.noise_flip_prob) {
            return bad("noise_flip_prob must lie in [0, 0.5)");
        }
        match self.planted_signal {
            PlantedSignal::MarkovOrder2 { persistence } if !(0.0..=1.0).contains(&persistence) => {
                bad("persistence must lie in [0, 1]")
            }
            PlantedSignal::Memoryless { threshold, .. } | PlantedSignal::WeatherOnly { threshold }
                if !threshold.is_finite() =>
            {
                bad("threshold must be finite")
            }
            _ => Ok(()),
        }
    }
}

/// Shared weather: diurnal sinusoids plus AR(1) noise and a per-day offset.
fn weather(cfg: &SynthConfig, n: usize) -> Vec<[f64; 5]> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, "synth/weather"));
    let step = Normal::new(0.0, 0.15).expect("valid normal");
    let daily = Normal::new(0.0, 1.5).expect("valid normal");
    let mut ar = [0.0f64; 5];
    let mut offset = [0.0f64; 2];
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        if t % MINUTES_PER_DAY == 0 {
            offset = [daily.sample(&mut rng), 2.0 * daily.sample(&mut rng)];
        }
        for a in ar.iter_mut() {
            *a = 0.98 * *a + step.sample(&mut rng);
        }
        let h = (t % MINUTES_PER_DAY) as f64 / 60.0;
        let ext_temp = 28.0 + 3.5 * (2.0 * PI * (h - 9.0) / 24.0).sin() + offset[0] + ar[0];
        let ext_hum =
            (62.0 + 12.0 * (2.0 * PI * (h - 5.0) / 24.0).cos() + offset[1] + 2.0 * ar[1]).clamp(0.0, 100.0);
        let solar = if (6.0..18.0).contains(&h) {
            (800.0 * (PI * (h - 6.0) / 12.0).sin() + 40.0 * ar[2]).max(0.0)
        } else {
            0.0
        };
        let room_temp = 0.5 * ext_temp + 12.5 + 0.5 * ar[3];
        let room_hum = (0.6 * ext_hum + 20.0 + ar[4]).clamp(0.0, 100.0);
        out.push([ext_temp, ext_hum, solar, room_temp, room_hum]);
    }
    out
}

/// Background on/off chain with daytime-dependent switch-on probability.
fn background_step(rng: &mut Rng, on: bool, r: ResourceKind, minute_of_day: usize) -> bool {
    let daytime = (7 * 60..23 * 60).contains(&minute_of_day);
    let (p_on, p_off) = match r {
        ResourceKind::CeilingLight => (if daytime { 0.01 } else { 0.001 }, 0.01),
        ResourceKind::DeskLight => (if daytime { 0.004 } else { 0.0005 }, 0.02),
        ResourceKind::CeilingFan => (if daytime { 0.008 } else { 0.003 }, 0.01),
        ResourceKind::AirCon => (if daytime { 0.002 } else { 0.004 }, 0.006),
    };
    if on {
        rng.random::<f64>() >= p_off
    } else {
        rng.random::<f64>() < p_on
    }
}

/// Per-occupant status traces, `[minute][resource]`.
fn statuses(cfg: &SynthConfig, k: usize, wx: &[[f64; 5]]) -> Vec<[bool; 4]> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &format!("synth/occupant/{k}")));
    let target = cfg.target.index();
    let n = wx.len();
    let mut out: Vec<[bool; 4]> = Vec::with_capacity(n);
    let mut clean: Vec<bool> = Vec::with_capacity(n);
    let mut state = [false; 4];
    for t in 0..n {
        let mod_ = t % MINUTES_PER_DAY;
        for r in ResourceKind::ALL {
            if r.index() != target {
                state[r.index()] = background_step(&mut rng, state[r.index()], r, mod_);
            }
        }
        let planted = match cfg.planted_signal {
            PlantedSignal::Memoryless { channel, threshold } => wx[t][channel.index()] > threshold,
            PlantedSignal::WeatherOnly { threshold } => wx[t][EnvChannel::ExtTemp.index()] > threshold,
            PlantedSignal::MarkovOrder2 { persistence } => {
                if t < 2 {
                    rng.random::<bool>()
                } else {
                    let keep = rng.random::<f64>() < persistence;
                    clean[t - 2] == keep
                }
            }
        };
        clean.push(planted);
        let flip = cfg.noise_flip_prob > 0.0 && rng.random::<f64>() < cfg.noise_flip_prob;
        state[target] = planted != flip;
        out.push(state);
    }
    out
}

/// Generates `occupants × days × 1440` records starting at local midnight of
/// `start_date`. The first week is pre-game: its usage sets the baselines and
/// points/ranks stay empty. Afterwards daily points accumulate and ranks are
/// refreshed at each midnight.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset, DataError> {
    cfg.validate()?;
    let n = cfg.days * MINUTES_PER_DAY;
    let wx = weather(cfg, n);
    let t0 = NaiveDateTime::from(cfg.start_date);
    let ids: Vec<String> = (0..cfg.occupants).map(|k| format!("occ{:02}", k + 1)).collect();

    let mut per_occ: Vec<Vec<OccupantRecord>> = Vec::with_capacity(cfg.occupants);
    for (k, id) in ids.iter().enumerate() {
        let st = statuses(cfg, k, &wx);
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &format!("synth/engagement/{k}")));
        let mut usage = [0u32; 4];
        let mut visits = 0u32;
        let mut survey = 0.0;
        let mut recs = Vec::with_capacity(n);
        for t in 0..n {
            if t % MINUTES_PER_DAY == 0 {
                usage = [0; 4];
                if rng.random::<f64>() < 0.3 {
                    survey += 5.0;
                }
            }
            if rng.random::<f64>() < 0.002 {
                visits += 1;
            }
            let mut rec = OccupantRecord::empty(id.clone(), t0 + Duration::minutes(t as i64));
            rec.status = st[t];
            for i in 0..4 {
                usage[i] += u32::from(st[t][i]);
            }
            rec.usage_today = usage;
            rec.points_survey = survey;
            rec.portal_visits = visits;
            rec.env = wx[t].map(Some);
            recs.push(rec);
        }
        per_occ.push(recs);
    }

    let pre_days = crate::points::MIN_BASELINE_DAYS;
    if cfg.days > pre_days {
        let pre: Vec<OccupantRecord> = per_occ
            .iter()
            .flat_map(|r| r[..pre_days * MINUTES_PER_DAY].iter().cloned())
            .collect();
        let baselines = compute_baselines(&Dataset::from_records(pre)?)
            .map_err(|e| DataError::InvalidConfig(e.to_string()))?;
        let pcfg = PointsConfig::default();
        let mut totals: BTreeMap<String, f64> = ids.iter().map(|id| (id.clone(), 0.0)).collect();
        for day in pre_days..cfg.days {
            let ledger = update_rankings(PointsLedger::from_points(
                totals.iter().map(|(id, p)| (id.clone(), *p)),
            ));
            let date = cfg.start_date + Duration::days(day as i64);
            for (k, id) in ids.iter().enumerate() {
                let b = baselines[id];
                let rank = ledger.rank_of(id);
                let range = day * MINUTES_PER_DAY..(day + 1) * MINUTES_PER_DAY;
                for rec in &mut per_occ[k][range.clone()] {
                    rec.baseline = ResourceKind::ALL.map(|r| Some(b.for_date(r, date)));
                    rec.points_game = totals[id];
                    rec.rank = rank;
                }
                let used = per_occ[k][range.end - 1].usage_today;
                let earned = day_points(&b, date, &used, &pcfg)
                    .map_err(|e| DataError::InvalidConfig(e.to_string()))?;
                *totals.get_mut(id).expect("known occupant") += earned;
            }
        }
    }
    Dataset::from_records(per_occ.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn memoryless() -> PlantedSignal {
        PlantedSignal::Memoryless {
            channel: EnvChannel::ExtHumidity,
            threshold: 70.0,
        }
    }

    #[test]
    fn zero_noise_follows_the_planted_rule() {
        let ds = synth_generate(&SynthConfig::new(1, 2, memoryless(), 3)).unwrap();
        let mut on = 0;
        for r in ds.records() {
            let h = r.env_of(EnvChannel::ExtHumidity).unwrap();
            assert_eq!(r.status_of(ResourceKind::CeilingFan), h > 70.0);
            on += usize::from(h > 70.0);
        }
        // The rule must actually switch within the sample.
        assert!(on > 0 && on < ds.len());
    }

    #[test]
    fn counts_and_determinism() {
        let cfg = SynthConfig::new(2, 7, memoryless(), 11);
        let a = synth_generate(&cfg).unwrap();
        assert_eq!(a.len(), 20160);
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn game_period_carries_points_and_ranks() {
        let mut cfg = SynthConfig::new(3, 9, PlantedSignal::WeatherOnly { threshold: 29.0 }, 5);
        cfg.noise_flip_prob = 0.05;
        let ds = synth_generate(&cfg).unwrap();
        let recs = ds.occupant_records("occ02").unwrap();
        assert!(recs[0].rank.is_none() && recs[0].baseline[0].is_none());
        let day8 = &recs[7 * MINUTES_PER_DAY];
        assert!(day8.rank.is_some() && day8.baseline.iter().all(Option::is_some));
        assert_eq!(day8.points_game, 0.0);
        let day9 = &recs[8 * MINUTES_PER_DAY];
        assert_ne!(day9.points_game, 0.0);
        let mut ranks: Vec<u32> = ds
            .spans()
            .iter()
            .map(|s| ds.records()[s.range.start + 8 * MINUTES_PER_DAY].rank.unwrap())
            .collect();
        ranks.sort();
        assert_eq!(ranks, vec![1, 2, 3]);
    }

    #[test]
    fn markov_order2_repeats_lag_two() {
        let cfg = SynthConfig::new(1, 1, PlantedSignal::MarkovOrder2 { persistence: 0.9 }, 2);
        let ds = synth_generate(&cfg).unwrap();
        let s: Vec<bool> = ds.records().iter().map(|r| r.status[2]).collect();
        let same2 = (2..s.len()).filter(|&t| s[t] == s[t - 2]).count() as f64 / (s.len() - 2) as f64;
        let same1 = (1..s.len()).filter(|&t| s[t] == s[t - 1]).count() as f64 / (s.len() - 1) as f64;
        assert!((same2 - 0.9).abs() < 0.03, "{same2}");
        assert!((same1 - 0.5).abs() < 0.06, "{same1}");
    }

    #[test]
    fn rejects_bad_noise() {
        let mut cfg = SynthConfig::new(1, 1, memoryless(), 0);
        cfg.noise_flip_prob = 0.5;
        assert!(matches!(synth_generate(&cfg), Err(DataError::InvalidConfig(_))));
    }
}
