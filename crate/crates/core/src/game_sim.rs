//! Sequential discrete game: fitted agents choose on/off per resource each
//! minute by maximizing their aggregated random utilities.
//!
//! Each resource contributes one random utility with the choice set
//! {off, on}. Utilities carry i.i.d. Gumbel noise, so choice probabilities
//! are the logit of the fitted model. The aggregated utility is a sum over
//! resources with disjoint choice sets, hence its joint maximizer is the
//! per-resource maximizer.
//!
//! The feature count `d` of a model and the number of utilities `R` per agent
//! are unrelated quantities.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use chrono::NaiveDate;
use ndarray::Array1;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    pool_features, write_dataset_with_extra, Calendar, DataError, Dataset, FeaturePooler, OccupantRecord,
    ResourceKind, Scenario,
};
use crate::evaluation::{evaluate_cells, CellStatus, DateSplit, ExperimentError, ExperimentSettings, FittedPipeline, ModelKind};
use crate::model::ModelError;
use crate::points::{daily_points, Baseline, PointsConfig, PointsError};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Error)]
pub enum GameError {
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("stream for `{occupant}` has {available} minutes, horizon needs {needed}")]
    StreamTooShort { occupant: String, needed: usize, available: usize },
    #[error("occupant `{0}` is not in the stream")]
    UnknownOccupant(String),
    #[error("no baseline for occupant `{0}`")]
    MissingBaseline(String),
    #[error("resource {0} has more than one utility")]
    DuplicateUtility(ResourceKind),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Points(#[from] PointsError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One element of a resource's choice set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Off,
    On,
}

/// Choice set of every resource; the index order is the tie-break order.
pub const CHOICE_SET: [Choice; 2] = [Choice::Off, Choice::On];

/// Distribution of the unobserved utility term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// i.i.d. standard Gumbel: choice probabilities are the softmax of the
    /// systematic utilities.
    #[default]
    Gumbel,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceMode {
    /// Most probable choice per resource; ties go to off.
    #[default]
    Argmax,
    /// One draw per resource from its choice distribution.
    Sample,
}

/// Fitted utility of one resource: pooled feature history to choice
/// probabilities over [`CHOICE_SET`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomUtility {
    pub resource: ResourceKind,
    pub pipeline: FittedPipeline,
    pub noise: NoiseModel,
}

impl RandomUtility {
    /// `[P(off), P(on)]` given pooled rows, oldest first. Sums to 1.
    pub fn probabilities(&self, history: &[Array1<f64>]) -> Result<[f64; 2], GameError> {
        let n = self.pipeline.window_len.max(1).min(history.len());
        let rows: Vec<Array1<f64>> = history[history.len() - n..]
            .iter()
            .map(|r| self.pipeline.transform(r.view()))
            .collect();
        let p = self.pipeline.predict(&rows)?.clamp(0.0, 1.0);
        Ok([1.0 - p, p])
    }
}

/// Systematic utilities consistent with `probs` under Gumbel noise, up to a
/// shared additive constant.
pub fn choice_scores(probs: &[f64]) -> Vec<f64> {
    probs.iter().map(|p| p.ln()).collect()
}

/// Index of the largest score; ties go to the lowest index (off).
pub fn argmax_choice(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Maximizer of the summed scores over the full product of choice sets,
/// by enumeration. Ties go to the first joint action in lexicographic order.
/// Exponential in the number of resources; a reference for the per-resource
/// rule.
pub fn joint_argmax_bruteforce(scores: &[Vec<f64>]) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut idx = vec![0usize; scores.len()];
    loop {
        let total: f64 = idx.iter().zip(scores).map(|(&i, s)| s[i]).sum();
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, idx.clone()));
        }
        // Odometer increment, last resource fastest.
        let mut k = scores.len();
        loop {
            if k == 0 {
                return best.map(|(_, v)| v).unwrap_or_default();
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < scores[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// One agent: a utility per modelled resource; the rest are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub occupant_id: String,
    /// Pooled feature layout the utilities read.
    pub feature_names: Vec<String>,
    /// Sorted by resource, at most one per resource.
    pub utilities: Vec<RandomUtility>,
    /// Resources without a model, with the reason.
    pub absent: BTreeMap<ResourceKind, String>,
}

impl AgentProfile {
    pub fn new(
        occupant_id: impl Into<String>,
        feature_names: Vec<String>,
        mut utilities: Vec<RandomUtility>,
        absent: BTreeMap<ResourceKind, String>,
    ) -> Result<Self, GameError> {
        utilities.sort_by_key(|u| u.resource);
        for w in utilities.windows(2) {
            if w[0].resource == w[1].resource {
                return Err(GameError::DuplicateUtility(w[0].resource));
            }
        }
        for u in &utilities {
            if absent.contains_key(&u.resource) {
                return Err(GameError::DuplicateUtility(u.resource));
            }
            if let Some(&c) = u.pipeline.columns.iter().find(|&&c| c >= feature_names.len()) {
                return Err(GameError::SchemaMismatch(format!(
                    "{} utility reads column {c} of a {}-column layout",
                    u.resource,
                    feature_names.len()
                )));
            }
        }
        Ok(AgentProfile { occupant_id: occupant_id.into(), feature_names, utilities, absent })
    }

    pub fn utility(&self, r: ResourceKind) -> Option<&RandomUtility> {
        self.utilities.iter().find(|u| u.resource == r)
    }

    /// Longest history any utility reads.
    pub fn history_len(&self) -> usize {
        self.utilities.iter().map(|u| u.pipeline.window_len.max(1)).max().unwrap_or(1)
    }
}

/// Actions and `P(on)` per resource in [`ResourceKind`] order; `None` for
/// absent resources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub actions: [Option<Choice>; 4],
    pub p_on: [Option<f64>; 4],
}

/// Maximizes the agent's aggregated utility given pooled feature rows
/// (oldest first, last is the current minute). Separability reduces the
/// joint problem to one choice per resource.
pub fn aggregated_utility_choice(
    agent: &AgentProfile,
    history: &[Array1<f64>],
    mode: ChoiceMode,
    seed: u64,
) -> Result<Decision, GameError> {
    let width = agent.feature_names.len();
    if history.is_empty() {
        return Err(GameError::SchemaMismatch("empty feature history".into()));
    }
    if let Some(r) = history.iter().find(|r| r.len() != width) {
        return Err(GameError::SchemaMismatch(format!("row has {} features, expected {width}", r.len())));
    }
    let mut rng = rng_from_seed(seed);
    let mut d = Decision { actions: [None; 4], p_on: [None; 4] };
    for u in &agent.utilities {
        let probs = u.probabilities(history)?;
        let pick = match mode {
            ChoiceMode::Argmax => argmax_choice(&choice_scores(&probs)),
            ChoiceMode::Sample => usize::from(rng.random::<f64>() < probs[1]),
        };
        let k = u.resource.index();
        d.actions[k] = Some(CHOICE_SET[pick]);
        d.p_on[k] = Some(probs[1]);
    }
    Ok(d)
}

/// Game points one agent earned on one simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyPoints {
    pub occupant_id: String,
    pub date: NaiveDate,
    /// Per resource in [`ResourceKind`] order.
    pub points: [f64; 4],
    pub total: f64,
}

/// Simulated minutes, grouped by agent and time-ordered within each agent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    /// Stream records with simulated `status`, `usage_today` and
    /// `points_game`.
    pub records: Vec<OccupantRecord>,
    /// `P(on)` per record and resource; `None` for absent resources and
    /// minutes without a feature row.
    pub p_on: Vec<[Option<f64>; 4]>,
    pub daily: Vec<DailyPoints>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Share of simulated minutes with `r` on.
    pub fn on_fraction(&self, r: ResourceKind) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let on = self.records.iter().filter(|rec| rec.status_of(r)).count();
        on as f64 / self.records.len() as f64
    }

    /// Dataset CSV with trailing `action_prob_<resource>` columns.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let header: Vec<String> = ResourceKind::ALL.iter().map(|r| format!("action_prob_{r}")).collect();
        let extra: Vec<Vec<String>> = self
            .p_on
            .iter()
            .map(|ps| ps.iter().map(|p| p.map(|v| v.to_string()).unwrap_or_default()).collect())
            .collect();
        write_dataset_with_extra(&self.records, &header, &extra, writer)
    }

    /// Daily points CSV: `occupant,date,<resource>...,total`.
    pub fn write_points_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["occupant".to_string(), "date".to_string()];
        header.extend(ResourceKind::ALL.iter().map(|r| r.to_string()));
        header.push("total".into());
        w.write_record(&header)?;
        for d in &self.daily {
            let mut row = vec![d.occupant_id.clone(), d.date.to_string()];
            row.extend(d.points.iter().map(|p| p.to_string()));
            row.push(d.total.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Minutes simulated per agent.
    pub horizon: usize,
    pub mode: ChoiceMode,
    pub points: PointsConfig,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { horizon: 1440, mode: ChoiceMode::Argmax, points: PointsConfig::default(), seed: 0 }
    }
}

fn close_day(
    id: &str,
    date: NaiveDate,
    usage: &[u32; 4],
    baseline: &Baseline,
    cfg: &PointsConfig,
) -> Result<DailyPoints, PointsError> {
    let mut points = [0.0; 4];
    for r in ResourceKind::ALL {
        let k = r.index();
        points[k] = daily_points(baseline.for_date(r, date), f64::from(usage[k]), cfg.booster[k])?;
    }
    Ok(DailyPoints { occupant_id: id.to_string(), date, points, total: points.iter().sum() })
}

fn simulate_agent(
    agent: &AgentProfile,
    stream: &[OccupantRecord],
    calendar: &Calendar,
    baseline: &Baseline,
    cfg: &SimulationConfig,
) -> Result<SimulationTrace, GameError> {
    let id = agent.occupant_id.as_str();
    let mut pooler = FeaturePooler::new(calendar);
    let keep = agent.history_len();
    let mut history: VecDeque<Array1<f64>> = VecDeque::with_capacity(keep + 1);
    let mut trace = SimulationTrace::default();
    let offset = stream.first().map_or(0.0, |r| r.points_game);
    let mut earned = 0.0;
    let mut usage = [0u32; 4];
    let mut day: Option<NaiveDate> = None;

    for (t, src) in stream[..cfg.horizon].iter().enumerate() {
        let date = src.date();
        if day != Some(date) {
            if let Some(d) = day {
                let p = close_day(id, d, &usage, baseline, &cfg.points)?;
                earned += p.total;
                trace.daily.push(p);
            }
            usage = [0; 4];
            day = Some(date);
        }
        let mut rec = src.clone();
        rec.points_game = offset + earned;
        let decision = match pooler.features(&rec) {
            Some(row) => {
                history.push_back(Array1::from(row));
                if history.len() > keep {
                    history.pop_front();
                }
                let seed = derive_seed(cfg.seed, &format!("game/{id}/{t}"));
                aggregated_utility_choice(agent, history.make_contiguous(), cfg.mode, seed)?
            }
            // No feature row (stale weather): modelled resources stay off.
            None => Decision {
                actions: ResourceKind::ALL.map(|r| agent.utility(r).map(|_| Choice::Off)),
                p_on: [None; 4],
            },
        };
        for r in ResourceKind::ALL {
            let k = r.index();
            if let Some(a) = decision.actions[k] {
                rec.status[k] = a == Choice::On;
            }
            usage[k] += u32::from(rec.status[k]);
        }
        rec.usage_today = usage;
        pooler.fold(&rec);
        trace.records.push(rec);
        trace.p_on.push(decision.p_on);
    }
    if let Some(d) = day {
        trace.daily.push(close_day(id, d, &usage, baseline, &cfg.points)?);
    }
    Ok(trace)
}

/// Plays the first `horizon` stream minutes of each agent's occupant.
///
/// Exogenous fields (weather, calendar, engagement) come from the stream.
/// Statuses of modelled resources come from the agent's choices and feed the
/// next minute's sensor-derived features; absent resources replay the stream.
/// `usage_today` and `points_game` are recomputed from the simulated
/// statuses, with points closed at each midnight and at the horizon. Pooled
/// features are per occupant, so agents never read each other's actions and
/// run in parallel.
pub fn simulate_game(
    agents: &[AgentProfile],
    stream: &Dataset,
    calendar: &Calendar,
    baselines: &BTreeMap<String, Baseline>,
    cfg: &SimulationConfig,
) -> Result<SimulationTrace, GameError> {
    cfg.points.validate()?;
    let layout: Vec<String> = FeaturePooler::new(calendar).descriptors().into_iter().map(|d| d.name).collect();
    let parts: Vec<SimulationTrace> = agents
        .par_iter()
        .map(|agent| {
            let id = &agent.occupant_id;
            if agent.feature_names != layout {
                return Err(GameError::SchemaMismatch(format!(
                    "agent `{id}` was fitted on a different feature layout"
                )));
            }
            let recs = stream.occupant_records(id).ok_or_else(|| GameError::UnknownOccupant(id.clone()))?;
            if recs.len() < cfg.horizon {
                return Err(GameError::StreamTooShort {
                    occupant: id.clone(),
                    needed: cfg.horizon,
                    available: recs.len(),
                });
            }
            let baseline = baselines.get(id).ok_or_else(|| GameError::MissingBaseline(id.clone()))?;
            simulate_agent(agent, recs, calendar, baseline, cfg)
        })
        .collect::<Result<_, _>>()?;
    let mut out = SimulationTrace::default();
    for p in parts {
        out.records.extend(p.records);
        out.p_on.extend(p.p_on);
        out.daily.extend(p.daily);
    }
    Ok(out)
}

/// Training path for [`fit_agent_profiles`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFitConfig {
    pub split: DateSplit,
    pub scenario: Scenario,
    pub resources: Vec<ResourceKind>,
    pub roster: Vec<ModelKind>,
    pub settings: ExperimentSettings,
}

/// Evaluates every occupant × resource cell and keeps the model with the best
/// test AUC as that resource's utility. Cells without a scorable model become
/// absent, as do resources outside `cfg.resources`. Profiles come back sorted
/// by occupant id.
pub fn fit_agent_profiles(ds: &Dataset, calendar: &Calendar, cfg: &AgentFitConfig) -> Result<Vec<AgentProfile>, GameError> {
    cfg.split.validate(ds).map_err(ExperimentError::from)?;
    let pooled = pool_features(ds, calendar)?;
    let cells = evaluate_cells(&pooled, &cfg.split, cfg.scenario, &cfg.resources, &cfg.roster, &cfg.settings)?;
    let names = pooled.names();
    let mut ids = pooled.occupant_ids.clone();
    ids.sort();
    ids.into_iter()
        .map(|id| {
            let mut utilities = Vec::new();
            let mut absent: BTreeMap<ResourceKind, String> =
                ResourceKind::ALL.iter().map(|&r| (r, "not modelled".to_string())).collect();
            for cell in cells.iter().filter(|c| c.occupant == id) {
                match cell.best().and_then(|o| o.pipeline.clone()) {
                    Some(pipeline) => {
                        absent.remove(&cell.resource);
                        utilities.push(RandomUtility { resource: cell.resource, pipeline, noise: NoiseModel::Gumbel });
                    }
                    None => {
                        let reason = cell
                            .outcomes
                            .iter()
                            .find_map(|o| match &o.status {
                                CellStatus::NotApplicable(r) => Some(r.clone()),
                                CellStatus::Ok => None,
                            })
                            .unwrap_or_else(|| "no model with a test AUC".into());
                        absent.insert(cell.resource, reason);
                    }
                }
            }
            AgentProfile::new(id, names.clone(), utilities, absent)
        })
        .collect()
}
