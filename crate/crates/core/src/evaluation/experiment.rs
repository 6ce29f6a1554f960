use std::collections::BTreeMap;

use chrono::NaiveDate;
use log::debug;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    fit_row_model, kfold_split, random_grid_search, roc_auc, CellStatus, Domain, EvalError, GridSearchSpec, ModelKind,
    ModelSettings, ParamPoint, ReportCell, ReportTable, DEFAULT_FOLDS,
};
use crate::data::{
    make_windows, pool_features, scenario_filter, Calendar, DataError, Dataset, FeatureMatrix, ResourceKind, Scenario,
};
use crate::deep_models::{birnn_predict_all, birnn_train, DeepError};
use crate::model::{ModelError, TrainedModel};
use crate::prep::{
    balance_dataset, discretize, mrmr_select, BalanceConfig, PrepError, StandardizationStats, DEFAULT_BINS, DEFAULT_TOP_K,
};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Deep(#[from] DeepError),
}

/// Inclusive calendar-date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.start && d <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateSplit {
    pub train: DateRange,
    pub test: DateRange,
}

impl DateSplit {
    /// Ranges must be ordered, disjoint and each hit at least one record.
    pub fn validate(&self, ds: &Dataset) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidSplit(m));
        for (name, r) in [("train", self.train), ("test", self.test)] {
            if r.start > r.end {
                return bad(format!("{name} range starts after it ends"));
            }
            if !ds.records().iter().any(|rec| r.contains(rec.date())) {
                return bad(format!("{name} range {}..{} holds no records", r.start, r.end));
            }
        }
        if self.train.start <= self.test.end && self.test.start <= self.train.end {
            return bad("train and test ranges overlap".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSettings {
    /// Features kept by mRMR; clamped to the number available.
    pub top_k: usize,
    pub mrmr_bins: usize,
    pub cv_folds: usize,
    /// Configurations sampled per model; 1 trains the base settings (with
    /// any domains sampled once) without cross-validation.
    pub search_budget: usize,
    pub search: BTreeMap<ModelKind, BTreeMap<String, Domain>>,
    /// Oversample the minority class for row models.
    pub smote: bool,
    pub balance: BalanceConfig,
    /// Trailing share of training windows held out for sequence-model early
    /// stopping and selection.
    pub validation_fraction: f64,
    pub models: ModelSettings,
    pub seed: u64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            top_k: DEFAULT_TOP_K,
            mrmr_bins: DEFAULT_BINS,
            cv_folds: DEFAULT_FOLDS,
            search_budget: 1,
            search: BTreeMap::new(),
            smote: true,
            balance: BalanceConfig::default(),
            validation_fraction: 0.1,
            models: ModelSettings::default(),
            seed: 0,
        }
    }
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidConfig(m.into()));
        if self.top_k == 0 || self.mrmr_bins < 2 {
            return bad("top_k must be positive and mrmr_bins at least 2");
        }
        if self.search_budget == 0 {
            return bad("search_budget must be at least 1");
        }
        if self.search_budget > 1 && self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        self.balance.validate().map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        for (&kind, domains) in &self.search {
            let spec = self.spec_for(kind, 0);
            spec.validate()?;
            let probe: ParamPoint = domains.keys().map(|k| (k.clone(), 1.0)).collect();
            self.models.configure(kind, &probe, 0)?;
        }
        Ok(())
    }

    fn spec_for(&self, kind: ModelKind, seed: u64) -> GridSearchSpec {
        GridSearchSpec {
            domains: self.search.get(&kind).cloned().unwrap_or_default(),
            budget: self.search_budget,
            seed,
        }
    }
}

/// Selected columns, training standardization and a fitted model: maps a
/// full pooled feature row (or a history of them) to `P(on)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub kind: ModelKind,
    pub resource: ResourceKind,
    /// Indices into the pooled feature layout, in selection order.
    pub columns: Vec<usize>,
    pub feature_names: Vec<String>,
    pub stats: StandardizationStats,
    pub model: TrainedModel,
    /// Rows of history the model reads; 1 for row models.
    pub window_len: usize,
}

impl FittedPipeline {
    /// Selected, standardized features of one pooled row.
    pub fn transform(&self, pooled_row: ArrayView1<'_, f64>) -> Array1<f64> {
        self.columns
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let v = pooled_row[c];
                if self.stats.is_pass_through(j) {
                    v
                } else {
                    (v - self.stats.mean[j]) / self.stats.sd[j]
                }
            })
            .collect()
    }

    /// `P(on)` from transformed rows, oldest first; the last row is the
    /// current minute. Sequence models left-pad a short history with its
    /// oldest row.
    pub fn predict(&self, history: &[Array1<f64>]) -> Result<f64, ModelError> {
        let last = history.last().expect("non-empty history");
        if !self.model.is_sequence() {
            return self.model.predict_row(last.view());
        }
        let n = self.window_len;
        let d = last.len();
        let mut w = Array2::zeros((n, d));
        let have = history.len().min(n);
        let tail = &history[history.len() - have..];
        for t in 0..n {
            let src = if t + have < n { &tail[0] } else { &tail[t + have - n] };
            w.row_mut(t).assign(src);
        }
        self.model.predict_window(w.view())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub kind: ModelKind,
    pub auc: Option<f64>,
    pub status: CellStatus,
    pub params: ParamPoint,
    pub cv_auc: Option<f64>,
    #[serde(skip)]
    pub pipeline: Option<FittedPipeline>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub occupant: String,
    pub resource: ResourceKind,
    pub outcomes: Vec<ModelOutcome>,
}

impl CellResult {
    /// Highest test AUC; ties keep roster order.
    pub fn best(&self) -> Option<&ModelOutcome> {
        let mut best: Option<&ModelOutcome> = None;
        for o in &self.outcomes {
            if let (Some(a), true) = (o.auc, o.pipeline.is_some()) {
                if best.is_none_or(|b| a > b.auc.unwrap_or(f64::NEG_INFINITY)) {
                    best = Some(o);
                }
            }
        }
        best
    }
}

/// Training and test rows of one (occupant, resource) after selection and
/// standardization.
struct PreparedCell {
    columns: Vec<usize>,
    names: Vec<String>,
    stats: StandardizationStats,
    train: FeatureMatrix,
    test: FeatureMatrix,
}

fn single_class(y: &[u8]) -> bool {
    y.iter().all(|&v| v == y[0])
}

/// `Err(reason)` marks the whole cell N/A.
fn prepare_cell(
    pooled: &FeatureMatrix,
    admitted: &[usize],
    occupant: &str,
    resource: ResourceKind,
    split: &DateSplit,
    settings: &ExperimentSettings,
) -> Result<PreparedCell, String> {
    let rows = pooled.rows_of_occupant(occupant);
    let date = |i: usize| pooled.row_timestamps[i].date();
    let train_rows: Vec<usize> = rows.iter().copied().filter(|&i| split.train.contains(date(i))).collect();
    let test_rows: Vec<usize> = rows.iter().copied().filter(|&i| split.test.contains(date(i))).collect();
    let labels = pooled.labels(resource);
    let y_train: Vec<u8> = train_rows.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<u8> = test_rows.iter().map(|&i| labels[i]).collect();
    if y_test.is_empty() || single_class(&y_test) {
        return Err("single class in test period".into());
    }
    if y_train.len() < 2 || single_class(&y_train) {
        return Err("single class in training period".into());
    }
    let x_train = pooled.rows.select(Axis(0), &train_rows).select(Axis(1), admitted);
    let names: Vec<String> = admitted.iter().map(|&c| pooled.descriptors[c].name.clone()).collect();
    let dm = discretize(&x_train, &names, settings.mrmr_bins);
    let k = settings.top_k.min(admitted.len());
    let sel = mrmr_select(&dm, &y_train, k).map_err(|e| e.to_string())?;
    let columns: Vec<usize> = sel.indices.iter().map(|&j| admitted[j]).collect();

    let stats = StandardizationStats::fit(&pooled.rows.select(Axis(0), &train_rows).select(Axis(1), &columns))
        .map_err(|e| e.to_string())?;
    let part = |idx: &[usize]| -> Result<FeatureMatrix, String> {
        let mut fm = pooled.select_rows(idx).select_columns(&columns);
        fm.rows = stats.apply(&fm.rows).map_err(|e| e.to_string())?;
        Ok(fm)
    };
    Ok(PreparedCell {
        train: part(&train_rows)?,
        test: part(&test_rows)?,
        names: sel.names,
        columns,
        stats,
    })
}

fn oversample(x: &Array2<f64>, y: &[u8], settings: &ExperimentSettings, seed: u64) -> Result<(Array2<f64>, Vec<u8>), PrepError> {
    if !settings.smote {
        return Ok((x.clone(), y.to_vec()));
    }
    let cfg = BalanceConfig { seed, ..settings.balance.clone() };
    match balance_dataset(x, y, &cfg) {
        // Too few minority rows to interpolate: train on the data as is.
        Err(PrepError::TooFewMinority { .. }) => Ok((x.clone(), y.to_vec())),
        other => other,
    }
}

fn row_model(
    kind: ModelKind,
    cell: &PreparedCell,
    resource: ResourceKind,
    settings: &ExperimentSettings,
    seed: u64,
) -> Result<(TrainedModel, ParamPoint, Option<f64>), ExperimentError> {
    let x = &cell.train.rows;
    let y = cell.train.labels(resource);
    let spec = settings.spec_for(kind, derive_seed(seed, "search"));
    let (best, cv_auc) = if settings.search_budget > 1 {
        let cv = kfold_split(y.len(), settings.cv_folds, derive_seed(seed, "cv"))?;
        let outcome = random_grid_search(
            &spec,
            &cv,
            |point, idx| -> Result<TrainedModel, ExperimentError> {
                let s = settings.models.configure(kind, point, seed)?;
                let yy: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
                let (xb, yb) = oversample(&x.select(Axis(0), idx), &yy, settings, derive_seed(seed, "smote/fold"))?;
                Ok(fit_row_model(kind, &s, &xb, &yb)?)
            },
            |m, idx| {
                let p = m.predict_rows(&x.select(Axis(0), idx))?;
                let yy: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
                Ok(roc_auc(&p, &yy).ok())
            },
        )?;
        (outcome.best, outcome.cv_auc)
    } else {
        (spec.sample()?.swap_remove(0), None)
    };
    let s = settings.models.configure(kind, &best, seed)?;
    let (xb, yb) = oversample(x, y, settings, derive_seed(seed, "smote"))?;
    let model = fit_row_model(kind, &s, &xb, &yb)?;
    Ok((model, best, cv_auc))
}

/// Windows are built after selection; the trailing share of training
/// windows is the validation set. Sampled configurations compete on
/// validation AUC (ties keep the earliest).
fn sequence_model(
    cell: &PreparedCell,
    resource: ResourceKind,
    settings: &ExperimentSettings,
    seed: u64,
) -> Result<(TrainedModel, ParamPoint, Option<f64>, Vec<f64>, Vec<u8>), ExperimentError> {
    let points = settings.spec_for(ModelKind::BiRnn, derive_seed(seed, "search")).sample()?;
    let window = settings.models.configure(ModelKind::BiRnn, &points[0], seed)?.birnn.window;
    let wt = make_windows(&cell.train, resource, window, 1)?;
    let test = make_windows(&cell.test, resource, window, 1)?;
    if wt.len() < 2 {
        return Err(EvalError::InvalidConfig("need at least two training windows".into()).into());
    }
    let n_val = ((wt.len() as f64 * settings.validation_fraction).round() as usize).clamp(1, wt.len() - 1);
    let cut = wt.len() - n_val;
    let train_w = wt.subset(&(0..cut).collect::<Vec<_>>());
    let val_w = wt.subset(&(cut..wt.len()).collect::<Vec<_>>());
    let mut best: Option<(TrainedModel, ParamPoint, Option<f64>)> = None;
    for point in points {
        let cfg = settings.models.configure(ModelKind::BiRnn, &point, seed)?.birnn;
        let (m, report) = birnn_train(&train_w, &val_w, &cfg)?;
        let val = report.best_epoch.and_then(|e| report.epochs[e - 1].val_auc);
        let better = match &best {
            None => true,
            Some((_, _, b)) => val.unwrap_or(f64::NEG_INFINITY) > b.unwrap_or(f64::NEG_INFINITY),
        };
        if better {
            best = Some((TrainedModel::BiRnn(m), point, val));
        }
    }
    let (model, point, val) = best.expect("budget ≥ 1");
    let TrainedModel::BiRnn(m) = &model else { unreachable!() };
    let probs = birnn_predict_all(m, &test)?;
    Ok((model, point, val, probs, test.labels().to_vec()))
}

fn run_model(
    kind: ModelKind,
    cell: &PreparedCell,
    occupant: &str,
    resource: ResourceKind,
    settings: &ExperimentSettings,
) -> ModelOutcome {
    let seed = derive_seed(settings.seed, &format!("cell/{occupant}/{resource}/{kind}"));
    let fitted = if kind.is_sequence() {
        sequence_model(cell, resource, settings, seed).map(|(m, p, v, probs, y)| (m, p, v, probs, y, settings.models.birnn.window))
    } else {
        row_model(kind, cell, resource, settings, seed).and_then(|(m, p, v)| {
            let probs = m.predict_rows(&cell.test.rows)?;
            Ok((m, p, v, probs, cell.test.labels(resource).to_vec(), 1))
        })
    };
    let fail = |reason: String| ModelOutcome {
        kind,
        auc: None,
        status: CellStatus::NotApplicable(reason),
        params: ParamPoint::new(),
        cv_auc: None,
        pipeline: None,
    };
    match fitted {
        Err(e) => {
            debug!("{occupant}/{resource}/{kind}: {e}");
            fail(e.to_string())
        }
        Ok((model, params, cv_auc, probs, y, window_len)) => match roc_auc(&probs, &y) {
            Err(e) => fail(e.to_string()),
            Ok(auc) => ModelOutcome {
                kind,
                auc: Some(auc),
                status: CellStatus::Ok,
                params,
                cv_auc,
                pipeline: Some(FittedPipeline {
                    kind,
                    resource,
                    columns: cell.columns.clone(),
                    feature_names: cell.names.clone(),
                    stats: cell.stats.clone(),
                    window_len: if model.is_sequence() { window_len } else { 1 },
                    model,
                }),
            },
        },
    }
}

/// Columns of the pooled layout that `scenario` admits.
pub fn admitted_columns(pooled: &FeatureMatrix, scenario: Scenario) -> Result<Vec<usize>, DataError> {
    let kept = scenario_filter(&pooled.select_rows(&[]), scenario)?;
    Ok(kept.descriptors.iter().map(|d| pooled.column_index(&d.name).expect("filtered from pooled")).collect())
}

/// Trains the roster for every occupant × resource cell of an already
/// pooled matrix. Cells run in parallel with seeds derived from their
/// (occupant, resource, model) names; results come back sorted by occupant
/// id, then resource.
pub fn evaluate_cells(
    pooled: &FeatureMatrix,
    split: &DateSplit,
    scenario: Scenario,
    resources: &[ResourceKind],
    roster: &[ModelKind],
    settings: &ExperimentSettings,
) -> Result<Vec<CellResult>, ExperimentError> {
    settings.validate()?;
    let admitted = admitted_columns(pooled, scenario)?;
    let mut occupants = pooled.occupant_ids.clone();
    occupants.sort();
    let mut resources = resources.to_vec();
    resources.sort();
    resources.dedup();
    let jobs: Vec<(String, ResourceKind)> = occupants
        .iter()
        .flat_map(|o| resources.iter().map(move |&r| (o.clone(), r)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|(occupant, resource)| {
            let outcomes = match prepare_cell(pooled, &admitted, occupant, *resource, split, settings) {
                Err(reason) => roster
                    .iter()
                    .map(|&kind| ModelOutcome {
                        kind,
                        auc: None,
                        status: CellStatus::NotApplicable(reason.clone()),
                        params: ParamPoint::new(),
                        cv_auc: None,
                        pipeline: None,
                    })
                    .collect(),
                Ok(cell) => roster.iter().map(|&k| run_model(k, &cell, occupant, *resource, settings)).collect(),
            };
            CellResult {
                occupant: occupant.clone(),
                resource: *resource,
                outcomes,
            }
        })
        .collect())
}

/// Pools features, trains every roster model per occupant × resource on the
/// training dates and scores test-date AUC.
pub fn run_scenario_experiment(
    ds: &Dataset,
    calendar: &Calendar,
    split: &DateSplit,
    scenario: Scenario,
    resources: &[ResourceKind],
    roster: &[ModelKind],
    settings: &ExperimentSettings,
) -> Result<ReportTable, ExperimentError> {
    split.validate(ds)?;
    let pooled = pool_features(ds, calendar)?;
    let cells = evaluate_cells(&pooled, split, scenario, resources, roster, settings)?;
    Ok(report_from_cells(&cells, scenario, roster))
}

pub fn report_from_cells(cells: &[CellResult], scenario: Scenario, roster: &[ModelKind]) -> ReportTable {
    let mut columns: Vec<(ResourceKind, String)> = cells.iter().map(|c| (c.resource, c.occupant.clone())).collect();
    columns.sort();
    let rows = cells
        .iter()
        .flat_map(|c| {
            c.outcomes.iter().map(move |o| ReportCell {
                occupant: c.occupant.clone(),
                resource: c.resource,
                model: o.kind,
                auc: o.auc,
                status: o.status.clone(),
            })
        })
        .collect();
    ReportTable {
        scenario,
        models: roster.to_vec(),
        columns,
        cells: rows,
    }
}
