//! ROC/AUC, cross-validation, randomized search and the scenario experiment
//! runner.

mod auc;
mod cv;
mod experiment;
mod report;
mod roster;
mod search;

use thiserror::Error;

pub use auc::{roc_auc, roc_curve, ROCCurve};
pub use cv::{kfold_split, CVPlan, DEFAULT_FOLDS};
pub use experiment::{
    admitted_columns, evaluate_cells, report_from_cells, run_scenario_experiment, CellResult, DateRange, DateSplit,
    ExperimentError, ExperimentSettings, FittedPipeline, ModelOutcome,
};
pub use report::{CellStatus, ReportCell, ReportTable, RESULTS_HEADER};
pub use roster::{fit_row_model, ModelKind, ModelSettings};
pub use search::{random_grid_search, Domain, GridSearchSpec, ParamPoint, SearchOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("scores contain NaN")]
    NonFiniteScore,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("{k} folds requested for {n} items")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
