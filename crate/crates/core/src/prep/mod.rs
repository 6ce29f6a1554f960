//! Preprocessing: standardization, mutual information with mRMR selection,
//! and SMOTE class balancing.

mod mrmr;
mod smote;
mod standardize;

use thiserror::Error;

pub use mrmr::{
    discretize, entropy, mrmr_select, mutual_information, DiscretizedMatrix, SelectionResult,
    DEFAULT_BINS, DEFAULT_TOP_K,
};
pub use smote::{balance_dataset, balance_with, smote, AllMinority, BalanceConfig, MinorityGrouping};
pub use standardize::{standardize, StandardizationStats, SD_FLOOR};

#[derive(Debug, Error, PartialEq)]
pub enum PrepError {
    #[error("need at least 2 rows to estimate statistics, got {0}")]
    TooFewRows(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("requested {k} features but only {available} are available")]
    KTooLarge { k: usize, available: usize },
    #[error("minority class has {count} rows, need more than k = {k}")]
    TooFewMinority { count: usize, k: usize },
    #[error("column count mismatch: stats for {expected}, matrix has {found}")]
    ColumnMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
