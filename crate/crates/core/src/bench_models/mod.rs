//! Benchmark random-utility classifiers: logistic regression (plain, L1,
//! bagged), linear discriminant analysis, k-nearest neighbors, linear SVM and
//! random forests.
//!
//! Every model maps a feature vector to the probability of the "on" choice.
//! With i.i.d. Gumbel noise on the utilities of a two-choice set, that
//! probability is the logistic function of the utility difference; the
//! general multi-choice form is [`choice_probabilities`].

mod forest;
mod knn;
mod lda;
mod logistic;
mod svm;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, sigmoid, softmax};

pub use forest::{train_random_forest, train_tree, DecisionTree, ForestConfig, TreeNode};
pub use knn::{knn_predict, KnnModel, NeighborIndex};
pub use lda::{train_lda, LDA_RIDGE};
pub use logistic::{
    logistic_objective, train_bagged_logistic, train_logistic, BaggingConfig, LogisticConfig,
};
pub use svm::{svm_objective, train_linear_svm, SvmConfig};

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("covariance is singular even after ridge regularization")]
    DegenerateCovariance,
    #[error("k = {k} exceeds the {available} stored points")]
    KTooLarge { k: usize, available: usize },
    #[error("training data is empty")]
    EmptyData,
    #[error("rows and labels differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Distribution of the unobserved utility component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseModel {
    #[default]
    Gumbel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logit,
    LdaGaussian,
    SvmMargin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "lambda", rename_all = "snake_case")]
pub enum Penalty {
    None,
    L1(f64),
    L2(f64),
}

impl Penalty {
    pub fn value(&self, w: &[f64]) -> f64 {
        match *self {
            Penalty::None => 0.0,
            Penalty::L1(l) => l * w.iter().map(|v| v.abs()).sum::<f64>(),
            Penalty::L2(l) => 0.5 * l * w.iter().map(|v| v * v).sum::<f64>(),
        }
    }

    fn lambda(&self) -> f64 {
        match *self {
            Penalty::None => 0.0,
            Penalty::L1(l) | Penalty::L2(l) => l,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), BenchError> {
        let l = self.lambda();
        if !(l >= 0.0 && l.is_finite()) {
            return Err(BenchError::InvalidConfig(format!("penalty weight must be ≥ 0, got {l}")));
        }
        Ok(())
    }
}

/// Linear utility `βᵀx + bias` with a link to a probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub link: Link,
    pub penalty: Penalty,
    /// Optimizer iterations used; zero for closed-form fits.
    pub iterations: usize,
    pub converged: bool,
}

impl LinearModel {
    pub fn zeros(d: usize, link: Link) -> Self {
        LinearModel {
            weights: vec![0.0; d],
            bias: 0.0,
            link,
            penalty: Penalty::None,
            iterations: 0,
            converged: true,
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: ArrayView1<'_, f64>) -> Result<f64, BenchError> {
        check_dim(self.weights.len(), x.len())?;
        Ok(x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias)
    }

    /// Probability of choice 1. The SVM margin is squashed through the same
    /// sigmoid: monotone, so rankings and AUC are unaffected, but uncalibrated.
    pub fn predict_proba(&self, x: ArrayView1<'_, f64>) -> Result<f64, BenchError> {
        Ok(sigmoid(self.score(x)?))
    }
}

/// Multinomial logit: probability of each choice given its utility.
pub fn choice_probabilities(utilities: &[f64]) -> Vec<f64> {
    softmax(utilities)
}

/// Logistic probability from a weight vector and bias.
pub fn predict_proba(m: &LinearModel, x: &[f64]) -> Result<f64, BenchError> {
    check_dim(m.weights.len(), x.len())?;
    Ok(sigmoid(dot(&m.weights, x) + m.bias))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Member {
    Linear(LinearModel),
    Tree(DecisionTree),
}

impl Member {
    /// Hard vote; a probability of exactly one half votes 0.
    fn vote(&self, x: ArrayView1<'_, f64>) -> Result<u8, BenchError> {
        match self {
            Member::Linear(m) => Ok(u8::from(m.predict_proba(x)? > 0.5)),
            Member::Tree(t) => t.predict_class(x),
        }
    }
}

/// Majority-vote ensemble; probability = fraction of members voting 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub members: Vec<Member>,
}

impl EnsembleModel {
    pub fn predict_proba(&self, x: ArrayView1<'_, f64>) -> Result<f64, BenchError> {
        let mut votes = 0usize;
        for m in &self.members {
            votes += usize::from(m.vote(x)?);
        }
        Ok(votes as f64 / self.members.len() as f64)
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<(), BenchError> {
    if expected != found {
        return Err(BenchError::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn check_training(x: &Array2<f64>, y: &[u8]) -> Result<(), BenchError> {
    if x.nrows() != y.len() {
        return Err(BenchError::LengthMismatch(x.nrows(), y.len()));
    }
    if y.is_empty() {
        return Err(BenchError::EmptyData);
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(BenchError::SingleClass);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn logit_reference_points() {
        let m = LinearModel::zeros(2, Link::Logit);
        assert_eq!(m.predict_proba(array![3.0, -1.0].view()).unwrap(), 0.5);
        let mut m = LinearModel::zeros(1, Link::Logit);
        m.weights[0] = 1.0;
        let p = m.predict_proba(array![3f64.ln()].view()).unwrap();
        assert!((p - 0.75).abs() < 1e-15);
        let p = m.predict_proba(array![-(3f64.ln())].view()).unwrap();
        assert!((p - 0.25).abs() < 1e-15);
        assert_eq!(
            m.predict_proba(array![1.0, 2.0].view()),
            Err(BenchError::DimensionMismatch { expected: 1, found: 2 })
        );
    }

    #[test]
    fn two_choice_softmax_is_the_logit() {
        let u = 0.75;
        let p = choice_probabilities(&[u, 0.0]);
        assert!((p[0] - sigmoid(u)).abs() < 1e-15);
        let shifted = choice_probabilities(&[u + 64.0, 64.0]);
        assert_eq!(p, shifted);
    }
}
