//! Feed-forward network with batch normalization and dropout, the LSTM cell,
//! and the stacked bidirectional LSTM window classifier.

mod birnn;
mod gradcheck;
pub(crate) mod lstm;
mod mlp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use birnn::{
    birnn_predict, birnn_predict_all, birnn_train, BiRNNConfig, BiRNNModel, BiLayer, EarlyStopper, Verdict,
};
pub use gradcheck::{
    numeric_gradient_check, CellBatch, Differentiable, MlpBatch, WindowBatch, GRADCHECK_FLOOR, GRADCHECK_SAMPLES,
    GRADCHECK_STEP,
};
pub use lstm::{lstm_cell_step, InputTransform, LSTMCellParams, LSTMState};
pub use mlp::{batch_norm_train, elu, mlp_forward, mlp_train, DenseLayer, ForwardMode, MLPConfig, MLPModel};

#[derive(Debug, Error, PartialEq)]
pub enum DeepError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("train-mode batch normalization needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("window length {found} does not match the model's {expected}")]
    WrongWindowLength { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Absent when the validation labels hold a single class.
    pub val_auc: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Learning rate zero: parameters were left at their initial values.
    NoOp,
    MaxEpochs,
    EarlyStopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// Epoch (1-based) whose parameters were returned, when early stopping
    /// tracked one.
    pub best_epoch: Option<usize>,
}

/// Models whose trainable parameters can be viewed as flat slices. Gradient
/// containers reuse the model type, so parameter and gradient slices line up.
pub trait ParamSet: Clone {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn n_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    fn set_flat_params(&mut self, v: &[f64]) {
        let mut at = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&v[at..at + s.len()]);
            at += s.len();
        }
        assert_eq!(at, v.len());
    }

    /// Same shapes, all parameters zero.
    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.param_slices_mut() {
            s.fill(0.0);
        }
        z
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// SGD with Nesterov momentum, in the form `v ← μv + g`, `θ ← θ − lr(g + μv)`.
#[derive(Debug, Clone)]
pub struct Nesterov {
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Nesterov {
    pub fn new(n_params: usize, momentum: f64) -> Self {
        Nesterov {
            momentum,
            velocity: vec![0.0; n_params],
        }
    }

    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P, lr: f64) {
        let mu = self.momentum;
        let mut k = 0;
        for (p, g) in params.param_slices_mut().into_iter().zip(grads.param_slices()) {
            for (pi, gi) in p.iter_mut().zip(g) {
                let v = mu * self.velocity[k] + gi;
                self.velocity[k] = v;
                *pi -= lr * (gi + mu * v);
                k += 1;
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.param_slices_mut().into_iter().zip(grads.param_slices()) {
            for (pi, gi) in p.iter_mut().zip(g) {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gi;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gi * gi;
                *pi -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm<P: ParamSet>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads
        .param_slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for s in grads.param_slices_mut() {
            s.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

pub(crate) fn check_two_classes(y: &[u8]) -> Result<(), DeepError> {
    if y.is_empty() || y.iter().all(|&v| v == y[0]) {
        return Err(DeepError::SingleClass);
    }
    Ok(())
}
