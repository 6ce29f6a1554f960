//! Generative trace models (a tied-weight VAE and a recurrent sequence VAE)
//! and DTW-based validation of generated series.

mod dtw;
mod rvae;
mod vae;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deep_models::Differentiable;

pub use dtw::{dtw_distance, permutation_test_dtw, DtwResult, PermTestResult, DEFAULT_SEGMENT_LEN};
pub use rvae::{rvae_generate, rvae_train, RVAEConfig, RecurrentVAEModel, WindowElboBatch};
pub use vae::{gaussian_kl, vae_generate, vae_train, VAEConfig, VAEModel};

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("need at least {needed} rows, got {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("series is empty")]
    EmptySeries,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Likelihood family of one data column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Gaussian,
    /// Columns whose values are all 0 or 1.
    Bernoulli,
}

impl ChannelKind {
    pub fn detect(x: ArrayView2<'_, f64>) -> Vec<ChannelKind> {
        x.columns()
            .into_iter()
            .map(|c| {
                if c.iter().all(|&v| v == 0.0 || v == 1.0) {
                    ChannelKind::Bernoulli
                } else {
                    ChannelKind::Gaussian
                }
            })
            .collect()
    }
}

/// Per-column affine map to model units. Bernoulli columns pass through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScaling {
    pub mean: Array1<f64>,
    /// Positive.
    pub sd: Array1<f64>,
}

impl ChannelScaling {
    pub fn identity(d: usize) -> Self {
        ChannelScaling {
            mean: Array1::zeros(d),
            sd: Array1::ones(d),
        }
    }

    pub fn fit(x: ArrayView2<'_, f64>, channels: &[ChannelKind]) -> Self {
        let mut s = Self::identity(channels.len());
        for (j, kind) in channels.iter().enumerate() {
            if *kind == ChannelKind::Gaussian && x.nrows() > 0 {
                let col = x.column(j);
                let m = col.mean().unwrap_or(0.0);
                let var = col.mapv(|v| (v - m) * (v - m)).mean().unwrap_or(0.0);
                s.mean[j] = m;
                s.sd[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
            }
        }
        s
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.sd
    }

    pub fn inverse(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        &x * &self.sd + &self.mean
    }
}

/// A standardized batch with frozen reparameterization noise.
pub struct ElboBatch {
    pub x: Array2<f64>,
    /// `B × Z` standard normal draws.
    pub eps: Array2<f64>,
}

impl Differentiable for VAEModel {
    type Batch = ElboBatch;
    /// Negative mean ELBO.
    fn loss_grad(&self, b: &ElboBatch) -> (f64, Self) {
        let (recon, kl, g) = vae::elbo_grad(self, b.x.view(), &b.eps);
        ((kl - recon) / b.x.len_of(Axis(0)) as f64, g)
    }
}
