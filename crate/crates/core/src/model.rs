//! Fitted classifiers behind one type, and their versioned JSON document.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench_models::{BenchError, DecisionTree, EnsembleModel, KnnModel, LinearModel};
use crate::deep_models::{birnn_predict, mlp_forward, BiRNNModel, DeepError, ForwardMode, MLPModel, ParamSet};

pub const MODEL_DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Deep(#[from] DeepError),
    #[error("sequence model needs a window, not a single row")]
    NeedsWindow,
    #[error("row model cannot score a window")]
    NotSequence,
    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),
    #[error("shape manifest does not match parameters: {0}")]
    ShapeManifest(String),
    #[error("model document: {0}")]
    Format(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Any fitted classifier. Each maps features to the probability of choice 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", content = "parameters", rename_all = "snake_case")]
pub enum TrainedModel {
    Linear(LinearModel),
    Ensemble(EnsembleModel),
    Neighbor(KnnModel),
    Tree(DecisionTree),
    Mlp(MLPModel),
    BiRnn(BiRNNModel),
}

impl TrainedModel {
    pub fn type_name(&self) -> &'static str {
        match self {
            TrainedModel::Linear(_) => "linear",
            TrainedModel::Ensemble(_) => "ensemble",
            TrainedModel::Neighbor(_) => "neighbor",
            TrainedModel::Tree(_) => "tree",
            TrainedModel::Mlp(_) => "mlp",
            TrainedModel::BiRnn(_) => "bi_rnn",
        }
    }

    pub fn is_sequence(&self) -> bool {
        matches!(self, TrainedModel::BiRnn(_))
    }

    /// Probability of choice 1 for one feature row.
    pub fn predict_row(&self, x: ArrayView1<'_, f64>) -> Result<f64, ModelError> {
        Ok(match self {
            TrainedModel::Linear(m) => m.predict_proba(x)?,
            TrainedModel::Ensemble(m) => m.predict_proba(x)?,
            TrainedModel::Neighbor(m) => m.predict_proba(x)?,
            TrainedModel::Tree(t) => f64::from(t.predict_class(x)?),
            TrainedModel::Mlp(m) => mlp_forward(m, x.insert_axis(ndarray::Axis(0)), ForwardMode::Infer, 0)?[0],
            TrainedModel::BiRnn(_) => return Err(ModelError::NeedsWindow),
        })
    }

    /// Row probabilities, computed in parallel; order follows the rows.
    pub fn predict_rows(&self, x: &Array2<f64>) -> Result<Vec<f64>, ModelError> {
        match self {
            TrainedModel::Mlp(m) => Ok(mlp_forward(m, x.view(), ForwardMode::Infer, 0)?),
            TrainedModel::BiRnn(_) => Err(ModelError::NeedsWindow),
            _ => (0..x.nrows()).into_par_iter().map(|i| self.predict_row(x.row(i))).collect(),
        }
    }

    /// Probability of choice 1 at the last step of an `N × d` window.
    pub fn predict_window(&self, w: ArrayView2<'_, f64>) -> Result<f64, ModelError> {
        match self {
            TrainedModel::BiRnn(m) => Ok(birnn_predict(m, w)?),
            _ => Err(ModelError::NotSequence),
        }
    }

    /// Parameter shapes of the deep models, keyed by a dotted path.
    pub fn shape_manifest(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out = BTreeMap::new();
        match self {
            TrainedModel::Mlp(m) => {
                for (i, l) in m.layers.iter().enumerate() {
                    out.insert(format!("layers.{i}.w"), l.w.shape().to_vec());
                    out.insert(format!("layers.{i}.b"), l.b.shape().to_vec());
                }
                out.insert("out_w".into(), m.out_w.shape().to_vec());
            }
            TrainedModel::BiRnn(m) => {
                for (i, l) in m.layers.iter().enumerate() {
                    out.insert(format!("layers.{i}.forward.w_xi"), l.forward.w_xi.shape().to_vec());
                    out.insert(format!("layers.{i}.backward.w_xi"), l.backward.w_xi.shape().to_vec());
                    out.insert(format!("layers.{i}.forward.w_hi"), l.forward.w_hi.shape().to_vec());
                }
                out.insert("dense_w".into(), m.dense_w.shape().to_vec());
            }
            _ => {}
        }
        out
    }

    fn n_params(&self) -> Option<usize> {
        match self {
            TrainedModel::Mlp(m) => Some(m.n_params()),
            TrainedModel::BiRnn(m) => Some(m.n_params()),
            _ => None,
        }
    }
}

/// On-disk form: `{version, feature_names, model_type, parameters, shapes}`.
/// Reals round-trip bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub feature_names: Vec<String>,
    #[serde(flatten)]
    pub model: TrainedModel,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub shapes: BTreeMap<String, Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_params: Option<usize>,
}

impl ModelDocument {
    pub fn new(model: TrainedModel, feature_names: Vec<String>) -> Self {
        ModelDocument {
            version: MODEL_DOCUMENT_VERSION,
            feature_names,
            shapes: model.shape_manifest(),
            n_params: model.n_params(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.version != MODEL_DOCUMENT_VERSION {
            return Err(ModelError::UnsupportedVersion(doc.version));
        }
        let shapes = doc.model.shape_manifest();
        if !doc.shapes.is_empty() && doc.shapes != shapes {
            return Err(ModelError::ShapeManifest("layer shapes differ".into()));
        }
        if doc.n_params.is_some() && doc.n_params != doc.model.n_params() {
            return Err(ModelError::ShapeManifest("parameter count differs".into()));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
