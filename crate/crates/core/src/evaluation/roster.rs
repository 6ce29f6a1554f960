use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{EvalError, ParamPoint};
use crate::bench_models::{
    train_bagged_logistic, train_lda, train_linear_svm, train_logistic, train_random_forest, BaggingConfig, KnnModel,
    ForestConfig, LogisticConfig, NeighborIndex, Penalty, SvmConfig,
};
use crate::deep_models::{mlp_train, BiRNNConfig, MLPConfig};
use crate::model::{ModelError, TrainedModel};

/// Classifiers a scenario experiment can train, in report row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    L1Logistic,
    BaggedLogistic,
    Lda,
    Knn,
    Svm,
    RandomForest,
    Mlp,
    BiRnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 9] = [
        ModelKind::Logistic,
        ModelKind::L1Logistic,
        ModelKind::BaggedLogistic,
        ModelKind::Lda,
        ModelKind::Knn,
        ModelKind::Svm,
        ModelKind::RandomForest,
        ModelKind::Mlp,
        ModelKind::BiRnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::L1Logistic => "l1_logistic",
            ModelKind::BaggedLogistic => "bagged_logistic",
            ModelKind::Lda => "lda",
            ModelKind::Knn => "knn",
            ModelKind::Svm => "svm",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Mlp => "mlp",
            ModelKind::BiRnn => "bi_rnn",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "Logistic regression",
            ModelKind::L1Logistic => "Penalized l1 Logistic regression",
            ModelKind::BaggedLogistic => "Bagged Logistic regression",
            ModelKind::Lda => "LDA",
            ModelKind::Knn => "K-NN",
            ModelKind::Svm => "Support Vector Machine",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::Mlp => "Deep Neural Network",
            ModelKind::BiRnn => "Deep Bi-directional RNN",
        }
    }

    /// Sequence models consume windows and skip SMOTE.
    pub fn is_sequence(self) -> bool {
        self == ModelKind::BiRnn
    }

    /// Hyperparameter names accepted in search domains.
    pub fn hyperparameters(self) -> &'static [&'static str] {
        match self {
            ModelKind::Logistic | ModelKind::L1Logistic => &["lambda"],
            ModelKind::BaggedLogistic => &["n_members", "lambda"],
            ModelKind::Lda => &[],
            ModelKind::Knn => &["k"],
            ModelKind::Svm => &["c", "lambda"],
            ModelKind::RandomForest => &["n_trees", "max_depth", "min_leaf", "feat_subset_size"],
            ModelKind::Mlp => &["learning_rate", "dropout_p", "momentum", "epochs", "batch_size"],
            ModelKind::BiRnn => &["lr0", "decay", "dropout_p", "hidden_size"],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| EvalError::InvalidConfig(format!("unknown model `{s}`")))
    }
}

/// Base hyperparameters of every roster model. Search draws override
/// individual fields; seeds are replaced per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub logistic: LogisticConfig,
    pub l1_lambda: f64,
    pub bagging: BaggingConfig,
    pub knn_k: usize,
    pub svm: SvmConfig,
    pub forest: ForestConfig,
    pub mlp: MLPConfig,
    pub birnn: BiRNNConfig,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            logistic: LogisticConfig::default(),
            l1_lambda: 1e-3,
            bagging: BaggingConfig::default(),
            knn_k: 15,
            svm: SvmConfig::default(),
            forest: ForestConfig::default(),
            mlp: MLPConfig::default(),
            birnn: BiRNNConfig::default(),
        }
    }
}

fn count(name: &str, v: f64) -> Result<usize, EvalError> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(EvalError::InvalidConfig(format!("`{name}` must be a non-negative integer, got {v}")))
    }
}

impl ModelSettings {
    /// Copy with `point` applied to `kind`'s fields and every seed set to
    /// `seed`.
    pub fn configure(&self, kind: ModelKind, point: &ParamPoint, seed: u64) -> Result<ModelSettings, EvalError> {
        let mut s = self.clone();
        s.bagging.seed = seed;
        s.forest.seed = seed;
        s.mlp.seed = seed;
        s.birnn.seed = seed;
        for (key, &v) in point {
            match (kind, key.as_str()) {
                (ModelKind::Logistic, "lambda") => s.logistic.penalty = Penalty::L2(v),
                (ModelKind::L1Logistic, "lambda") => s.l1_lambda = v,
                (ModelKind::BaggedLogistic, "n_members") => s.bagging.n_members = count(key, v)?,
                (ModelKind::BaggedLogistic, "lambda") => s.bagging.member.penalty = Penalty::L2(v),
                (ModelKind::Knn, "k") => s.knn_k = count(key, v)?,
                (ModelKind::Svm, "c") => s.svm.c = v,
                (ModelKind::Svm, "lambda") => s.svm.penalty = Penalty::L2(v),
                (ModelKind::RandomForest, "n_trees") => s.forest.n_trees = count(key, v)?,
                (ModelKind::RandomForest, "max_depth") => s.forest.max_depth = count(key, v)?,
                (ModelKind::RandomForest, "min_leaf") => s.forest.min_leaf = count(key, v)?,
                (ModelKind::RandomForest, "feat_subset_size") => s.forest.feat_subset_size = Some(count(key, v)?),
                (ModelKind::Mlp, "learning_rate") => s.mlp.learning_rate = v,
                (ModelKind::Mlp, "dropout_p") => s.mlp.dropout_p = v,
                (ModelKind::Mlp, "momentum") => s.mlp.momentum = v,
                (ModelKind::Mlp, "epochs") => s.mlp.epochs = count(key, v)?,
                (ModelKind::Mlp, "batch_size") => s.mlp.batch_size = count(key, v)?,
                (ModelKind::BiRnn, "lr0") => s.birnn.lr0 = v,
                (ModelKind::BiRnn, "decay") => s.birnn.decay = v,
                (ModelKind::BiRnn, "dropout_p") => s.birnn.dropout_p = v,
                (ModelKind::BiRnn, "hidden_size") => s.birnn.hidden_size = count(key, v)?,
                _ => {
                    return Err(EvalError::InvalidConfig(format!("`{key}` is not a hyperparameter of {kind}")));
                }
            }
        }
        Ok(s)
    }
}

/// Fits one row model. Labels must hold both classes.
pub fn fit_row_model(kind: ModelKind, s: &ModelSettings, x: &Array2<f64>, y: &[u8]) -> Result<TrainedModel, ModelError> {
    Ok(match kind {
        ModelKind::Logistic => TrainedModel::Linear(train_logistic(x, y, &s.logistic)?),
        ModelKind::L1Logistic => {
            let cfg = LogisticConfig { penalty: Penalty::L1(s.l1_lambda), ..s.logistic.clone() };
            TrainedModel::Linear(train_logistic(x, y, &cfg)?)
        }
        ModelKind::BaggedLogistic => TrainedModel::Ensemble(train_bagged_logistic(x, y, &s.bagging)?),
        ModelKind::Lda => TrainedModel::Linear(train_lda(x, y)?),
        ModelKind::Knn => {
            let index = NeighborIndex::new(x.clone(), y.to_vec())?;
            TrainedModel::Neighbor(KnnModel { index, k: s.knn_k.min(y.len()).max(1) })
        }
        ModelKind::Svm => TrainedModel::Linear(train_linear_svm(x, y, &s.svm)?),
        ModelKind::RandomForest => TrainedModel::Ensemble(train_random_forest(x, y, &s.forest)?),
        ModelKind::Mlp => TrainedModel::Mlp(mlp_train(x, y, &s.mlp)?.0),
        ModelKind::BiRnn => return Err(ModelError::NeedsWindow),
    })
}
