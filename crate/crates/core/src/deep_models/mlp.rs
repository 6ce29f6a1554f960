use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_two_classes, DeepError, EpochRecord, Nesterov, ParamSet, StopReason, TrainReport};
use crate::linalg::{sigmoid, softplus};
use crate::seed::{derive_seed, rng_from_seed, Rng};

pub const BN_EPS: f64 = 1e-5;
/// Weight of the newest batch in the running normalization statistics.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MLPConfig {
    pub hidden_sizes: Vec<usize>,
    pub elu_alpha: f64,
    pub dropout_p: f64,
    pub batch_norm: bool,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MLPConfig {
    fn default() -> Self {
        MLPConfig {
            hidden_sizes: vec![64, 32],
            elu_alpha: 1.0,
            dropout_p: 0.5,
            batch_norm: true,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 50,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl MLPConfig {
    pub fn validate(&self) -> Result<(), DeepError> {
        let bad = |m: &str| Err(DeepError::InvalidConfig(m.into()));
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad("hidden_sizes must be non-empty and positive");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("learning_rate must be ≥ 0 and momentum in [0, 1)");
        }
        if self.batch_size == 0 || !(self.elu_alpha > 0.0) {
            return bad("batch_size and elu_alpha must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMode {
    Train,
    Infer,
}

/// Hidden layer: affine map (`w` is `out × in`), optional batch
/// normalization, ELU, dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    /// Always positive.
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPModel {
    pub n_features: usize,
    pub layers: Vec<DenseLayer>,
    /// Single sigmoid output unit.
    pub out_w: Array1<f64>,
    /// Length 1.
    pub out_b: Array1<f64>,
    pub batch_norm: bool,
    pub elu_alpha: f64,
    pub dropout_p: f64,
}

impl ParamSet for MLPModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            for a in [l.w.as_slice(), l.b.as_slice(), l.gamma.as_slice(), l.beta.as_slice()] {
                v.push(a.expect("standard layout"));
            }
        }
        v.push(self.out_w.as_slice().expect("standard layout"));
        v.push(self.out_b.as_slice().expect("standard layout"));
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            v.push(l.w.as_slice_mut().expect("standard layout"));
            v.push(l.b.as_slice_mut().expect("standard layout"));
            v.push(l.gamma.as_slice_mut().expect("standard layout"));
            v.push(l.beta.as_slice_mut().expect("standard layout"));
        }
        v.push(self.out_w.as_slice_mut().expect("standard layout"));
        v.push(self.out_b.as_slice_mut().expect("standard layout"));
        v
    }
}

impl MLPModel {
    /// He-normal weights (variance 2/fan_in), zero biases, identity
    /// normalization.
    pub fn he_init(n_features: usize, cfg: &MLPConfig, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(cfg.hidden_sizes.len());
        let mut fan_in = n_features;
        for &h in &cfg.hidden_sizes {
            let dist = Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt()).expect("finite sd");
            layers.push(DenseLayer {
                w: Array2::from_shape_simple_fn((h, fan_in), || dist.sample(rng)),
                b: Array1::zeros(h),
                gamma: Array1::ones(h),
                beta: Array1::zeros(h),
                running_mean: Array1::zeros(h),
                running_var: Array1::ones(h),
            });
            fan_in = h;
        }
        let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite sd");
        MLPModel {
            n_features,
            layers,
            out_w: Array1::from_shape_simple_fn(fan_in, || dist.sample(rng)),
            out_b: Array1::zeros(1),
            batch_norm: cfg.batch_norm,
            elu_alpha: cfg.elu_alpha,
            dropout_p: cfg.dropout_p,
        }
    }
}

pub fn elu(z: f64, alpha: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        alpha * z.exp_m1()
    }
}

fn elu_grad(z: f64, alpha: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        alpha * z.exp()
    }
}

struct BatchNormOut {
    out: Array2<f64>,
    xhat: Array2<f64>,
    mean: Array1<f64>,
    var: Array1<f64>,
    inv_std: Array1<f64>,
}

fn bn_batch(a: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> BatchNormOut {
    let mean = a.mean_axis(Axis(0)).expect("non-empty batch");
    let centered = a - &mean;
    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let xhat = centered * &inv_std;
    let out = &xhat * gamma + beta;
    BatchNormOut { out, xhat, mean, var, inv_std }
}

/// Train-mode batch normalization of the rows of `a` with scale `gamma` and
/// shift `beta`.
pub fn batch_norm_train(a: ArrayView2<'_, f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> Result<Array2<f64>, DeepError> {
    if a.nrows() < 2 {
        return Err(DeepError::BatchTooSmall(a.nrows()));
    }
    if gamma.len() != a.ncols() || beta.len() != a.ncols() {
        return Err(DeepError::ShapeMismatch("normalization parameters do not match the columns".into()));
    }
    Ok(bn_batch(&a.to_owned(), gamma, beta).out)
}

struct LayerCache {
    input: Array2<f64>,
    a: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    z: Array2<f64>,
    mask: Option<Array2<f64>>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

struct Forward {
    layers: Vec<LayerCache>,
    last: Array2<f64>,
    logits: Array1<f64>,
}

fn forward(m: &MLPModel, x: ArrayView2<'_, f64>, mode: ForwardMode, rng: &mut Rng) -> Result<Forward, DeepError> {
    if x.ncols() != m.n_features {
        return Err(DeepError::ShapeMismatch(format!("expected {} features, got {}", m.n_features, x.ncols())));
    }
    let train = mode == ForwardMode::Train;
    if train && m.batch_norm && x.nrows() < 2 {
        return Err(DeepError::BatchTooSmall(x.nrows()));
    }
    let mut h = x.to_owned();
    let mut caches = Vec::with_capacity(m.layers.len());
    for l in &m.layers {
        let a = h.dot(&l.w.t()) + &l.b;
        let (z, xhat, inv_std, batch_mean, batch_var) = if !m.batch_norm {
            (a.clone(), Array2::zeros((0, 0)), Array1::zeros(0), Array1::zeros(0), Array1::zeros(0))
        } else if train {
            let bn = bn_batch(&a, &l.gamma, &l.beta);
            (bn.out, bn.xhat, bn.inv_std, bn.mean, bn.var)
        } else {
            let inv_std = l.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let xhat = (&a - &l.running_mean) * &inv_std;
            (&xhat * &l.gamma + &l.beta, xhat, inv_std, Array1::zeros(0), Array1::zeros(0))
        };
        let mut e = z.mapv(|v| elu(v, m.elu_alpha));
        let mask = (train && m.dropout_p > 0.0).then(|| {
            let keep = 1.0 - m.dropout_p;
            Array2::from_shape_simple_fn(e.raw_dim(), || if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        });
        if let Some(mk) = &mask {
            e *= mk;
        }
        caches.push(LayerCache { input: h, a, xhat, inv_std, z, mask, batch_mean, batch_var });
        h = e;
    }
    let logits = h.dot(&m.out_w) + m.out_b[0];
    Ok(Forward { layers: caches, last: h, logits })
}

/// Mean cross-entropy of the batch and its gradient, shaped like the model.
fn backward(m: &MLPModel, fw: &Forward, y: &[u8], mode: ForwardMode) -> (f64, MLPModel) {
    let n = y.len() as f64;
    let loss = fw
        .logits
        .iter()
        .zip(y)
        .map(|(&z, &t)| softplus(z) - f64::from(t) * z)
        .sum::<f64>()
        / n;
    let dz: Array1<f64> = fw.logits.iter().zip(y).map(|(&z, &t)| (sigmoid(z) - f64::from(t)) / n).collect();
    let mut g = m.zeros_like();
    g.out_w.assign(&fw.last.t().dot(&dz));
    g.out_b[0] = dz.sum();
    let mut dh = dz.insert_axis(Axis(1)).dot(&m.out_w.view().insert_axis(Axis(0)));
    for (k, (l, c)) in m.layers.iter().zip(&fw.layers).enumerate().rev() {
        if let Some(mk) = &c.mask {
            dh *= mk;
        }
        let alpha = m.elu_alpha;
        let dzl = &dh * &c.z.mapv(|v| elu_grad(v, alpha));
        let da = if !m.batch_norm {
            dzl
        } else {
            let gl = &mut g.layers[k];
            gl.gamma.assign(&(&dzl * &c.xhat).sum_axis(Axis(0)));
            gl.beta.assign(&dzl.sum_axis(Axis(0)));
            let dxhat = &dzl * &l.gamma;
            if mode == ForwardMode::Train {
                let rows = dxhat.nrows() as f64;
                let s1 = dxhat.sum_axis(Axis(0));
                let s2 = (&dxhat * &c.xhat).sum_axis(Axis(0));
                ((&dxhat * rows - &s1) - &c.xhat * &s2) * &c.inv_std / rows
            } else {
                dxhat * &c.inv_std
            }
        };
        let gl = &mut g.layers[k];
        gl.w.assign(&da.t().dot(&c.input));
        gl.b.assign(&da.sum_axis(Axis(0)));
        if k > 0 {
            dh = da.dot(&l.w);
        }
    }
    (loss, g)
}

/// Class-1 probabilities for the rows of `x`. Train mode normalizes with
/// batch statistics and draws dropout masks from `mask_seed`; infer mode uses
/// running statistics and no dropout.
pub fn mlp_forward(m: &MLPModel, x: ArrayView2<'_, f64>, mode: ForwardMode, mask_seed: u64) -> Result<Vec<f64>, DeepError> {
    let mut rng = rng_from_seed(mask_seed);
    let fw = forward(m, x, mode, &mut rng)?;
    Ok(fw.logits.iter().map(|&z| sigmoid(z)).collect())
}

/// Loss and gradient for a fixed mode and mask seed; used by the gradient
/// checker.
pub(crate) fn mlp_loss_grad(m: &MLPModel, x: ArrayView2<'_, f64>, y: &[u8], mode: ForwardMode, mask_seed: u64) -> (f64, MLPModel) {
    let mut rng = rng_from_seed(mask_seed);
    let fw = forward(m, x, mode, &mut rng).expect("valid gradient-check batch");
    backward(m, &fw, y, mode)
}

fn update_running_stats(m: &mut MLPModel, fw: &Forward) {
    for (l, c) in m.layers.iter_mut().zip(&fw.layers) {
        let n = c.a.nrows() as f64;
        let unbiased = &c.batch_var * (n / (n - 1.0));
        l.running_mean = &l.running_mean * (1.0 - BN_MOMENTUM) + &c.batch_mean * BN_MOMENTUM;
        l.running_var = &l.running_var * (1.0 - BN_MOMENTUM) + unbiased * BN_MOMENTUM;
        l.running_var.mapv_inplace(|v| v.max(BN_EPS));
    }
}

/// Mini-batch SGD with Nesterov momentum on the mean cross-entropy. Rows are
/// reshuffled each epoch; under batch normalization a trailing batch of one
/// row is skipped.
pub fn mlp_train(x: &Array2<f64>, y: &[u8], cfg: &MLPConfig) -> Result<(MLPModel, TrainReport), DeepError> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(DeepError::ShapeMismatch(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    check_two_classes(y)?;
    let mut model = MLPModel::he_init(x.ncols(), cfg, &mut rng_from_seed(derive_seed(cfg.seed, "mlp/init")));
    if cfg.learning_rate == 0.0 {
        return Ok((
            model,
            TrainReport {
                epochs: Vec::new(),
                stop_reason: StopReason::NoOp,
                best_epoch: None,
            },
        ));
    }
    let mut shuffle_rng = rng_from_seed(derive_seed(cfg.seed, "mlp/shuffle"));
    let mut dropout_rng = rng_from_seed(derive_seed(cfg.seed, "mlp/dropout"));
    let mut opt = Nesterov::new(model.n_params(), cfg.momentum);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.batch_norm && chunk.len() < 2 {
                continue;
            }
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<u8> = chunk.iter().map(|&i| y[i]).collect();
            let fw = forward(&model, xb.view(), ForwardMode::Train, &mut dropout_rng)?;
            let (loss, grads) = backward(&model, &fw, &yb, ForwardMode::Train);
            if !loss.is_finite() {
                return Err(DeepError::Diverged(epoch));
            }
            if cfg.batch_norm {
                update_running_stats(&mut model, &fw);
            }
            opt.step(&mut model, &grads, cfg.learning_rate);
            total += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = total / seen.max(1) as f64;
        if !train_loss.is_finite() || model.flat_params().iter().any(|v| !v.is_finite()) {
            return Err(DeepError::Diverged(epoch));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_auc: None,
            learning_rate: cfg.learning_rate,
        });
    }
    Ok((
        model,
        TrainReport {
            epochs,
            stop_reason: StopReason::MaxEpochs,
            best_epoch: None,
        },
    ))
}
