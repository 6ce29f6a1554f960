use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lstm::{backward_step, forward_step, StepCache};
use super::{
    check_two_classes, clip_global_norm, DeepError, EpochRecord, InputTransform, LSTMCellParams, Nesterov, ParamSet,
    StopReason, TrainReport,
};
use crate::data::WindowedTensor;
use crate::evaluation::roc_auc;
use crate::linalg::softmax;
use crate::seed::{derive_seed, rng_from_seed, Rng};

/// Windows per forward/backward pass inside a mini-batch; bounds the memory
/// held for backpropagation through time. Gradients are summed over chunks
/// in order, so the split does not change results.
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiRNNConfig {
    pub n_layers: usize,
    pub hidden_size: usize,
    pub dropout_p: f64,
    pub window: usize,
    /// A multiple of `window`.
    pub batch_size: usize,
    pub lr0: f64,
    /// Epoch `e` (0-based) trains at `lr0 · decay^e`.
    pub decay: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    pub input_transform: InputTransform,
    pub seed: u64,
}

impl Default for BiRNNConfig {
    fn default() -> Self {
        BiRNNConfig {
            n_layers: 3,
            hidden_size: 64,
            dropout_p: 0.6,
            window: 120,
            batch_size: 240,
            lr0: 0.05,
            decay: 0.95,
            momentum: 0.9,
            max_epochs: 35,
            patience: 5,
            clip_norm: 5.0,
            input_transform: InputTransform::SigmoidInput,
            seed: 0,
        }
    }
}

impl BiRNNConfig {
    pub fn validate(&self) -> Result<(), DeepError> {
        let bad = |m: &str| Err(DeepError::InvalidConfig(m.into()));
        if self.n_layers == 0 || self.hidden_size == 0 || self.window == 0 {
            return bad("n_layers, hidden_size and window must be positive");
        }
        if self.batch_size == 0 || self.batch_size % self.window != 0 {
            return bad("batch_size must be a positive multiple of the window length");
        }
        if !(0.0..1.0).contains(&self.dropout_p) || !(0.0..1.0).contains(&self.momentum) {
            return bad("dropout_p and momentum must lie in [0, 1)");
        }
        if !(self.lr0 >= 0.0) || !(self.decay > 0.0) || !(self.clip_norm > 0.0) {
            return bad("lr0 must be ≥ 0; decay and clip_norm positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLayer {
    pub forward: LSTMCellParams,
    pub backward: LSTMCellParams,
}

/// Stacked bidirectional LSTM. Each layer feeds the concatenated forward and
/// backward outputs of every step to the next; the terminal states of the top
/// layer (forward after the last step, backward after the first) feed a
/// two-unit dense layer and a softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiRNNModel {
    pub n_features: usize,
    pub window_len: usize,
    pub hidden_size: usize,
    pub dropout_p: f64,
    pub input_transform: InputTransform,
    pub layers: Vec<BiLayer>,
    /// `2 × 2h`.
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
}

impl ParamSet for BiRNNModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend(l.forward.param_slices());
            v.extend(l.backward.param_slices());
        }
        v.push(self.dense_w.as_slice().expect("standard layout"));
        v.push(self.dense_b.as_slice().expect("standard layout"));
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        for l in &mut self.layers {
            v.extend(l.forward.param_slices_mut());
            v.extend(l.backward.param_slices_mut());
        }
        v.push(self.dense_w.as_slice_mut().expect("standard layout"));
        v.push(self.dense_b.as_slice_mut().expect("standard layout"));
        v
    }
}

impl BiRNNModel {
    pub fn he_init(n_features: usize, cfg: &BiRNNConfig, rng: &mut Rng) -> Self {
        let h = cfg.hidden_size;
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let input = if l == 0 { n_features } else { 2 * h };
                BiLayer {
                    forward: LSTMCellParams::he_init(input, h, rng),
                    backward: LSTMCellParams::he_init(input, h, rng),
                }
            })
            .collect();
        let dist = Normal::new(0.0, (1.0 / h as f64).sqrt()).expect("finite sd");
        BiRNNModel {
            n_features,
            window_len: cfg.window,
            hidden_size: h,
            dropout_p: cfg.dropout_p,
            input_transform: cfg.input_transform,
            layers,
            dense_w: Array2::from_shape_simple_fn((2, 2 * h), || dist.sample(rng)),
            dense_b: Array1::zeros(2),
        }
    }
}

struct LayerPass {
    fwd: Vec<StepCache>,
    /// Indexed by time, not by processing order.
    bwd: Vec<StepCache>,
    masks: Option<Vec<Array2<f64>>>,
}

struct Pass {
    layers: Vec<LayerPass>,
    features: Array2<f64>,
    logits: Array2<f64>,
}

fn run_direction(p: &LSTMCellParams, xs: &[Array2<f64>], reverse: bool, variant: InputTransform) -> Vec<StepCache> {
    let b = xs[0].nrows();
    let h = p.hidden_size();
    let mut hs = Array2::zeros((b, h));
    let mut cs = Array2::zeros((b, h));
    let mut out: Vec<Option<StepCache>> = vec![None; xs.len()];
    let times: Vec<usize> = if reverse { (0..xs.len()).rev().collect() } else { (0..xs.len()).collect() };
    for t in times {
        let c = forward_step(p, xs[t].view(), hs.view(), cs.view(), variant);
        hs = c.h.clone();
        cs = c.c.clone();
        out[t] = Some(c);
    }
    out.into_iter().map(|c| c.expect("every step visited")).collect()
}

/// Forward pass for time-major inputs (`xs[t]` is `B × d`). Dropout masks are
/// drawn only when `rng` is given.
fn forward_pass(m: &BiRNNModel, xs: Vec<Array2<f64>>, mut rng: Option<&mut Rng>) -> Pass {
    let h = m.hidden_size;
    let mut inputs = xs;
    let mut layers = Vec::with_capacity(m.layers.len());
    for l in &m.layers {
        let fwd = run_direction(&l.forward, &inputs, false, m.input_transform);
        let bwd = run_direction(&l.backward, &inputs, true, m.input_transform);
        let mut outs: Vec<Array2<f64>> = fwd
            .iter()
            .zip(&bwd)
            .map(|(f, b)| concatenate(Axis(1), &[f.h.view(), b.h.view()]).expect("matching batch"))
            .collect();
        let masks = match rng.as_deref_mut() {
            Some(r) if m.dropout_p > 0.0 => {
                let keep = 1.0 - m.dropout_p;
                let masks: Vec<Array2<f64>> = outs
                    .iter()
                    .map(|o| Array2::from_shape_simple_fn(o.raw_dim(), || if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 }))
                    .collect();
                for (o, mk) in outs.iter_mut().zip(&masks) {
                    *o *= mk;
                }
                Some(masks)
            }
            _ => None,
        };
        layers.push(LayerPass { fwd, bwd, masks });
        inputs = outs;
    }
    let last = inputs.len() - 1;
    let features = concatenate(Axis(1), &[inputs[last].slice(s![.., ..h]), inputs[0].slice(s![.., h..])]).expect("matching batch");
    let logits = features.dot(&m.dense_w.t()) + &m.dense_b;
    Pass { layers, features, logits }
}

/// Summed cross-entropy of the chunk and the gradient of `scale ×` that sum.
fn backward_pass(m: &BiRNNModel, pass: &Pass, labels: &[u8], scale: f64) -> (f64, BiRNNModel) {
    let h = m.hidden_size;
    let b = labels.len();
    let mut g = m.zeros_like();
    let mut loss = 0.0;
    let mut dlogits = Array2::<f64>::zeros((b, 2));
    for (i, &y) in labels.iter().enumerate() {
        let row = pass.logits.row(i);
        let p = softmax(&[row[0], row[1]]);
        let k = usize::from(y.min(1));
        let max = row[0].max(row[1]);
        let lse = max + ((row[0] - max).exp() + (row[1] - max).exp()).ln();
        loss += lse - row[k];
        for c in 0..2 {
            dlogits[[i, c]] = scale * (p[c] - if c == k { 1.0 } else { 0.0 });
        }
    }
    g.dense_w.assign(&dlogits.t().dot(&pass.features));
    g.dense_b.assign(&dlogits.sum_axis(Axis(0)));
    let dfeat = dlogits.dot(&m.dense_w);

    let n = pass.layers[0].fwd.len();
    let mut d_out: Vec<Array2<f64>> = (0..n).map(|_| Array2::zeros((b, 2 * h))).collect();
    d_out[n - 1].slice_mut(s![.., ..h]).assign(&dfeat.slice(s![.., ..h]));
    d_out[0].slice_mut(s![.., h..]).assign(&dfeat.slice(s![.., h..]));

    for (li, (layer, lp)) in m.layers.iter().zip(&pass.layers).enumerate().rev() {
        if let Some(masks) = &lp.masks {
            for (d, mk) in d_out.iter_mut().zip(masks) {
                *d *= mk;
            }
        }
        let d_in_cols = lp.fwd[0].x.ncols();
        let mut d_in: Vec<Array2<f64>> = (0..n).map(|_| Array2::zeros((b, d_in_cols))).collect();
        let gl = &mut g.layers[li];
        let variant = m.input_transform;

        let mut dh_next = Array2::zeros((b, h));
        let mut dc_next = Array2::zeros((b, h));
        for t in (0..n).rev() {
            let dh = &d_out[t].slice(s![.., ..h]) + &dh_next;
            let (dx, dhp, dcp) = backward_step(&layer.forward, &lp.fwd[t], &dh, &dc_next, variant, &mut gl.forward);
            d_in[t] += &dx;
            dh_next = dhp;
            dc_next = dcp;
        }
        let mut dh_next = Array2::zeros((b, h));
        let mut dc_next = Array2::zeros((b, h));
        for t in 0..n {
            let dh = &d_out[t].slice(s![.., h..]) + &dh_next;
            let (dx, dhp, dcp) = backward_step(&layer.backward, &lp.bwd[t], &dh, &dc_next, variant, &mut gl.backward);
            d_in[t] += &dx;
            dh_next = dhp;
            dc_next = dcp;
        }
        d_out = d_in;
    }
    (loss, g)
}

/// Time-major stack of the selected windows.
fn gather(wt: &WindowedTensor, idx: &[usize]) -> Vec<Array2<f64>> {
    let n = wt.window_len;
    let d = wt.n_features();
    (0..n)
        .map(|t| {
            let mut a = Array2::zeros((idx.len(), d));
            for (r, &i) in idx.iter().enumerate() {
                a.row_mut(r).assign(&wt.window(i).row(t));
            }
            a
        })
        .collect()
}

fn check_tensor(m: &BiRNNModel, wt: &WindowedTensor) -> Result<(), DeepError> {
    if wt.window_len != m.window_len {
        return Err(DeepError::WrongWindowLength {
            expected: m.window_len,
            found: wt.window_len,
        });
    }
    if wt.n_features() != m.n_features {
        return Err(DeepError::ShapeMismatch(format!("expected {} features, got {}", m.n_features, wt.n_features())));
    }
    Ok(())
}

/// Class-1 probability for one `N × d` window.
pub fn birnn_predict(m: &BiRNNModel, window: ArrayView2<'_, f64>) -> Result<f64, DeepError> {
    if window.nrows() != m.window_len {
        return Err(DeepError::WrongWindowLength {
            expected: m.window_len,
            found: window.nrows(),
        });
    }
    if window.ncols() != m.n_features {
        return Err(DeepError::ShapeMismatch(format!("expected {} features, got {}", m.n_features, window.ncols())));
    }
    let xs = window.rows().into_iter().map(|r| r.to_owned().insert_axis(Axis(0))).collect();
    let pass = forward_pass(m, xs, None);
    Ok(softmax(&[pass.logits[[0, 0]], pass.logits[[0, 1]]])[1])
}

/// Class-1 probabilities for every window of `wt`, in order.
pub fn birnn_predict_all(m: &BiRNNModel, wt: &WindowedTensor) -> Result<Vec<f64>, DeepError> {
    check_tensor(m, wt)?;
    let idx: Vec<usize> = (0..wt.len()).collect();
    let parts: Vec<Vec<f64>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let pass = forward_pass(m, gather(wt, chunk), None);
            pass.logits.rows().into_iter().map(|r| softmax(&[r[0], r[1]])[1]).collect()
        })
        .collect();
    Ok(parts.concat())
}

/// Loss and gradient of the mean cross-entropy over the given windows.
/// Dropout masks come from `mask_seed` when `train` is set.
pub(crate) fn birnn_loss_grad(m: &BiRNNModel, wt: &WindowedTensor, idx: &[usize], train: bool, mask_seed: u64) -> (f64, BiRNNModel) {
    let scale = 1.0 / idx.len() as f64;
    let parts: Vec<(f64, BiRNNModel)> = idx
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut rng = rng_from_seed(derive_seed(mask_seed, &format!("chunk/{c}")));
            let pass = forward_pass(m, gather(wt, chunk), train.then_some(&mut rng));
            let labels: Vec<u8> = chunk.iter().map(|&i| wt.label(i)).collect();
            backward_pass(m, &pass, &labels, scale)
        })
        .collect();
    let mut total = 0.0;
    let mut grads = m.zeros_like();
    for (loss, g) in &parts {
        total += loss;
        grads.add_assign(g);
    }
    (total * scale, grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation metric; stops after `patience` consecutive
/// epochs without a strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: Option<usize>,
    since: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: None,
            since: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> Verdict {
        if metric > self.best {
            self.best = metric;
            self.best_epoch = Some(epoch);
            self.since = 0;
            return Verdict::Improved;
        }
        self.since += 1;
        if self.since >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }
}

fn mean_log_loss(p: &[f64], y: &[u8]) -> f64 {
    p.iter()
        .zip(y)
        .map(|(&p, &t)| -(if t == 1 { p } else { 1.0 - p }).max(1e-300).ln())
        .sum::<f64>()
        / y.len() as f64
}

/// Mini-batch SGD with Nesterov momentum over windows in their stored order,
/// learning rate `lr0 · decay^epoch`, global-norm clipping, and early stopping
/// on validation AUC. Returns the best-scoring snapshot. When the validation
/// labels hold a single class the validation log loss stands in for AUC.
pub fn birnn_train(train: &WindowedTensor, validation: &WindowedTensor, cfg: &BiRNNConfig) -> Result<(BiRNNModel, TrainReport), DeepError> {
    cfg.validate()?;
    if validation.is_empty() {
        return Err(DeepError::EmptyValidation);
    }
    check_two_classes(train.labels())?;
    let mut model = BiRNNModel::he_init(train.n_features(), cfg, &mut rng_from_seed(derive_seed(cfg.seed, "birnn/init")));
    check_tensor(&model, train)?;
    check_tensor(&model, validation)?;
    if cfg.lr0 == 0.0 {
        return Ok((
            model,
            TrainReport {
                epochs: Vec::new(),
                stop_reason: StopReason::NoOp,
                best_epoch: None,
            },
        ));
    }
    let mut opt = Nesterov::new(model.n_params(), cfg.momentum);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let order: Vec<usize> = (0..train.len()).collect();
    for e in 0..cfg.max_epochs {
        let epoch = e + 1;
        let lr = cfg.lr0 * cfg.decay.powi(e as i32);
        let (mut total, mut seen) = (0.0, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let seed = derive_seed(cfg.seed, &format!("birnn/dropout/{e}/{b}"));
            let (loss, mut grads) = birnn_loss_grad(&model, train, batch, true, seed);
            if !loss.is_finite() {
                return Err(DeepError::Diverged(epoch));
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            opt.step(&mut model, &grads, lr);
            total += loss * batch.len() as f64;
            seen += batch.len();
        }
        let probs = birnn_predict_all(&model, validation)?;
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(DeepError::Diverged(epoch));
        }
        let val_auc = roc_auc(&probs, validation.labels()).ok();
        let metric = val_auc.unwrap_or_else(|| -mean_log_loss(&probs, validation.labels()));
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / seen as f64,
            val_auc,
            learning_rate: lr,
        });
        match stopper.observe(epoch, metric) {
            Verdict::Improved => best = model.clone(),
            Verdict::Continue => {}
            Verdict::Stop => {
                stop_reason = StopReason::EarlyStopped;
                break;
            }
        }
    }
    Ok((
        best,
        TrainReport {
            epochs,
            stop_reason,
            best_epoch: stopper.best_epoch,
        },
    ))
}
