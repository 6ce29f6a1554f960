use ndarray::Array2;
use rand::seq::index::sample;

use super::birnn::birnn_loss_grad;
use super::lstm::{backward_step, forward_step};
use super::mlp::mlp_loss_grad;
use super::{BiRNNModel, ForwardMode, InputTransform, LSTMCellParams, MLPModel, ParamSet};
use crate::data::WindowedTensor;
use crate::seed::rng_from_seed;

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
pub const GRADCHECK_FLOOR: f64 = 1e-4;
/// Parameters probed when the model has more.
pub const GRADCHECK_SAMPLES: usize = 250;

/// A model whose loss on a fixed batch has an analytic gradient.
pub trait Differentiable: ParamSet {
    type Batch;
    /// Loss and gradient, the gradient shaped like the model.
    fn loss_grad(&self, batch: &Self::Batch) -> (f64, Self);
}

pub struct MlpBatch {
    pub x: Array2<f64>,
    pub y: Vec<u8>,
    pub mode: ForwardMode,
    /// Fixes the dropout masks in train mode.
    pub mask_seed: u64,
}

impl Differentiable for MLPModel {
    type Batch = MlpBatch;
    fn loss_grad(&self, b: &MlpBatch) -> (f64, Self) {
        mlp_loss_grad(self, b.x.view(), &b.y, b.mode, b.mask_seed)
    }
}

/// Windows for a sequence-model check; dropout is off.
pub struct WindowBatch {
    pub windows: WindowedTensor,
}

impl Differentiable for BiRNNModel {
    type Batch = WindowBatch;
    fn loss_grad(&self, b: &WindowBatch) -> (f64, Self) {
        let idx: Vec<usize> = (0..b.windows.len()).collect();
        birnn_loss_grad(self, &b.windows, &idx, false, 0)
    }
}

/// A short input sequence for one cell. The loss is a fixed projection of
/// every hidden state plus the final cell state:
/// `Σ_t ⟨proj_h, h_t⟩ + ⟨proj_c, c_T⟩`.
pub struct CellBatch {
    /// `xs[t]` is `B × d`.
    pub xs: Vec<Array2<f64>>,
    pub h0: Array2<f64>,
    pub c0: Array2<f64>,
    pub proj_h: Array2<f64>,
    pub proj_c: Array2<f64>,
    pub variant: InputTransform,
}

impl Differentiable for LSTMCellParams {
    type Batch = CellBatch;
    fn loss_grad(&self, b: &CellBatch) -> (f64, Self) {
        let mut caches = Vec::with_capacity(b.xs.len());
        let (mut h, mut c) = (b.h0.clone(), b.c0.clone());
        let mut loss = 0.0;
        for x in &b.xs {
            let step = forward_step(self, x.view(), h.view(), c.view(), b.variant);
            loss += (&step.h * &b.proj_h).sum();
            h = step.h.clone();
            c = step.c.clone();
            caches.push(step);
        }
        loss += (&c * &b.proj_c).sum();
        let mut g = self.zeros_like();
        let mut dh_next = Array2::zeros(h.raw_dim());
        let mut dc = b.proj_c.clone();
        for step in caches.iter().rev() {
            let dh = &b.proj_h + &dh_next;
            let (_, dhp, dcp) = backward_step(self, step, &dh, &dc, b.variant, &mut g);
            dh_next = dhp;
            dc = dcp;
        }
        (loss, g)
    }
}

/// Largest relative error `|a − n| / max(|a|, |n|, floor)` between the
/// analytic gradient `a` and the central difference `n` over up to
/// `GRADCHECK_SAMPLES` parameters chosen with `seed`.
pub fn numeric_gradient_check<M: Differentiable>(model: &M, batch: &M::Batch, seed: u64) -> f64 {
    let (_, grad) = model.loss_grad(batch);
    let analytic = grad.flat_params();
    let base = model.flat_params();
    let n = base.len();
    let picks: Vec<usize> = if n <= GRADCHECK_SAMPLES {
        (0..n).collect()
    } else {
        sample(&mut rng_from_seed(seed), n, GRADCHECK_SAMPLES).into_vec()
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for k in picks {
        let mut v = base.clone();
        v[k] = base[k] + GRADCHECK_STEP;
        probe.set_flat_params(&v);
        let up = probe.loss_grad(batch).0;
        v[k] = base[k] - GRADCHECK_STEP;
        probe.set_flat_params(&v);
        let down = probe.loss_grad(batch).0;
        let numeric = (up - down) / (2.0 * GRADCHECK_STEP);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        worst = worst.max(rel);
    }
    worst
}
