use std::f64::consts::PI;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ChannelKind, ChannelScaling, GenError};
use crate::data::WindowedTensor;
use crate::deep_models::lstm::{backward_step, forward_step, StepCache};
use crate::deep_models::{
    clip_global_norm, Adam, Differentiable, EpochRecord, InputTransform, LSTMCellParams, ParamSet, StopReason,
    TrainReport,
};
use crate::linalg::{sigmoid, softplus};
use crate::seed::{derive_seed, rng_from_seed, Rng};

const CELL: InputTransform = InputTransform::TanhStandard;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RVAEConfig {
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub z_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for RVAEConfig {
    fn default() -> Self {
        RVAEConfig {
            enc_hidden: 32,
            dec_hidden: 32,
            z_dim: 8,
            learning_rate: 3e-3,
            epochs: 20,
            batch_size: 32,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// Sequence VAE over windows. An LSTM encoder reads the window and its final
/// state parameterizes `q(z | window)`; an LSTM decoder emits the window one
/// step at a time from `[z, x_{t−1}]` (teacher-forced in training, fed its
/// own output in generation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentVAEModel {
    pub channels: Vec<ChannelKind>,
    pub scaling: ChannelScaling,
    pub window_len: usize,
    /// Zero until trained; generation refuses untrained models.
    pub epochs_trained: usize,
    pub enc: LSTMCellParams,
    pub w_mu: Array2<f64>,
    pub b_mu: Array1<f64>,
    pub w_lv: Array2<f64>,
    pub b_lv: Array1<f64>,
    pub dec: LSTMCellParams,
    /// `D × H_dec`.
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub out_logvar: Array1<f64>,
}

impl ParamSet for RecurrentVAEModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.enc.param_slices();
        for a in [&self.w_mu, &self.w_lv] {
            v.push(a.as_slice().expect("standard layout"));
        }
        for a in [&self.b_mu, &self.b_lv] {
            v.push(a.as_slice().expect("standard layout"));
        }
        v.extend(self.dec.param_slices());
        v.push(self.w_out.as_slice().expect("standard layout"));
        v.push(self.b_out.as_slice().expect("standard layout"));
        v.push(self.out_logvar.as_slice().expect("standard layout"));
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.enc.param_slices_mut();
        v.push(self.w_mu.as_slice_mut().expect("standard layout"));
        v.push(self.w_lv.as_slice_mut().expect("standard layout"));
        v.push(self.b_mu.as_slice_mut().expect("standard layout"));
        v.push(self.b_lv.as_slice_mut().expect("standard layout"));
        v.extend(self.dec.param_slices_mut());
        v.push(self.w_out.as_slice_mut().expect("standard layout"));
        v.push(self.b_out.as_slice_mut().expect("standard layout"));
        v.push(self.out_logvar.as_slice_mut().expect("standard layout"));
        v
    }
}

fn he(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Array2<f64> {
    let d = Normal::new(0.0, scale * (2.0 / cols as f64).sqrt()).expect("finite sd");
    Array2::from_shape_simple_fn((rows, cols), || d.sample(rng))
}

impl RecurrentVAEModel {
    pub fn init(channels: Vec<ChannelKind>, scaling: ChannelScaling, window_len: usize, cfg: &RVAEConfig, rng: &mut Rng) -> Self {
        let d = channels.len();
        let (he_, hd, z) = (cfg.enc_hidden, cfg.dec_hidden, cfg.z_dim);
        RecurrentVAEModel {
            channels,
            scaling,
            window_len,
            epochs_trained: 0,
            enc: LSTMCellParams::he_init(d, he_, rng),
            w_mu: he(z, he_, 1.0, rng),
            b_mu: Array1::zeros(z),
            w_lv: he(z, he_, 0.1, rng),
            b_lv: Array1::zeros(z),
            dec: LSTMCellParams::he_init(z + d, hd, rng),
            w_out: he(d, hd, 1.0, rng),
            b_out: Array1::zeros(d),
            out_logvar: Array1::zeros(d),
        }
    }

    pub fn z_dim(&self) -> usize {
        self.w_mu.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }
}

fn run_cell(p: &LSTMCellParams, inputs: &[Array2<f64>]) -> Vec<StepCache> {
    let b = inputs[0].nrows();
    let h = p.hidden_size();
    let (mut hs, mut cs) = (Array2::zeros((b, h)), Array2::zeros((b, h)));
    let mut out = Vec::with_capacity(inputs.len());
    for x in inputs {
        let c = forward_step(p, x.view(), hs.view(), cs.view(), CELL);
        hs = c.h.clone();
        cs = c.c.clone();
        out.push(c);
    }
    out
}

/// Time-major standardized windows (`xs[t]` is `B × D`) and frozen noise
/// `eps` (`B × Z`). Returns summed reconstruction log-likelihood, summed KL
/// and the gradient of `(KL − recon) / B`.
pub(crate) fn window_elbo_grad(m: &RecurrentVAEModel, xs: &[Array2<f64>], eps: &Array2<f64>) -> (f64, f64, RecurrentVAEModel) {
    let bsz = xs[0].nrows();
    let b = bsz as f64;
    let d = m.n_channels();
    let zd = m.z_dim();
    let enc = run_cell(&m.enc, xs);
    let h_n = &enc.last().expect("non-empty window").h;
    let mu = h_n.dot(&m.w_mu.t()) + &m.b_mu;
    let lv = h_n.dot(&m.w_lv.t()) + &m.b_lv;
    let sd = lv.mapv(|v| (0.5 * v).exp());
    let z = &mu + &(&sd * eps);

    let zero = Array2::zeros((bsz, d));
    let inputs: Vec<Array2<f64>> = (0..xs.len())
        .map(|t| {
            let prev = if t == 0 { &zero } else { &xs[t - 1] };
            concatenate(Axis(1), &[z.view(), prev.view()]).expect("matching batch")
        })
        .collect();
    let dec = run_cell(&m.dec, &inputs);

    let mut g = m.zeros_like();
    let mut recon = 0.0;
    let mut dh_out: Vec<Array2<f64>> = Vec::with_capacity(xs.len());
    for (t, step) in dec.iter().enumerate() {
        let o = step.h.dot(&m.w_out.t()) + &m.b_out;
        let mut dout = Array2::<f64>::zeros(o.raw_dim());
        for ((r, c), &ov) in o.indexed_iter() {
            let xv = xs[t][[r, c]];
            match m.channels[c] {
                ChannelKind::Gaussian => {
                    let lvc = m.out_logvar[c];
                    let inv = (-lvc).exp();
                    let diff = xv - ov;
                    recon += -0.5 * ((2.0 * PI).ln() + lvc + diff * diff * inv);
                    dout[[r, c]] = -diff * inv / b;
                    g.out_logvar[c] += 0.5 * (1.0 - diff * diff * inv) / b;
                }
                ChannelKind::Bernoulli => {
                    recon += xv * ov - softplus(ov);
                    dout[[r, c]] = (sigmoid(ov) - xv) / b;
                }
            }
        }
        g.w_out += &dout.t().dot(&step.h);
        g.b_out += &dout.sum_axis(Axis(0));
        dh_out.push(dout.dot(&m.w_out));
    }
    let kl: f64 = mu.iter().zip(lv.iter()).map(|(&u, &l)| 0.5 * (l.exp() + u * u - 1.0 - l)).sum();

    let hd = m.dec.hidden_size();
    let mut dz = Array2::<f64>::zeros((bsz, zd));
    let (mut dh_next, mut dc_next) = (Array2::zeros((bsz, hd)), Array2::zeros((bsz, hd)));
    for t in (0..dec.len()).rev() {
        let dh = &dh_out[t] + &dh_next;
        let (dx, dhp, dcp) = backward_step(&m.dec, &dec[t], &dh, &dc_next, CELL, &mut g.dec);
        dz += &dx.slice(s![.., ..zd]);
        dh_next = dhp;
        dc_next = dcp;
    }

    let dmu = &dz + &(&mu / b);
    let dlv = &dz * eps * &sd * 0.5 + &(lv.mapv(|l| l.exp() - 1.0) * (0.5 / b));
    g.w_mu.assign(&dmu.t().dot(h_n));
    g.b_mu.assign(&dmu.sum_axis(Axis(0)));
    g.w_lv.assign(&dlv.t().dot(h_n));
    g.b_lv.assign(&dlv.sum_axis(Axis(0)));
    let mut dh_next = dmu.dot(&m.w_mu) + dlv.dot(&m.w_lv);
    let mut dc_next = Array2::zeros(dh_next.raw_dim());
    for t in (0..enc.len()).rev() {
        let (_, dhp, dcp) = backward_step(&m.enc, &enc[t], &dh_next, &dc_next, CELL, &mut g.enc);
        dh_next = dhp;
        dc_next = dcp;
    }
    (recon, kl, g)
}

fn gather(wt: &WindowedTensor, idx: &[usize], scaling: &ChannelScaling) -> Vec<Array2<f64>> {
    let n = wt.window_len;
    (0..n)
        .map(|t| {
            let mut a = Array2::zeros((idx.len(), wt.n_features()));
            for (r, &i) in idx.iter().enumerate() {
                a.row_mut(r).assign(&wt.window(i).row(t));
            }
            scaling.forward(a.view())
        })
        .collect()
}

/// Standardized windows with frozen noise, for gradient checks.
pub struct WindowElboBatch {
    pub xs: Vec<Array2<f64>>,
    pub eps: Array2<f64>,
}

impl Differentiable for RecurrentVAEModel {
    type Batch = WindowElboBatch;
    fn loss_grad(&self, b: &WindowElboBatch) -> (f64, Self) {
        let (recon, kl, g) = window_elbo_grad(self, &b.xs, &b.eps);
        ((kl - recon) / b.eps.nrows() as f64, g)
    }
}

/// Maximizes the window ELBO with Adam and global-norm clipping. Channel
/// families and scaling are fitted on the rows the windows cover.
pub fn rvae_train(wt: &WindowedTensor, cfg: &RVAEConfig) -> Result<(RecurrentVAEModel, TrainReport), GenError> {
    if cfg.enc_hidden == 0 || cfg.dec_hidden == 0 || cfg.z_dim == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) || !(cfg.clip_norm > 0.0) {
        return Err(GenError::InvalidConfig("sizes, learning_rate and clip_norm must be positive".into()));
    }
    let needed = cfg.z_dim * 10;
    if wt.len() < needed {
        return Err(GenError::TooFewRows { needed, found: wt.len() });
    }
    let channels = ChannelKind::detect(wt.rows().view());
    let scaling = ChannelScaling::fit(wt.rows().view(), &channels);
    let mut model = RecurrentVAEModel::init(channels, scaling, wt.window_len, cfg, &mut rng_from_seed(derive_seed(cfg.seed, "rvae/init")));
    let mut opt = Adam::new(model.n_params());
    let mut shuffle = rng_from_seed(derive_seed(cfg.seed, "rvae/shuffle"));
    let mut noise = rng_from_seed(derive_seed(cfg.seed, "rvae/noise"));
    let mut order: Vec<usize> = (0..wt.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xs = gather(wt, chunk, &model.scaling);
            let eps = Array2::from_shape_simple_fn((chunk.len(), cfg.z_dim), || StandardNormal.sample(&mut noise));
            let (recon, kl, mut g) = window_elbo_grad(&model, &xs, &eps);
            if !(recon - kl).is_finite() {
                return Err(GenError::Diverged(epoch));
            }
            total += kl - recon;
            clip_global_norm(&mut g, cfg.clip_norm);
            opt.step(&mut model, &g, cfg.learning_rate);
        }
        model.epochs_trained = epoch;
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / wt.len() as f64,
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

/// A `length × D` series in data units: independent prior draws each decode
/// one window autoregressively, windows are concatenated and the last one is
/// truncated. Gaussian channels include the learned observation noise;
/// Bernoulli channels report probabilities.
pub fn rvae_generate(m: &RecurrentVAEModel, length: usize, seed: u64) -> Result<Array2<f64>, GenError> {
    if m.epochs_trained == 0 {
        return Err(GenError::UntrainedModel);
    }
    let d = m.n_channels();
    let zd = m.z_dim();
    let hd = m.dec.hidden_size();
    let mut rng = rng_from_seed(seed);
    let mut out = Array2::zeros((length, d));
    let mut t_out = 0;
    while t_out < length {
        let z = Array2::from_shape_simple_fn((1, zd), || StandardNormal.sample(&mut rng));
        let mut prev = Array2::<f64>::zeros((1, d));
        let (mut h, mut c) = (Array2::zeros((1, hd)), Array2::zeros((1, hd)));
        for _ in 0..m.window_len.min(length - t_out) {
            let input = concatenate(Axis(1), &[z.view(), prev.view()]).expect("matching batch");
            let step = forward_step(&m.dec, input.view(), h.view(), c.view(), CELL);
            let o = step.h.dot(&m.w_out.t()) + &m.b_out;
            for j in 0..d {
                prev[[0, j]] = match m.channels[j] {
                    ChannelKind::Gaussian => {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        o[[0, j]] + (0.5 * m.out_logvar[j]).exp() * e
                    }
                    ChannelKind::Bernoulli => sigmoid(o[[0, j]]),
                };
            }
            out.row_mut(t_out).assign(&prev.row(0));
            h = step.h;
            c = step.c;
            t_out += 1;
        }
    }
    Ok(m.scaling.inverse(out.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep_models::numeric_gradient_check;
    use rand::Rng as _;

    fn square_wave(n: usize, window: usize) -> WindowedTensor {
        let rows = Array2::from_shape_fn((n, 1), |(t, _)| f64::from(u8::from(t % 8 < 4)));
        let ends: Vec<usize> = (window - 1..n).collect();
        let labels = vec![0; ends.len()];
        WindowedTensor::from_parts(rows, ends, labels, window, 1)
    }

    fn autocorr(x: &[f64], lag: usize) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        let cov: f64 = x.windows(lag + 1).map(|w| (w[0] - m) * (w[lag] - m)).sum();
        cov / var
    }

    #[test]
    fn square_wave_period_survives_generation() {
        let wt = square_wave(1200, 32);
        let cfg = RVAEConfig { enc_hidden: 12, dec_hidden: 12, z_dim: 2, epochs: 8, learning_rate: 1e-2, seed: 1, ..Default::default() };
        let (m, _) = rvae_train(&wt, &cfg).unwrap();
        let s = rvae_generate(&m, 640, 2).unwrap();
        let r = autocorr(&s.column(0).to_vec(), 8);
        assert!(r > 0.5, "{r}");
    }

    #[test]
    fn untrained_short_and_seeded_generation() {
        let wt = square_wave(200, 16);
        let cfg = RVAEConfig { enc_hidden: 4, dec_hidden: 4, z_dim: 2, epochs: 1, ..Default::default() };
        let fresh = RecurrentVAEModel::init(vec![ChannelKind::Bernoulli], ChannelScaling::identity(1), 16, &cfg, &mut rng_from_seed(0));
        assert_eq!(rvae_generate(&fresh, 5, 0), Err(GenError::UntrainedModel));
        let (m, _) = rvae_train(&wt, &cfg).unwrap();
        assert_eq!(rvae_generate(&m, 5, 3).unwrap().nrows(), 5);
        assert_eq!(rvae_generate(&m, 40, 3).unwrap(), rvae_generate(&m, 40, 3).unwrap());
    }

    #[test]
    fn window_elbo_gradient() {
        let mut rng = rng_from_seed(7);
        let cfg = RVAEConfig { enc_hidden: 3, dec_hidden: 4, z_dim: 2, ..Default::default() };
        let channels = vec![ChannelKind::Gaussian, ChannelKind::Bernoulli];
        let mut m = RecurrentVAEModel::init(channels, ChannelScaling::identity(2), 4, &cfg, &mut rng);
        for s in m.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.7 * *v + rng.random_range(-0.2..0.2));
        }
        let xs: Vec<Array2<f64>> = (0..4)
            .map(|_| Array2::from_shape_fn((3, 2), |(_, j)| if j == 0 { rng.random_range(-1.0..1.0) } else { f64::from(u8::from(rng.random::<bool>())) }))
            .collect();
        let eps = Array2::from_shape_simple_fn((3, 2), || StandardNormal.sample(&mut rng));
        let err = numeric_gradient_check(&m, &WindowElboBatch { xs, eps }, 11);
        assert!(err < 1e-5, "{err}");
    }
}
