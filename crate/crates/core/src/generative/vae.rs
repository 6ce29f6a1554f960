use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ChannelKind, ChannelScaling, GenError};
use crate::deep_models::{elu, Adam, EpochRecord, ParamSet, StopReason, TrainReport};
use crate::linalg::{sigmoid, softplus};
use crate::seed::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VAEConfig {
    /// Encoder widths; the decoder mirrors them.
    pub hidden_sizes: [usize; 2],
    pub z_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for VAEConfig {
    fn default() -> Self {
        VAEConfig {
            hidden_sizes: [32, 16],
            z_dim: 8,
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl VAEConfig {
    fn validate(&self) -> Result<(), GenError> {
        if self.hidden_sizes.contains(&0) || self.z_dim == 0 || self.batch_size == 0 {
            return Err(GenError::InvalidConfig("layer sizes, z_dim and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(GenError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Two-hidden-layer Gaussian VAE. The decoder reuses the encoder matrices
/// transposed: `z → w_muᵀ → w2ᵀ → w1ᵀ`, with its own biases. Gaussian
/// channels are modeled in standardized units with a learned per-channel log
/// variance; Bernoulli channels through a sigmoid head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VAEModel {
    pub channels: Vec<ChannelKind>,
    pub scaling: ChannelScaling,
    /// `H1 × D`.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `H2 × H1`.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// `Z × H2`.
    pub w_mu: Array2<f64>,
    pub b_mu: Array1<f64>,
    pub w_lv: Array2<f64>,
    pub b_lv: Array1<f64>,
    pub dec_b2: Array1<f64>,
    pub dec_b1: Array1<f64>,
    pub dec_b0: Array1<f64>,
    pub out_logvar: Array1<f64>,
}

macro_rules! vae_arrays {
    ($m:expr, $as:ident) => {
        vec![
            $m.w1.$as(),
            $m.b1.$as(),
            $m.w2.$as(),
            $m.b2.$as(),
            $m.w_mu.$as(),
            $m.b_mu.$as(),
            $m.w_lv.$as(),
            $m.b_lv.$as(),
            $m.dec_b2.$as(),
            $m.dec_b1.$as(),
            $m.dec_b0.$as(),
            $m.out_logvar.$as(),
        ]
    };
}

impl ParamSet for VAEModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        vae_arrays!(self, as_slice).into_iter().map(|s| s.expect("standard layout")).collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vae_arrays!(self, as_slice_mut).into_iter().map(|s| s.expect("standard layout")).collect()
    }
}

fn he(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    let d = Normal::new(0.0, (2.0 / cols as f64).sqrt()).expect("finite sd");
    Array2::from_shape_simple_fn((rows, cols), || d.sample(rng))
}

fn elu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

impl VAEModel {
    pub fn init(channels: Vec<ChannelKind>, scaling: ChannelScaling, cfg: &VAEConfig, rng: &mut Rng) -> Self {
        let d = channels.len();
        let [h1, h2] = cfg.hidden_sizes;
        let z = cfg.z_dim;
        VAEModel {
            channels,
            scaling,
            w1: he(h1, d, rng),
            b1: Array1::zeros(h1),
            w2: he(h2, h1, rng),
            b2: Array1::zeros(h2),
            w_mu: he(z, h2, rng),
            b_mu: Array1::zeros(z),
            w_lv: he(z, h2, rng) * 0.1,
            b_lv: Array1::zeros(z),
            dec_b2: Array1::zeros(h2),
            dec_b1: Array1::zeros(h1),
            dec_b0: Array1::zeros(d),
            out_logvar: Array1::zeros(d),
        }
    }

    pub fn z_dim(&self) -> usize {
        self.w_mu.nrows()
    }

    /// Decoder matrices in application order; each is the transpose of an
    /// encoder matrix.
    pub fn decoder_weights(&self) -> [Array2<f64>; 3] {
        [self.w_mu.t().to_owned(), self.w2.t().to_owned(), self.w1.t().to_owned()]
    }
}

struct Decoded {
    a2: Array2<f64>,
    g2: Array2<f64>,
    a1: Array2<f64>,
    g1: Array2<f64>,
    out: Array2<f64>,
}

fn decode(m: &VAEModel, z: &Array2<f64>) -> Decoded {
    let a2 = z.dot(&m.w_mu) + &m.dec_b2;
    let g2 = a2.mapv(|v| elu(v, 1.0));
    let a1 = g2.dot(&m.w2) + &m.dec_b1;
    let g1 = a1.mapv(|v| elu(v, 1.0));
    let out = g1.dot(&m.w1) + &m.dec_b0;
    Decoded { a2, g2, a1, g1, out }
}

/// Per-row ELBO parts for standardized data `x` and noise `eps` (`B × Z`):
/// `(reconstruction log-likelihood, KL)` summed over rows, plus the
/// gradient of `−(recon − KL) / B`.
pub(crate) fn elbo_grad(m: &VAEModel, x: ArrayView2<'_, f64>, eps: &Array2<f64>) -> (f64, f64, VAEModel) {
    let b = x.nrows() as f64;
    let p1 = x.dot(&m.w1.t()) + &m.b1;
    let h1 = p1.mapv(|v| elu(v, 1.0));
    let p2 = h1.dot(&m.w2.t()) + &m.b2;
    let h2 = p2.mapv(|v| elu(v, 1.0));
    let mu = h2.dot(&m.w_mu.t()) + &m.b_mu;
    let lv = h2.dot(&m.w_lv.t()) + &m.b_lv;
    let sd = lv.mapv(|v| (0.5 * v).exp());
    let z = &mu + &(&sd * eps);
    let dec = decode(m, &z);

    let mut recon = 0.0;
    let mut dout = Array2::<f64>::zeros(dec.out.raw_dim());
    let mut g = m.zeros_like();
    for ((r, c), &o) in dec.out.indexed_iter() {
        let xv = x[[r, c]];
        match m.channels[c] {
            ChannelKind::Gaussian => {
                let lvc = m.out_logvar[c];
                let inv = (-lvc).exp();
                let diff = xv - o;
                recon += -0.5 * ((2.0 * PI).ln() + lvc + diff * diff * inv);
                dout[[r, c]] = -diff * inv / b;
                g.out_logvar[c] += 0.5 * (1.0 - diff * diff * inv) / b;
            }
            ChannelKind::Bernoulli => {
                recon += xv * o - softplus(o);
                dout[[r, c]] = (sigmoid(o) - xv) / b;
            }
        }
    }
    let kl: f64 = mu
        .iter()
        .zip(lv.iter())
        .map(|(&u, &l)| 0.5 * (l.exp() + u * u - 1.0 - l))
        .sum();

    // Decoder.
    g.dec_b0.assign(&dout.sum_axis(Axis(0)));
    let mut gw1 = dec.g1.t().dot(&dout);
    let da1 = dout.dot(&m.w1.t()) * dec.a1.mapv(elu_grad);
    g.dec_b1.assign(&da1.sum_axis(Axis(0)));
    let mut gw2 = dec.g2.t().dot(&da1);
    let da2 = da1.dot(&m.w2.t()) * dec.a2.mapv(elu_grad);
    g.dec_b2.assign(&da2.sum_axis(Axis(0)));
    let mut gw_mu = z.t().dot(&da2);
    let dz = da2.dot(&m.w_mu.t());

    // Reparameterization and KL.
    let dmu = &dz + &(&mu / b);
    let dlv = &dz * eps * &sd * 0.5 + &(lv.mapv(|l| l.exp() - 1.0) * (0.5 / b));

    // Encoder.
    gw_mu += &dmu.t().dot(&h2);
    g.b_mu.assign(&dmu.sum_axis(Axis(0)));
    let gw_lv = dlv.t().dot(&h2);
    g.b_lv.assign(&dlv.sum_axis(Axis(0)));
    let dh2 = dmu.dot(&m.w_mu) + dlv.dot(&m.w_lv);
    let da_h2 = dh2 * p2.mapv(elu_grad);
    gw2 += &da_h2.t().dot(&h1);
    g.b2.assign(&da_h2.sum_axis(Axis(0)));
    let da_h1 = da_h2.dot(&m.w2) * p1.mapv(elu_grad);
    gw1 += &da_h1.t().dot(&x);
    g.b1.assign(&da_h1.sum_axis(Axis(0)));

    g.w1.assign(&gw1);
    g.w2.assign(&gw2);
    g.w_mu.assign(&gw_mu);
    g.w_lv.assign(&gw_lv);
    (recon, kl, g)
}

/// Closed-form `KL(N(μ, diag e^{lv}) ‖ N(0, I))`.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter().zip(logvar).map(|(&u, &l)| 0.5 * (l.exp() + u * u - 1.0 - l)).sum()
}

/// Maximizes the ELBO with reparameterized gradients and Adam. The reported
/// training loss is the negative mean ELBO per row.
pub fn vae_train(x: &Array2<f64>, cfg: &VAEConfig) -> Result<(VAEModel, TrainReport), GenError> {
    cfg.validate()?;
    let needed = cfg.z_dim * 10;
    if x.nrows() < needed {
        return Err(GenError::TooFewRows { needed, found: x.nrows() });
    }
    let channels = ChannelKind::detect(x.view());
    let scaling = ChannelScaling::fit(x.view(), &channels);
    let xs = scaling.forward(x.view());
    let mut model = VAEModel::init(channels, scaling, cfg, &mut rng_from_seed(derive_seed(cfg.seed, "vae/init")));
    let mut opt = Adam::new(model.n_params());
    let mut shuffle = rng_from_seed(derive_seed(cfg.seed, "vae/shuffle"));
    let mut noise = rng_from_seed(derive_seed(cfg.seed, "vae/noise"));
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select(Axis(0), chunk);
            let eps = Array2::from_shape_simple_fn((chunk.len(), cfg.z_dim), || StandardNormal.sample(&mut noise));
            let (recon, kl, g) = elbo_grad(&model, xb.view(), &eps);
            if !(recon - kl).is_finite() {
                return Err(GenError::Diverged(epoch));
            }
            total += kl - recon;
            opt.step(&mut model, &g, cfg.learning_rate);
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / x.nrows() as f64,
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

/// Draws `n` rows: `z` from the prior, decoded; Gaussian channels add the
/// learned observation noise, Bernoulli channels report their probability.
pub fn vae_generate(m: &VAEModel, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    let z = Array2::from_shape_simple_fn((n, m.z_dim()), || StandardNormal.sample(&mut rng));
    let dec = decode(m, &z);
    let mut out = dec.out;
    for ((_, c), v) in out.indexed_iter_mut() {
        *v = match m.channels[c] {
            ChannelKind::Gaussian => {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v + (0.5 * m.out_logvar[c]).exp() * e
            }
            ChannelKind::Bernoulli => sigmoid(*v),
        };
    }
    m.scaling.inverse(out.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep_models::numeric_gradient_check;
    use crate::generative::ElboBatch;
    use rand::Rng as _;

    fn toy(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        let z = Normal::new(0.0, 1.0).unwrap();
        // Mean (1, −2), covariance [[1, 0.6], [0.6, 1]].
        let mut x = Array2::zeros((n, 2));
        for mut row in x.rows_mut() {
            let (u, v) = (z.sample(&mut rng), z.sample(&mut rng));
            row[0] = 1.0 + u;
            row[1] = -2.0 + 0.6 * u + 0.8 * v;
        }
        x
    }

    fn moments(x: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
        let mean = x.mean_axis(Axis(0)).unwrap();
        let c = x - &mean;
        (mean, c.t().dot(&c) / x.nrows() as f64)
    }

    #[test]
    fn kl_of_prior_is_zero_and_positive_otherwise() {
        assert_eq!(gaussian_kl(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lv: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!(gaussian_kl(&mu, &lv) >= 0.0);
        }
    }

    #[test]
    fn gaussian_toy_moments_are_matched() {
        let x = toy(10_000, 2);
        let cfg = VAEConfig { hidden_sizes: [16, 8], z_dim: 2, epochs: 40, learning_rate: 3e-3, seed: 3, ..Default::default() };
        let (m, report) = vae_train(&x, &cfg).unwrap();
        let first = report.epochs[0].train_loss;
        let last = report.epochs.last().unwrap().train_loss;
        assert!(last < first);
        let s = vae_generate(&m, 10_000, 4);
        let (mx, cx) = moments(&x);
        let (ms, cs) = moments(&s);
        let mean_err = (&mx - &ms).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        let cov_err = (&cx - &cs).mapv(|v| v * v).sum().sqrt();
        assert!(mean_err < 0.1, "{mean_err}");
        assert!(cov_err < 0.2, "{cov_err} {cs:?}");
    }

    #[test]
    fn elbo_gradient_with_frozen_noise() {
        let mut rng = rng_from_seed(5);
        let mut x = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-1.5..1.5));
        for r in 0..6 {
            x[[r, 2]] = f64::from(u8::from(r % 2 == 0));
        }
        let channels = ChannelKind::detect(x.view());
        assert_eq!(channels[2], ChannelKind::Bernoulli);
        let scaling = ChannelScaling::identity(3);
        let cfg = VAEConfig { hidden_sizes: [5, 4], z_dim: 2, ..Default::default() };
        let mut m = VAEModel::init(channels, scaling, &cfg, &mut rng);
        for s in m.param_slices_mut() {
            s.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        }
        let eps = Array2::from_shape_simple_fn((6, 2), || StandardNormal.sample(&mut rng));
        let err = numeric_gradient_check(&m, &ElboBatch { x, eps }, 9);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn generation_is_seeded_and_bounded() {
        let mut x = toy(200, 6);
        x.column_mut(1).mapv_inplace(|v| f64::from(u8::from(v > -2.0)));
        let cfg = VAEConfig { hidden_sizes: [8, 4], z_dim: 2, epochs: 2, ..Default::default() };
        let (m, _) = vae_train(&x, &cfg).unwrap();
        assert_eq!(vae_generate(&m, 50, 1), vae_generate(&m, 50, 1));
        assert_eq!(vae_generate(&m, 0, 1).nrows(), 0);
        let s = vae_generate(&m, 50, 2);
        assert!(s.iter().all(|v| v.is_finite()));
        assert!(s.column(1).iter().all(|&p| (0.0..=1.0).contains(&p)));
        let [d0, d1, d2] = m.decoder_weights();
        assert_eq!(d0, m.w_mu.t());
        assert_eq!(d1, m.w2.t());
        assert_eq!(d2, m.w1.t());
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let x = toy(15, 1);
        assert_eq!(vae_train(&x, &VAEConfig { z_dim: 2, ..Default::default() }).unwrap_err(), GenError::TooFewRows { needed: 20, found: 15 });
    }
}
