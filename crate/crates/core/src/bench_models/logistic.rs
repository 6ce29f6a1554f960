use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training, BenchError, EnsembleModel, Link, LinearModel, Member, Penalty};
use crate::linalg::{sigmoid, softplus};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticConfig {
    pub penalty: Penalty,
    pub max_iter: usize,
    /// Stop once the (proximal) gradient norm falls to this.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            penalty: Penalty::L2(1e-4),
            max_iter: 10_000,
            tol: 1e-6,
        }
    }
}

/// Smooth part of the objective: mean cross-entropy plus the L2 term when
/// present. Returns `(value, ∂/∂w, ∂/∂bias)`.
pub fn logistic_objective(
    w: &[f64],
    bias: f64,
    x: &Array2<f64>,
    y: &[u8],
    penalty: Penalty,
) -> (f64, Vec<f64>, f64) {
    let n = x.nrows() as f64;
    let wv = Array1::from(w.to_vec());
    let z = x.dot(&wv) + bias;
    let mut loss = 0.0;
    let mut resid = Array1::zeros(z.len());
    for (i, &zi) in z.iter().enumerate() {
        let yi = f64::from(y[i]);
        loss += softplus(zi) - yi * zi;
        resid[i] = sigmoid(zi) - yi;
    }
    let mut grad = (x.t().dot(&resid) / n).to_vec();
    let gb = resid.sum() / n;
    loss /= n;
    if let Penalty::L2(l) = penalty {
        loss += Penalty::L2(l).value(w);
        for (g, wi) in grad.iter_mut().zip(w) {
            *g += l * wi;
        }
    }
    (loss, grad, gb)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Full-batch accelerated proximal gradient with backtracking. L1 enters
/// through soft-thresholding of the weights; the bias is never penalized.
pub fn train_logistic(x: &Array2<f64>, y: &[u8], cfg: &LogisticConfig) -> Result<LinearModel, BenchError> {
    check_training(x, y)?;
    cfg.penalty.validate()?;
    let d = x.ncols();
    let l1 = match cfg.penalty {
        Penalty::L1(l) => l,
        _ => 0.0,
    };
    let full = |w: &[f64], b: f64| logistic_objective(w, b, x, y, cfg.penalty).0 + l1 * w.iter().map(|v| v.abs()).sum::<f64>();

    // Parameters are (w, b) packed as one vector with b last. Steps are
    // scaled by a diagonal curvature bound so the bias and heavily
    // penalized weights converge at comparable rates.
    let l2 = match cfg.penalty {
        Penalty::L2(l) => l,
        _ => 0.0,
    };
    let n = x.nrows() as f64;
    let mut diag: Vec<f64> = x
        .axis_iter(Axis(1))
        .map(|c| (0.25 * c.iter().map(|v| v * v).sum::<f64>() / n + l2).max(1e-8))
        .collect();
    diag.push(0.25);

    let mut cur = vec![0.0; d + 1];
    let mut look = cur.clone();
    let mut momentum = 1.0f64;
    let mut lipschitz = 1.0f64;
    let mut f_cur = full(&cur[..d], cur[d]);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let (f_look, gw, gb) = logistic_objective(&look[..d], look[d], x, y, cfg.penalty);
        let mut grad = gw;
        grad.push(gb);
        let mut cand: Vec<f64>;
        loop {
            cand = (0..=d).map(|j| look[j] - grad[j] / (lipschitz * diag[j])).collect();
            if l1 > 0.0 {
                for j in 0..d {
                    cand[j] = soft_threshold(cand[j], l1 / (lipschitz * diag[j]));
                }
            }
            let f_cand = logistic_objective(&cand[..d], cand[d], x, y, cfg.penalty).0;
            let mut lin = 0.0;
            let mut quad = 0.0;
            for j in 0..=d {
                let s = cand[j] - look[j];
                lin += grad[j] * s;
                quad += diag[j] * s * s;
            }
            if f_cand <= f_look + lin + 0.5 * lipschitz * quad + 1e-15 * f_look.abs() || lipschitz > 1e12 {
                break;
            }
            lipschitz *= 2.0;
        }
        // Norm of the (proximal) gradient mapping.
        let step_norm: f64 = (0..=d)
            .map(|j| {
                let g = lipschitz * diag[j] * (look[j] - cand[j]);
                g * g
            })
            .sum::<f64>()
            .sqrt();
        let f_cand = full(&cand[..d], cand[d]);
        if f_cand > f_cur {
            // Objective went up: drop momentum and retry from the last iterate.
            momentum = 1.0;
            look = cur.clone();
            if step_norm <= cfg.tol {
                converged = true;
                break;
            }
            continue;
        }
        let next_m = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_m;
        look = cand
            .iter()
            .zip(&cur)
            .map(|(c, p)| c + beta * (c - p))
            .collect();
        momentum = next_m;
        cur = cand;
        f_cur = f_cand;
        lipschitz = (lipschitz * 0.9).max(1e-8);
        if step_norm <= cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(LinearModel {
        weights: cur[..d].to_vec(),
        bias: cur[d],
        link: Link::Logit,
        penalty: cfg.penalty,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaggingConfig {
    pub n_members: usize,
    pub member: LogisticConfig,
    pub seed: u64,
}

impl Default for BaggingConfig {
    fn default() -> Self {
        BaggingConfig {
            n_members: 10,
            member: LogisticConfig::default(),
            seed: 0,
        }
    }
}

pub(crate) fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Logistic fits on bootstrap replicates combined by vote. A replicate that
/// happens to contain one class only is redrawn with the next sub-seed.
pub fn train_bagged_logistic(
    x: &Array2<f64>,
    y: &[u8],
    cfg: &BaggingConfig,
) -> Result<EnsembleModel, BenchError> {
    check_training(x, y)?;
    if cfg.n_members == 0 {
        return Err(BenchError::InvalidConfig("n_members must be at least 1".into()));
    }
    let members = (0..cfg.n_members)
        .into_par_iter()
        .map(|i| {
            let mut attempt = 0u32;
            loop {
                let idx = bootstrap_indices(x.nrows(), derive_seed(cfg.seed, &format!("bag/{i}/{attempt}")));
                let by: Vec<u8> = idx.iter().map(|&j| y[j]).collect();
                match train_logistic(&x.select(Axis(0), &idx), &by, &cfg.member) {
                    Err(BenchError::SingleClass) if attempt < 100 => attempt += 1,
                    other => return other.map(Member::Linear),
                }
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EnsembleModel { members })
}
