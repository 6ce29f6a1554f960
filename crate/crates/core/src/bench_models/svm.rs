use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{check_training, BenchError, Link, LinearModel, Penalty};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub c: f64,
    pub penalty: Penalty,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            penalty: Penalty::L2(1.0),
            max_iter: 10_000,
        }
    }
}

/// `C · mean hinge + penalty`, with labels mapped to ±1.
pub fn svm_objective(w: &[f64], bias: f64, x: &Array2<f64>, y: &[u8], c: f64, penalty: Penalty) -> f64 {
    let z = x.dot(&Array1::from(w.to_vec())) + bias;
    let hinge: f64 = z
        .iter()
        .zip(y)
        .map(|(&zi, &yi)| (1.0 - sign(yi) * zi).max(0.0))
        .sum::<f64>()
        / x.nrows() as f64;
    c * hinge + penalty.value(w)
}

fn sign(y: u8) -> f64 {
    if y == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Linear SVM by deterministic full-batch subgradient descent. Steps are
/// `1/(λt)` under an L2 penalty and `1/√t` otherwise; the best iterate seen
/// is returned.
pub fn train_linear_svm(x: &Array2<f64>, y: &[u8], cfg: &SvmConfig) -> Result<LinearModel, BenchError> {
    check_training(x, y)?;
    cfg.penalty.validate()?;
    if !(cfg.c >= 0.0) {
        return Err(BenchError::InvalidConfig("C must be ≥ 0".into()));
    }
    let (n, d) = x.dim();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (svm_objective(&w, b, x, y, cfg.c, cfg.penalty), w.clone(), b);
    let signs: Vec<f64> = y.iter().map(|&v| sign(v)).collect();
    for t in 1..=cfg.max_iter {
        let z = x.dot(&Array1::from(w.clone())) + b;
        let mut coef = Array1::<f64>::zeros(n);
        for i in 0..n {
            if signs[i] * z[i] < 1.0 {
                coef[i] = -signs[i] * cfg.c / n as f64;
            }
        }
        let mut gw = x.t().dot(&coef).to_vec();
        let gb = coef.sum();
        match cfg.penalty {
            Penalty::None => {}
            Penalty::L1(l) => {
                for (g, wi) in gw.iter_mut().zip(&w) {
                    *g += l * if *wi > 0.0 { 1.0 } else if *wi < 0.0 { -1.0 } else { 0.0 };
                }
            }
            Penalty::L2(l) => {
                for (g, wi) in gw.iter_mut().zip(&w) {
                    *g += l * wi;
                }
            }
        }
        let eta = match cfg.penalty {
            Penalty::L2(l) if l > 0.0 => 1.0 / (l * t as f64),
            _ => 1.0 / (t as f64).sqrt(),
        };
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= eta * g;
        }
        b -= eta * gb;
        let obj = svm_objective(&w, b, x, y, cfg.c, cfg.penalty);
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
    }
    Ok(LinearModel {
        weights: best.1,
        bias: best.2,
        link: Link::SvmMargin,
        penalty: cfg.penalty,
        iterations: cfg.max_iter,
        converged: false,
    })
}
