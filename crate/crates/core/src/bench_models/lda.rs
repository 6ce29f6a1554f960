use ndarray::{Array1, Array2};

use super::{check_training, BenchError, Link, LinearModel, Penalty};
use crate::linalg::{cholesky, cholesky_solve};

/// Added to the pooled covariance diagonal before factorization.
pub const LDA_RIDGE: f64 = 1e-6;

/// Two-class linear discriminant. Each class is Gaussian with its own mean and
/// a shared covariance (pooled maximum-likelihood estimate plus ridge); the
/// log-odds reduce to `wᵀx + b` with `w = Σ⁻¹(μ₁ − μ₀)` and
/// `b = −½(μ₁ + μ₀)ᵀw + ln(π₁/π₀)`.
pub fn train_lda(x: &Array2<f64>, y: &[u8]) -> Result<LinearModel, BenchError> {
    check_training(x, y)?;
    let d = x.ncols();
    let n = y.len();
    let mut mean = [Array1::<f64>::zeros(d), Array1::<f64>::zeros(d)];
    let mut count = [0usize; 2];
    for (row, &c) in x.rows().into_iter().zip(y) {
        let c = usize::from(c.min(1));
        mean[c] += &row;
        count[c] += 1;
    }
    if count.iter().any(|&c| c < 2) {
        return Err(BenchError::DegenerateCovariance);
    }
    for c in 0..2 {
        mean[c] /= count[c] as f64;
    }
    let mut cov = Array2::<f64>::zeros((d, d));
    for (row, &c) in x.rows().into_iter().zip(y) {
        let diff = &row - &mean[usize::from(c.min(1))];
        for a in 0..d {
            for b in a..d {
                cov[[a, b]] += diff[a] * diff[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[[a, b]] / n as f64;
            cov[[a, b]] = v;
            cov[[b, a]] = v;
        }
        cov[[a, a]] += LDA_RIDGE;
    }
    let l = cholesky(&cov).ok_or(BenchError::DegenerateCovariance)?;
    let delta = &mean[1] - &mean[0];
    let w = cholesky_solve(&l, delta.view());
    let mid = (&mean[1] + &mean[0]) * 0.5;
    let prior = (count[1] as f64 / count[0] as f64).ln();
    let bias = -mid.dot(&w) + prior;
    if !w.iter().all(|v| v.is_finite()) || !bias.is_finite() {
        return Err(BenchError::DegenerateCovariance);
    }
    Ok(LinearModel {
        weights: w.to_vec(),
        bias,
        link: Link::LdaGaussian,
        penalty: Penalty::None,
        iterations: 0,
        converged: true,
    })
}
