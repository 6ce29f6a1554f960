use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GenError;
use crate::seed::{derive_seed, rng_from_seed};

/// Default permutation unit: one day of per-minute samples.
pub const DEFAULT_SEGMENT_LEN: usize = 1440;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    pub score: f64,
    /// Cells on the optimal warping path.
    pub path_len: usize,
    pub cost: String,
}

/// Classic dynamic-time-warping distance with absolute-difference cost and
/// steps {match, insert, delete}. Memory is linear in `b.len()`; on equal
/// totals the path prefers match, then insert, then delete.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<DtwResult, GenError> {
    if a.is_empty() || b.is_empty() {
        return Err(GenError::EmptySeries);
    }
    let m = b.len();
    let mut prev: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); m + 1];
    let mut cur = prev.clone();
    prev[0] = (0.0, 0);
    for &ai in a {
        cur[0] = (f64::INFINITY, 0);
        for j in 1..=m {
            let c = (ai - b[j - 1]).abs();
            let mut best = prev[j - 1];
            if cur[j - 1].0 < best.0 {
                best = cur[j - 1];
            }
            if prev[j].0 < best.0 {
                best = prev[j];
            }
            cur[j] = (best.0 + c, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (score, path_len) = prev[m];
    Ok(DtwResult {
        score,
        path_len,
        cost: "abs_diff".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestResult {
    pub observed: f64,
    pub permutation_scores: Vec<f64>,
    /// `(1 + #{perm ≤ observed}) / (1 + n_perm)`.
    pub p_value: f64,
}

/// Permutation test of the DTW score between two aligned series. Each
/// replicate swaps every aligned segment between the series with probability
/// one half; smaller scores count as more extreme.
pub fn permutation_test_dtw(
    original: &[f64],
    generated: &[f64],
    n_perm: usize,
    segment_len: usize,
    seed: u64,
) -> Result<PermTestResult, GenError> {
    if original.len() != generated.len() {
        return Err(GenError::LengthMismatch(original.len(), generated.len()));
    }
    if n_perm == 0 || segment_len == 0 {
        return Err(GenError::InvalidConfig("n_perm and segment_len must be positive".into()));
    }
    let observed = dtw_distance(original, generated)?.score;
    let n = original.len();
    let permutation_scores: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, &format!("perm/{r}")));
            let mut a = original.to_vec();
            let mut b = generated.to_vec();
            for start in (0..n).step_by(segment_len) {
                if rng.random::<bool>() {
                    let end = (start + segment_len).min(n);
                    a[start..end].swap_with_slice(&mut b[start..end]);
                }
            }
            dtw_distance(&a, &b).map(|d| d.score)
        })
        .collect::<Result<_, _>>()?;
    let hits = permutation_scores.iter().filter(|&&s| s <= observed).count();
    Ok(PermTestResult {
        observed,
        p_value: (1 + hits) as f64 / (1 + n_perm) as f64,
        permutation_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    /// Plain recursion over the same three moves.
    fn brute(a: &[f64], b: &[f64]) -> f64 {
        fn go(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
            let c = (a[i] - b[j]).abs();
            match (i, j) {
                (0, 0) => c,
                (0, _) => c + go(a, b, 0, j - 1),
                (_, 0) => c + go(a, b, i - 1, 0),
                _ => c + go(a, b, i - 1, j - 1).min(go(a, b, i - 1, j)).min(go(a, b, i, j - 1)),
            }
        }
        go(a, b, a.len() - 1, b.len() - 1)
    }

    #[test]
    fn worked_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(dtw_distance(&a, &a).unwrap().score, 0.0);
        assert_eq!(dtw_distance(&a, &[1.0, 3.0]).unwrap().score, 1.0);
        let r = dtw_distance(&[0.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(r.score, 3.0);
        assert_eq!(r.path_len, 3);
        assert_eq!(dtw_distance(&[], &a), Err(GenError::EmptySeries));
    }

    #[test]
    fn matches_brute_force_and_is_symmetric() {
        let mut rng = rng_from_seed(3);
        for _ in 0..200 {
            let la = rng.random_range(1..=8);
            let lb = rng.random_range(1..=8);
            let a: Vec<f64> = (0..la).map(|_| f64::from(rng.random_range(-4..5))).collect();
            let b: Vec<f64> = (0..lb).map(|_| f64::from(rng.random_range(-4..5))).collect();
            let d = dtw_distance(&a, &b).unwrap().score;
            assert_eq!(d, brute(&a, &b));
            assert_eq!(d, dtw_distance(&b, &a).unwrap().score);
            assert!(d >= (a[0] - b[0]).abs());
        }
    }

    #[test]
    fn identical_series_give_p_one() {
        let a: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let r = permutation_test_dtw(&a, &a, 99, 10, 1).unwrap();
        assert_eq!(r.observed, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn p_values_sit_on_the_grid_and_are_reproducible() {
        let mut rng = rng_from_seed(4);
        let a: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        let r = permutation_test_dtw(&a, &b, 99, 5, 2).unwrap();
        assert_eq!(r, permutation_test_dtw(&a, &b, 99, 5, 2).unwrap());
        let k = r.p_value * 100.0;
        assert!((k - k.round()).abs() < 1e-9 && (1.0..=100.0).contains(&k.round()));
        assert!(matches!(permutation_test_dtw(&a, &b[..29], 99, 5, 2), Err(GenError::LengthMismatch(30, 29))));
    }

    #[test]
    fn white_noise_p_values_are_uniform() {
        let z = Normal::new(0.0, 1.0).unwrap();
        let trials = 200;
        let mut ps: Vec<f64> = (0..trials)
            .map(|t| {
                let mut rng = rng_from_seed(1000 + t);
                let a: Vec<f64> = (0..48).map(|_| z.sample(&mut rng)).collect();
                let b: Vec<f64> = (0..48).map(|_| z.sample(&mut rng)).collect();
                permutation_test_dtw(&a, &b, 999, 4, t).unwrap().p_value
            })
            .collect();
        ps.sort_by(f64::total_cmp);
        let n = trials as f64;
        let d = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| (p - i as f64 / n).abs().max(((i + 1) as f64 / n - p).abs()))
            .fold(0.0, f64::max);
        // Asymptotic one-sample Kolmogorov–Smirnov critical value at α = 0.01.
        assert!(d < 1.628 / n.sqrt(), "D = {d}");
    }
}
