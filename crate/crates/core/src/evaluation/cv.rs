use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::seed::rng_from_seed;

pub const DEFAULT_FOLDS: usize = 10;

/// Disjoint folds covering `0..n`; sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CVPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl CVPlan {
    pub fn n(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    /// Every index outside fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Fold `f` as the validation set, ascending.
    pub fn validation_indices(&self, f: usize) -> Vec<usize> {
        let mut out = self.folds[f].clone();
        out.sort_unstable();
        out
    }
}

/// Seeded shuffle of `0..n`, then contiguous chunks; the first `n mod k`
/// folds take one extra index.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<CVPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidConfig(format!("cross-validation needs k ≥ 2, got {k}")));
    }
    if k > n {
        return Err(EvalError::KTooLarge { k, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(CVPlan { k, seed, folds })
}
