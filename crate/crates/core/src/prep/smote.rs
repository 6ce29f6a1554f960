use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PrepError;
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceConfig {
    pub k_neighbors: usize,
    /// Minority/majority ratio after balancing.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig {
            k_neighbors: 5,
            target_ratio: 1.0,
            seed: 0,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<(), PrepError> {
        if self.k_neighbors == 0 {
            return Err(PrepError::InvalidConfig("k_neighbors must be at least 1".into()));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(PrepError::InvalidConfig("target_ratio must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Chooses which minority rows may seed synthetic samples. A classifier-based
/// grouping step (for example keeping only support vectors) plugs in here.
pub trait MinorityGrouping {
    /// Indices into `minority` eligible as interpolation bases.
    fn seeds(&self, minority: ArrayView2<'_, f64>, majority: ArrayView2<'_, f64>) -> Vec<usize>;
}

/// Every minority row is eligible.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllMinority;

impl MinorityGrouping for AllMinority {
    fn seeds(&self, minority: ArrayView2<'_, f64>, _majority: ArrayView2<'_, f64>) -> Vec<usize> {
        (0..minority.nrows()).collect()
    }
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest other rows of each row; distance ties go to the lower index.
fn neighbor_lists(m: ArrayView2<'_, f64>, bases: &[usize], k: usize) -> Vec<Vec<usize>> {
    bases
        .par_iter()
        .map(|&i| {
            let mut d: Vec<(f64, usize)> = (0..m.nrows())
                .filter(|&j| j != i)
                .map(|j| (sq_dist(m.row(i), m.row(j)), j))
                .collect();
            // (distance, index) is a strict total order, so partial
            // selection gives the same k rows as a full sort.
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < d.len() {
                d.select_nth_unstable_by(k, cmp);
                d.truncate(k);
            }
            d.sort_by(cmp);
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

fn smote_from(
    minority: ArrayView2<'_, f64>,
    bases: &[usize],
    k: usize,
    n_synthetic: usize,
    seed: u64,
) -> Result<Array2<f64>, PrepError> {
    let m = minority.nrows();
    if m <= k {
        return Err(PrepError::TooFewMinority { count: m, k });
    }
    if bases.is_empty() && n_synthetic > 0 {
        return Err(PrepError::TooFewMinority { count: 0, k });
    }
    // Bases past `n_synthetic` are never visited.
    let neighbors = neighbor_lists(minority, &bases[..bases.len().min(n_synthetic)], k);
    let mut rng = rng_from_seed(seed);
    let d = minority.ncols();
    let mut out = Array2::zeros((n_synthetic, d));
    for (s, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        // Bases cycle in order so every eligible row contributes evenly.
        let b = s % bases.len();
        let p = minority.row(bases[b]);
        let q = minority.row(neighbors[b][rng.random_range(0..k)]);
        let gap: f64 = rng.random();
        for j in 0..d {
            row[j] = p[j] + gap * (q[j] - p[j]);
        }
    }
    Ok(out)
}

/// `n_synthetic` rows, each `p + s·(q − p)` for a minority row `p`, one of its
/// `k` nearest minority neighbors `q` and `s ~ U[0, 1)`.
pub fn smote(
    minority: ArrayView2<'_, f64>,
    k: usize,
    n_synthetic: usize,
    seed: u64,
) -> Result<Array2<f64>, PrepError> {
    let bases: Vec<usize> = (0..minority.nrows()).collect();
    smote_from(minority, &bases, k, n_synthetic, seed)
}

/// [`balance_with`] using every minority row as a base.
pub fn balance_dataset(
    x: &Array2<f64>,
    y: &[u8],
    cfg: &BalanceConfig,
) -> Result<(Array2<f64>, Vec<u8>), PrepError> {
    balance_with(x, y, cfg, &AllMinority)
}

/// Appends synthetic minority rows until minority/majority reaches
/// `cfg.target_ratio`. Original rows come first, unchanged.
pub fn balance_with(
    x: &Array2<f64>,
    y: &[u8],
    cfg: &BalanceConfig,
    grouping: &dyn MinorityGrouping,
) -> Result<(Array2<f64>, Vec<u8>), PrepError> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(PrepError::LengthMismatch(x.nrows(), y.len()));
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    let zeros = y.len() - ones;
    let (minority_label, n_min, n_maj) = if ones < zeros { (1u8, ones, zeros) } else { (0u8, zeros, ones) };
    let target = (cfg.target_ratio * n_maj as f64).round() as usize;
    if n_min == n_maj || target <= n_min {
        return Ok((x.clone(), y.to_vec()));
    }
    let need = target - n_min;
    let min_idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority_label).collect();
    let maj_idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] != minority_label).collect();
    let minority = x.select(Axis(0), &min_idx);
    let majority = x.select(Axis(0), &maj_idx);
    let bases = grouping.seeds(minority.view(), majority.view());
    let synth = smote_from(minority.view(), &bases, cfg.k_neighbors, need, cfg.seed)?;
    let out = ndarray::concatenate(Axis(0), &[x.view(), synth.view()])
        .expect("matching column counts");
    let mut labels = y.to_vec();
    labels.extend(std::iter::repeat_n(minority_label, need));
    Ok((out, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_minority_stays_on_the_diagonal() {
        let m = array![[0.0, 0.0], [1.0, 1.0]];
        let s = smote(m.view(), 1, 50, 4).unwrap();
        for r in s.rows() {
            assert_eq!(r[0], r[1]);
            assert!((0.0..=1.0).contains(&r[0]));
        }
    }

    #[test]
    fn count_arithmetic() {
        let mut x = Array2::zeros((110, 2));
        for i in 0..110 {
            x[[i, 0]] = i as f64;
        }
        let y: Vec<u8> = (0..110).map(|i| u8::from(i >= 100)).collect();
        let (bx, by) = balance_dataset(&x, &y, &BalanceConfig::default()).unwrap();
        assert_eq!(bx.nrows(), 200);
        assert_eq!(by.iter().filter(|&&v| v == 1).count(), 100);
        assert_eq!(bx.slice(ndarray::s![..110, ..]), x);
    }

    #[test]
    fn ten_to_twenty_fold_imbalance() {
        let n = 2100;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 7 + j * 13) % 101) as f64);
        let y: Vec<u8> = (0..n).map(|i| u8::from(i % 21 == 0)).collect();
        assert_eq!(y.iter().filter(|&&v| v == 1).count(), 100);
        let (bx, _) = balance_dataset(&x, &y, &BalanceConfig::default()).unwrap();
        assert_eq!(bx.nrows() - n, 1900);
        let half = BalanceConfig {
            target_ratio: 0.5,
            ..BalanceConfig::default()
        };
        let (bx, _) = balance_dataset(&x, &y, &half).unwrap();
        assert_eq!(bx.nrows() - n, 900);
    }

    #[test]
    fn balanced_input_is_unchanged_and_small_minority_fails() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = vec![0, 1, 0, 1];
        let (bx, by) = balance_dataset(&x, &y, &BalanceConfig::default()).unwrap();
        assert_eq!((bx, by), (x, y));
        let m = array![[0.0], [1.0], [2.0]];
        assert_eq!(
            smote(m.view(), 5, 1, 0),
            Err(PrepError::TooFewMinority { count: 3, k: 5 })
        );
    }
}
