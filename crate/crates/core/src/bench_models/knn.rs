use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{check_dim, check_training, BenchError};

/// Cached training rows (already standardized) and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborIndex {
    pub rows: Array2<f64>,
    pub labels: Vec<u8>,
}

impl NeighborIndex {
    pub fn new(rows: Array2<f64>, labels: Vec<u8>) -> Result<Self, BenchError> {
        check_training(&rows, &labels)?;
        Ok(NeighborIndex { rows, labels })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub index: NeighborIndex,
    pub k: usize,
}

impl KnnModel {
    pub fn predict_proba(&self, x: ArrayView1<'_, f64>) -> Result<f64, BenchError> {
        knn_predict(&self.index, x, self.k)
    }

    /// Majority class among the neighbors; an even split votes 0.
    pub fn predict_class(&self, x: ArrayView1<'_, f64>) -> Result<u8, BenchError> {
        Ok(u8::from(self.predict_proba(x)? > 0.5))
    }
}

/// Fraction of the `k` nearest stored rows (Euclidean; distance ties go to
/// the lower training index) labeled 1.
pub fn knn_predict(idx: &NeighborIndex, x: ArrayView1<'_, f64>, k: usize) -> Result<f64, BenchError> {
    let n = idx.rows.nrows();
    if k == 0 || k > n {
        return Err(BenchError::KTooLarge { k, available: n });
    }
    check_dim(idx.rows.ncols(), x.len())?;
    let mut dist: Vec<(f64, usize)> = idx
        .rows
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < n {
        dist.select_nth_unstable_by(k - 1, cmp);
    }
    let ones = dist[..k].iter().filter(|(_, i)| idx.labels[*i] == 1).count();
    Ok(ones as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn index() -> NeighborIndex {
        NeighborIndex::new(array![[0.0], [1.0], [2.0], [10.0]], vec![1, 1, 0, 0]).unwrap()
    }

    #[test]
    fn nearest_neighbor_votes() {
        let idx = index();
        assert_eq!(knn_predict(&idx, array![9.0].view(), 1).unwrap(), 0.0);
        assert_eq!(knn_predict(&idx, array![1.0].view(), 1).unwrap(), 1.0);
        let p = knn_predict(&idx, array![1.0].view(), 3).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            knn_predict(&idx, array![1.0].view(), 5),
            Err(BenchError::KTooLarge { k: 5, available: 4 })
        );
    }

    #[test]
    fn equidistant_tie_takes_lower_index_and_even_vote_is_zero() {
        let idx = index();
        // 0.5 is equally far from rows 0 and 1; row 0 wins.
        assert_eq!(knn_predict(&idx, array![0.5].view(), 1).unwrap(), 1.0);
        let idx = NeighborIndex::new(array![[0.0], [2.0]], vec![0, 1]).unwrap();
        assert_eq!(knn_predict(&idx, array![1.0].view(), 1).unwrap(), 0.0);
        let m = KnnModel { index: idx, k: 2 };
        assert_eq!(m.predict_class(array![1.0].view()).unwrap(), 0);
    }
}
