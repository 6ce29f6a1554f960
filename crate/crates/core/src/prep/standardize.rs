use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::PrepError;
use crate::data::FeatureMatrix;

/// Columns whose population sd falls below this are passed through untouched.
pub const SD_FLOOR: f64 = 1e-12;

/// Per-column training mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    /// Zero marks a pass-through column.
    pub sd: Vec<f64>,
}

impl StandardizationStats {
    pub fn fit(x: &Array2<f64>) -> Result<Self, PrepError> {
        let n = x.nrows();
        if n < 2 {
            return Err(PrepError::TooFewRows(n));
        }
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            mean.push(m);
            sd.push(if s < SD_FLOOR { 0.0 } else { s });
        }
        Ok(StandardizationStats { mean, sd })
    }

    pub fn is_pass_through(&self, j: usize) -> bool {
        self.sd[j] == 0.0
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>, PrepError> {
        if x.ncols() != self.mean.len() {
            return Err(PrepError::ColumnMismatch {
                expected: self.mean.len(),
                found: x.ncols(),
            });
        }
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            if !self.is_pass_through(j) {
                let (m, s) = (self.mean[j], self.sd[j]);
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
        Ok(out)
    }

    /// Stats that leave every column unchanged.
    pub fn identity(d: usize) -> Self {
        StandardizationStats {
            mean: vec![0.0; d],
            sd: vec![0.0; d],
        }
    }
}

/// Standardizes every column with the given stats, or with stats fitted on
/// `fm` itself when none are given.
pub fn standardize(
    fm: &FeatureMatrix,
    stats: Option<&StandardizationStats>,
) -> Result<(FeatureMatrix, StandardizationStats), PrepError> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => StandardizationStats::fit(&fm.rows)?,
    };
    let mut out = fm.clone();
    out.rows = stats.apply(&fm.rows)?;
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_two_three() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let s = StandardizationStats::fit(&x).unwrap();
        let sd = (2.0f64 / 3.0).sqrt();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert!((s.sd[0] - sd).abs() < 1e-15);
        assert!(s.is_pass_through(1));
        let z = s.apply(&x).unwrap();
        for (got, want) in z.column(0).iter().zip([-1.0 / sd, 0.0, 1.0 / sd]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(z.column(1).to_vec(), vec![5.0; 3]);
    }

    #[test]
    fn test_rows_use_training_stats() {
        let train = array![[0.0], [2.0]];
        let s = StandardizationStats::fit(&train).unwrap();
        let z = s.apply(&array![[4.0]]).unwrap();
        assert_eq!(z[[0, 0]], 3.0);
    }

    #[test]
    fn single_row_is_rejected() {
        assert_eq!(
            StandardizationStats::fit(&array![[1.0]]),
            Err(PrepError::TooFewRows(1))
        );
    }
}
