use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{DataError, FeatureMatrix, ResourceKind};

/// Sliding windows over a feature matrix. Windows are stored as end-row
/// indices into a shared copy of the rows instead of materialized slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedTensor {
    pub window_len: usize,
    pub stride: usize,
    rows: Array2<f64>,
    /// Index of the last row of each window.
    ends: Vec<usize>,
    /// Label of each window's last row.
    labels: Vec<u8>,
}

impl WindowedTensor {
    /// Builds windows directly from rows and end indices; every end must be
    /// at least `window_len - 1`.
    pub fn from_parts(
        rows: Array2<f64>,
        ends: Vec<usize>,
        labels: Vec<u8>,
        window_len: usize,
        stride: usize,
    ) -> Self {
        assert!(window_len >= 1);
        assert_eq!(ends.len(), labels.len());
        assert!(ends
            .iter()
            .all(|&e| e + 1 >= window_len && e < rows.nrows()));
        WindowedTensor {
            window_len,
            stride,
            rows,
            ends,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows.ncols()
    }

    /// Underlying row matrix that the windows slice.
    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    /// `window_len × n_features` view of window `i`, oldest row first.
    pub fn window(&self, i: usize) -> ArrayView2<'_, f64> {
        let end = self.ends[i];
        self.rows.slice(s![end + 1 - self.window_len..=end, ..])
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn ends(&self) -> &[usize] {
        &self.ends
    }

    pub fn subset(&self, idx: &[usize]) -> WindowedTensor {
        WindowedTensor {
            window_len: self.window_len,
            stride: self.stride,
            rows: self.rows.clone(),
            ends: idx.iter().map(|&i| self.ends[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Final rows of every window stacked into a matrix (the memoryless view).
    pub fn final_rows(&self) -> Array2<f64> {
        self.rows.select(Axis(0), &self.ends)
    }
}

/// Sliding windows of `window_len` consecutive rows. Windows never cross
/// occupants or timestamp gaps; each is labeled by `resource` at its last row.
pub fn make_windows(
    fm: &FeatureMatrix,
    resource: ResourceKind,
    window_len: usize,
    stride: usize,
) -> Result<WindowedTensor, DataError> {
    if window_len == 0 || stride == 0 {
        return Err(DataError::InvalidConfig(
            "window length and stride must be positive".into(),
        ));
    }
    let n = fm.n_rows();
    let labels_src = fm.labels(resource);
    let mut ends = Vec::new();
    let mut labels = Vec::new();
    let mut longest = 0usize;
    let mut seg_start = 0usize;
    for i in 0..n {
        let breaks = i > 0
            && (fm.row_occupants[i] != fm.row_occupants[i - 1]
                || (fm.row_timestamps[i] - fm.row_timestamps[i - 1]).num_minutes() != 1);
        if breaks {
            seg_start = i;
        }
        let run = i - seg_start + 1;
        longest = longest.max(run);
        if run >= window_len && (run - window_len) % stride == 0 {
            ends.push(i);
            labels.push(labels_src[i]);
        }
    }
    if ends.is_empty() {
        return Err(DataError::WindowTooLong {
            requested: window_len,
            available: longest,
        });
    }
    Ok(WindowedTensor {
        window_len,
        stride,
        rows: fm.rows.clone(),
        ends,
        labels,
    })
}
