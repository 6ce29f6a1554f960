use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PrepError;

/// Equal-frequency bins for continuous columns.
pub const DEFAULT_BINS: usize = 10;
/// Features kept by the experiment pipeline.
pub const DEFAULT_TOP_K: usize = 25;
/// Scores closer than this are ties; ties go to the lower column index.
const TIE_EPS: f64 = 1e-12;

/// Integer bin ids per cell, stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedMatrix {
    pub names: Vec<String>,
    /// `columns[j][i]` is the bin of row `i` in column `j`.
    pub columns: Vec<Vec<u32>>,
    /// Strictly increasing cut points; bin = number of edges ≤ value.
    pub edges: Vec<Vec<f64>>,
}

impl DiscretizedMatrix {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn bins(&self, j: usize) -> usize {
        self.edges[j].len() + 1
    }

    /// Builds a matrix from precomputed bin ids (edges left empty).
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<u32>>) -> Self {
        let edges = columns
            .iter()
            .map(|c| {
                let max = c.iter().copied().max().unwrap_or(0);
                (1..=max).map(f64::from).collect()
            })
            .collect();
        DiscretizedMatrix { names, columns, edges }
    }
}

fn column_edges(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct.into_iter().skip(1).collect();
    }
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..max_bins).map(|i| sorted[i * n / max_bins]).collect();
    edges.dedup();
    edges.retain(|&e| e > sorted[0]);
    edges
}

fn bin_of(edges: &[f64], v: f64) -> u32 {
    edges.partition_point(|&e| e <= v) as u32
}

/// Discretizes every column: columns with at most `max_bins` distinct values
/// get one bin per value, the rest equal-frequency bins.
pub fn discretize(x: &Array2<f64>, names: &[String], max_bins: usize) -> DiscretizedMatrix {
    assert_eq!(names.len(), x.ncols());
    let (columns, edges): (Vec<Vec<u32>>, Vec<Vec<f64>>) = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let vals = x.column(j).to_vec();
            let edges = column_edges(&vals, max_bins.max(1));
            let bins = vals.iter().map(|&v| bin_of(&edges, v)).collect();
            (bins, edges)
        })
        .unzip();
    DiscretizedMatrix {
        names: names.to_vec(),
        columns,
        edges,
    }
}

fn joint_counts(x: &[u32], y: &[u32]) -> (Vec<u64>, usize, usize) {
    let nx = x.iter().copied().max().map_or(0, |m| m as usize + 1);
    let ny = y.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut joint = vec![0u64; nx * ny];
    for (&a, &b) in x.iter().zip(y) {
        joint[a as usize * ny + b as usize] += 1;
    }
    (joint, nx, ny)
}

/// Plug-in entropy in nats.
pub fn entropy(x: &[u32]) -> f64 {
    let n = x.len() as f64;
    let (counts, _, _) = joint_counts(x, &vec![0; x.len()]);
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Plug-in mutual information in nats between two discrete vectors.
pub fn mutual_information(x: &[u32], y: &[u32]) -> Result<f64, PrepError> {
    if x.len() != y.len() {
        return Err(PrepError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let n = x.len() as f64;
    let (joint, nx, ny) = joint_counts(x, y);
    let mut px = vec![0u64; nx];
    let mut py = vec![0u64; ny];
    for a in 0..nx {
        for b in 0..ny {
            px[a] += joint[a * ny + b];
            py[b] += joint[a * ny + b];
        }
    }
    let mut mi = 0.0;
    for a in 0..nx {
        for b in 0..ny {
            let c = joint[a * ny + b];
            if c > 0 {
                // n·c / (c_x·c_y) in integer-exact form before the log.
                let ratio = (n * c as f64) / (px[a] as f64 * py[b] as f64);
                mi += (c as f64 / n) * ratio.ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Greedy selection order with the criterion value at each pick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub names: Vec<String>,
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl SelectionResult {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rank", "feature", "score"])?;
        for (i, (name, score)) in self.names.iter().zip(&self.scores).enumerate() {
            w.write_record([(i + 1).to_string(), name.clone(), score.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Minimum-redundancy maximum-relevance selection, difference form: each step
/// picks the unselected column maximizing `I(f; y) − mean_{s ∈ S} I(f; s)`.
pub fn mrmr_select(dm: &DiscretizedMatrix, y: &[u8], k: usize) -> Result<SelectionResult, PrepError> {
    let d = dm.n_cols();
    if k == 0 || k > d {
        return Err(PrepError::KTooLarge { k, available: d });
    }
    if dm.n_rows() != y.len() {
        return Err(PrepError::LengthMismatch(dm.n_rows(), y.len()));
    }
    let y32: Vec<u32> = y.iter().map(|&v| u32::from(v)).collect();
    let relevance: Vec<f64> = dm
        .columns
        .par_iter()
        .map(|c| mutual_information(c, &y32))
        .collect::<Result<_, _>>()?;
    // Running sum of I(f; s) over the selected set, per candidate.
    let mut redundancy = vec![0.0; d];
    let mut chosen = vec![false; d];
    let mut out = SelectionResult {
        names: Vec::with_capacity(k),
        indices: Vec::with_capacity(k),
        scores: Vec::with_capacity(k),
    };
    for step in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for f in (0..d).filter(|&f| !chosen[f]) {
            let score = if step == 0 {
                relevance[f]
            } else {
                relevance[f] - redundancy[f] / step as f64
            };
            if best.is_none_or(|(_, b)| score > b + TIE_EPS) {
                best = Some((f, score));
            }
        }
        let (f, score) = best.expect("k ≤ d leaves a candidate");
        chosen[f] = true;
        out.names.push(dm.names[f].clone());
        out.indices.push(f);
        out.scores.push(score);
        let pick = &dm.columns[f];
        let add: Vec<(usize, f64)> = (0..d)
            .into_par_iter()
            .filter(|&g| !chosen[g])
            .map(|g| mutual_information(&dm.columns[g], pick).map(|v| (g, v)))
            .collect::<Result<_, _>>()?;
        for (g, v) in add {
            redundancy[g] += v;
        }
    }
    Ok(out)
}
