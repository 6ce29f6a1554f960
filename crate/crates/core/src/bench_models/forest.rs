use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_dim, BenchError, EnsembleModel, Member};
use crate::bench_models::logistic::bootstrap_indices;
use crate::seed::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features tried per split; `None` means ⌈√d⌉.
    pub feat_subset_size: Option<usize>,
    pub min_leaf: usize,
    /// Fit each tree on a bootstrap replicate instead of the full data.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 12,
            feat_subset_size: None,
            min_leaf: 5,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [u32; 2],
    },
}

/// CART tree stored as a node arena; node 0 is the root. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_features: usize,
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    fn leaf_counts(&self, x: ArrayView1<'_, f64>) -> Result<[u32; 2], BenchError> {
        check_dim(self.n_features, x.len())?;
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { counts } => return Ok(*counts),
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Majority class of the reached leaf; an even leaf votes 0.
    pub fn predict_class(&self, x: ArrayView1<'_, f64>) -> Result<u8, BenchError> {
        let c = self.leaf_counts(x)?;
        Ok(u8::from(c[1] > c[0]))
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Split { .. })).count()
    }
}

fn gini(c: [u32; 2]) -> f64 {
    let n = f64::from(c[0] + c[1]);
    if n == 0.0 {
        return 0.0;
    }
    let p = f64::from(c[1]) / n;
    2.0 * p * (1.0 - p)
}

struct Grower<'a> {
    x: &'a Array2<f64>,
    y: &'a [u8],
    cfg: &'a ForestConfig,
    m: usize,
    rng: Rng,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn counts(&self, rows: &[usize]) -> [u32; 2] {
        let ones = rows.iter().filter(|&&i| self.y[i] == 1).count() as u32;
        [rows.len() as u32 - ones, ones]
    }

    /// Best (feature, threshold, weighted child impurity) among a random
    /// feature subset; ties keep the first candidate found.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64, f64)> {
        let d = self.x.ncols();
        let feats = sample(&mut self.rng, d, self.m).into_vec();
        let total = self.counts(rows);
        let n = rows.len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut vals: Vec<(f64, u8)> = Vec::with_capacity(n);
        for f in feats {
            vals.clear();
            vals.extend(rows.iter().map(|&i| (self.x[[i, f]], self.y[i])));
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0u32; 2];
            for k in 0..n - 1 {
                left[usize::from(vals[k].1)] += 1;
                let nl = k + 1;
                if vals[k].0 == vals[k + 1].0 || nl < self.cfg.min_leaf || n - nl < self.cfg.min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let imp = (nl as f64 * gini(left) + (n - nl) as f64 * gini(right)) / n as f64;
                if best.is_none_or(|(_, _, b)| imp < b) {
                    best = Some((f, 0.5 * (vals[k].0 + vals[k + 1].0), imp));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(&rows);
        self.nodes.push(TreeNode::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.cfg.max_depth || rows.len() < 2 * self.cfg.min_leaf.max(1) {
            return id;
        }
        let Some((feature, threshold, imp)) = self.best_split(&rows) else {
            return id;
        };
        if imp >= gini(counts) {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.x[[i, feature]] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = TreeNode::Split { feature, threshold, left, right };
        id
    }
}

/// One CART tree (Gini impurity, random feature subset per split) on the
/// given rows.
pub fn train_tree(
    x: &Array2<f64>,
    y: &[u8],
    rows: Vec<usize>,
    cfg: &ForestConfig,
    seed: u64,
) -> DecisionTree {
    let d = x.ncols();
    let m = cfg
        .feat_subset_size
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let mut g = Grower {
        x,
        y,
        cfg,
        m,
        rng: rng_from_seed(seed),
        nodes: Vec::new(),
    };
    g.grow(rows, 0);
    DecisionTree {
        n_features: d,
        nodes: g.nodes,
    }
}

/// Forest of CART trees combined by vote; tree `i` uses seeds derived from
/// its index, so the result does not depend on scheduling.
pub fn train_random_forest(x: &Array2<f64>, y: &[u8], cfg: &ForestConfig) -> Result<EnsembleModel, BenchError> {
    if x.nrows() != y.len() {
        return Err(BenchError::LengthMismatch(x.nrows(), y.len()));
    }
    if y.is_empty() {
        return Err(BenchError::EmptyData);
    }
    if cfg.n_trees == 0 || cfg.min_leaf == 0 {
        return Err(BenchError::InvalidConfig("n_trees and min_leaf must be at least 1".into()));
    }
    // A single class is allowed: every tree is then one pure leaf.
    let members = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let rows = if cfg.bootstrap {
                bootstrap_indices(x.nrows(), derive_seed(cfg.seed, &format!("forest/rows/{t}")))
            } else {
                (0..x.nrows()).collect()
            };
            Member::Tree(train_tree(x, y, rows, cfg, derive_seed(cfg.seed, &format!("forest/split/{t}"))))
        })
        .collect();
    Ok(EnsembleModel { members })
}
