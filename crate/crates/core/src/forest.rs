//! Random forest regression with out-of-bag hyperparameter selection.
//!
//! Trees are CART regression trees grown on bootstrap resamples, splitting on
//! the axis-aligned threshold with the largest reduction in squared error
//! among `max_features` randomly chosen columns. Each tree draws its bootstrap
//! and feature subsets from a stream keyed by `(seed, tree_index)`, so a
//! forest is identical whatever the thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RpivError};
use crate::rng::{Domain, Stream};

/// Minimum number of training rows.
pub const MIN_OBSERVATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub num_trees: usize,
    pub min_leaf: usize,
    pub max_features: usize,
    /// `None` grows until leaves are pure or hit `min_leaf`.
    pub max_depth: Option<usize>,
}

/// Candidate grid searched by [`fit_forest`] for `num_features` columns.
pub fn default_grid(num_features: usize) -> Vec<ForestParams> {
    let sqrt = (num_features as f64).sqrt().ceil() as usize;
    let mut mtry = vec![sqrt.max(1)];
    if num_features != mtry[0] {
        mtry.push(num_features);
    }
    let mut grid = Vec::new();
    for &min_leaf in &[1, 5, 10] {
        for &max_features in &mtry {
            grid.push(ForestParams {
                num_trees: 200,
                min_leaf,
                max_features,
                max_depth: None,
            });
        }
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// A trained forest. Prediction is the unweighted mean over trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<RegressionTree>,
    /// Set when the training targets had zero variance.
    constant: Option<f64>,
    /// Mean squared out-of-bag error.
    pub oob_error: f64,
    pub params: ForestParams,
    pub seed: u64,
}

impl ForestModel {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> DVector<f64> {
        let rows = row_major(features);
        let k = features.ncols();
        DVector::from_iterator(
            features.nrows(),
            rows.chunks_exact(k.max(1)).map(|r| self.predict_row(r)),
        )
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

struct Builder<'a> {
    /// Column-major features, `columns[j][i]`.
    columns: &'a [Vec<f64>],
    targets: &'a [f64],
    params: ForestParams,
    rng: Stream,
    nodes: Vec<Node>,
    /// For every feature, the bootstrap rows ordered by that feature. A node
    /// owns the same range `lo..hi` in each of these lists.
    sorted: Vec<Vec<usize>>,
    /// Features that vary over the bootstrap sample. Constant ones still take
    /// part in the feature draw but are never scanned or partitioned.
    varies: Vec<bool>,
    /// Index of the list used for node membership.
    reference: usize,
    goes_left: Vec<bool>,
    buffer: Vec<usize>,
    features: Vec<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn is_pure(&self, rows: &[usize]) -> bool {
        let first = self.targets[rows[0]];
        rows.iter().all(|&i| self.targets[i] == first)
    }

    fn leaf_value(&self, lo: usize, hi: usize) -> f64 {
        let rows = &self.sorted[self.reference][lo..hi];
        if self.is_pure(rows) {
            return self.targets[rows[0]];
        }
        rows.iter().map(|&i| self.targets[i]).sum::<f64>() / rows.len() as f64
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf(0.0));
        let min_leaf = self.params.min_leaf.max(1);
        let depth_ok = self.params.max_depth.map_or(true, |m| depth < m);
        let split = if hi - lo >= 2 * min_leaf && depth_ok {
            self.best_split(lo, hi, min_leaf)
        } else {
            None
        };
        match split {
            None => {
                self.nodes[id as usize] = Node::Leaf(self.leaf_value(lo, hi));
            }
            Some(best) => {
                let mid = self.partition(lo, hi, &best);
                let left = self.grow(lo, mid, depth + 1);
                let right = self.grow(mid, hi, depth + 1);
                self.nodes[id as usize] = Node::Split {
                    feature: best.feature as u32,
                    threshold: best.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    /// Stable partition of every feature's range; returns the boundary.
    fn partition(&mut self, lo: usize, hi: usize, best: &BestSplit) -> usize {
        let col = &self.columns[best.feature];
        for &i in &self.sorted[best.feature][lo..hi] {
            self.goes_left[i] = col[i] <= best.threshold;
        }
        let mut mid = lo;
        for (f, list) in self.sorted.iter_mut().enumerate() {
            if !self.varies[f] && f != self.reference {
                continue;
            }
            self.buffer.clear();
            let mut w = lo;
            for k in lo..hi {
                let i = list[k];
                if self.goes_left[i] {
                    list[w] = i;
                    w += 1;
                } else {
                    self.buffer.push(i);
                }
            }
            list[w..hi].copy_from_slice(&self.buffer);
            mid = w;
        }
        mid
    }

    fn best_split(&mut self, lo: usize, hi: usize, min_leaf: usize) -> Option<BestSplit> {
        let m = hi - lo;
        if self.is_pure(&self.sorted[self.reference][lo..hi]) {
            return None;
        }
        let total: f64 = self.sorted[self.reference][lo..hi].iter().map(|&i| self.targets[i]).sum();
        // partial Fisher–Yates over the feature list
        let p = self.columns.len();
        let mtry = self.params.max_features.clamp(1, p);
        for k in 0..mtry {
            let j = k + self.rng.below(p - k);
            self.features.swap(k, j);
        }
        let parent_score = total * total / m as f64;
        let mut best: Option<BestSplit> = None;
        for k in 0..mtry {
            let feature = self.features[k];
            if !self.varies[feature] {
                continue;
            }
            let col = &self.columns[feature];
            let rows = &self.sorted[feature][lo..hi];
            let mut left_sum = 0.0;
            for s in 0..m - 1 {
                left_sum += self.targets[rows[s]];
                let n_left = s + 1;
                if n_left < min_leaf {
                    continue;
                }
                if m - n_left < min_leaf {
                    break;
                }
                let (v, next) = (col[rows[s]], col[rows[s + 1]]);
                if v == next {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / (m - n_left) as f64;
                let gain = score - parent_score;
                if gain > 1e-12 * parent_score.abs().max(1e-300)
                    && best.as_ref().map_or(true, |b| gain > b.gain)
                {
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

struct TrainedTree {
    tree: RegressionTree,
    in_bag: Vec<bool>,
}

/// Row indices of each column in ascending order of value.
fn presort(columns: &[Vec<f64>]) -> Vec<Vec<usize>> {
    columns
        .iter()
        .map(|col| {
            let mut ord: Vec<usize> = (0..col.len()).collect();
            ord.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            ord
        })
        .collect()
}

fn train_tree(
    columns: &[Vec<f64>],
    order: &[Vec<usize>],
    targets: &[f64],
    params: ForestParams,
    seed: u64,
    tree_index: usize,
) -> TrainedTree {
    let n = targets.len();
    let mut rng = Stream::new(Domain::Forest, seed, tree_index as u64, 0);
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.below(n)] += 1;
    }
    let in_bag: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
    // expand the presorted orders by bootstrap multiplicity
    let sorted: Vec<Vec<usize>> = order
        .iter()
        .map(|ord| {
            let mut list = Vec::with_capacity(n);
            for &i in ord {
                for _ in 0..counts[i] {
                    list.push(i);
                }
            }
            list
        })
        .collect();
    let varies: Vec<bool> = columns
        .iter()
        .zip(&sorted)
        .map(|(col, list)| col[list[0]] != col[list[n - 1]])
        .collect();
    let reference = varies.iter().position(|&v| v).unwrap_or(0);
    let mut builder = Builder {
        columns,
        targets,
        params,
        rng,
        nodes: Vec::with_capacity(2 * n),
        sorted,
        varies,
        reference,
        goes_left: vec![false; n],
        buffer: Vec::with_capacity(n),
        features: (0..columns.len()).collect(),
    };
    builder.grow(0, n, 0);
    TrainedTree {
        tree: RegressionTree {
            nodes: builder.nodes,
        },
        in_bag,
    }
}

fn validate(features: &DMatrix<f64>, targets: &DVector<f64>) -> Result<()> {
    if features.nrows() != targets.len() {
        return Err(RpivError::DimensionMismatch(format!(
            "{} feature rows for {} targets",
            features.nrows(),
            targets.len()
        )));
    }
    if targets.len() < MIN_OBSERVATIONS {
        return Err(RpivError::TooFewObservations(format!(
            "forest needs at least {MIN_OBSERVATIONS} observations, got {}",
            targets.len()
        )));
    }
    if features.ncols() == 0 {
        return Err(RpivError::DimensionMismatch("no feature columns".into()));
    }
    Ok(())
}

/// Trains one forest with fixed hyperparameters.
pub fn fit_forest_with(
    features: &DMatrix<f64>,
    targets: &DVector<f64>,
    params: ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    validate(features, targets)?;
    if params.num_trees == 0 {
        return Err(RpivError::InvalidConfig("num_trees must be positive".into()));
    }
    let t = targets.as_slice();
    if t.iter().all(|&v| v == t[0]) {
        return Ok(ForestModel {
            trees: Vec::new(),
            constant: Some(t[0]),
            oob_error: 0.0,
            params,
            seed,
        });
    }
    let columns: Vec<Vec<f64>> = features.column_iter().map(|c| c.iter().copied().collect()).collect();
    let rows = row_major(features);
    let k = features.ncols();
    let order = presort(&columns);
    let trained: Vec<TrainedTree> = (0..params.num_trees)
        .into_par_iter()
        .map(|b| train_tree(&columns, &order, t, params, seed, b))
        .collect();

    let n = t.len();
    let mut oob_sum = vec![0.0; n];
    let mut oob_count = vec![0usize; n];
    for tt in &trained {
        for i in 0..n {
            if !tt.in_bag[i] {
                oob_sum[i] += tt.tree.predict_row(&rows[i * k..(i + 1) * k]);
                oob_count[i] += 1;
            }
        }
    }
    let (mut sse, mut used) = (0.0, 0usize);
    for i in 0..n {
        if oob_count[i] > 0 {
            let e = t[i] - oob_sum[i] / oob_count[i] as f64;
            sse += e * e;
            used += 1;
        }
    }
    let oob_error = if used > 0 { sse / used as f64 } else { f64::INFINITY };
    Ok(ForestModel {
        trees: trained.into_iter().map(|tt| tt.tree).collect(),
        constant: None,
        oob_error,
        params,
        seed,
    })
}

/// Trains every candidate of `grid` and keeps the one with the smallest
/// out-of-bag error; ties go to fewer trees, then shallower depth limit.
pub fn fit_forest_grid(
    features: &DMatrix<f64>,
    targets: &DVector<f64>,
    grid: &[ForestParams],
    seed: u64,
) -> Result<ForestModel> {
    validate(features, targets)?;
    let mut best: Option<ForestModel> = None;
    for &params in grid {
        let model = fit_forest_with(features, targets, params, seed)?;
        let better = match &best {
            None => true,
            Some(b) => {
                let key = |m: &ForestModel| {
                    (
                        m.params.num_trees,
                        m.params.max_depth.unwrap_or(usize::MAX),
                    )
                };
                model.oob_error < b.oob_error
                    || (model.oob_error == b.oob_error && key(&model) < key(b))
            }
        };
        if better {
            best = Some(model);
        }
    }
    best.ok_or_else(|| RpivError::InvalidConfig("empty hyperparameter grid".into()))
}

/// Forest with hyperparameters chosen from [`default_grid`] by OOB error.
pub fn fit_forest(features: &DMatrix<f64>, targets: &DVector<f64>, seed: u64) -> Result<ForestModel> {
    fit_forest_grid(features, targets, &default_grid(features.ncols()), seed)
}
