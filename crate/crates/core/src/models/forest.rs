//! Bagged CART regression forest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_row, DesignMatrix};
use crate::rng::RngStream;
use crate::stats::compensated_sum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means `max(1, cols / 3)`.
    pub mtry: Option<usize>,
    pub min_leaf_size: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            mtry: None,
            min_leaf_size: 5,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("models.forest.n_trees", "must be at least 1"));
        }
        if self.min_leaf_size == 0 {
            return Err(Error::config("models.forest.min_leaf_size", "must be at least 1"));
        }
        if self.mtry == Some(0) {
            return Err(Error::config("models.forest.mtry", "must be at least 1"));
        }
        Ok(())
    }

    pub fn resolved_mtry(&self, cols: usize) -> Result<usize> {
        let mtry = self.mtry.unwrap_or((cols / 3).max(1));
        if mtry == 0 || mtry > cols {
            return Err(Error::invalid("mtry", format!("must lie in 1..={cols}, got {mtry}")));
        }
        Ok(mtry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Axis-aligned regression tree; rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestFit {
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
    pub mtry: usize,
    pub min_leaf_size: usize,
    pub bootstrap: bool,
}

impl ForestFit {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        check_row(row, self.n_features)?;
        Ok(self.predict_unchecked(row))
    }

    pub(crate) fn predict_unchecked(&self, row: &[f64]) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let values = self.trees.iter().map(|t| {
            let v = t.predict(row);
            lo = lo.min(v);
            hi = hi.max(v);
            v
        });
        let mean = compensated_sum(values) / self.trees.len() as f64;
        // an average lies between its extremes; rounding must not push it out
        mean.clamp(lo, hi)
    }
}

/// Free-function form of [`ForestFit::predict`].
pub fn predict_forest(fit: &ForestFit, row: &[f64]) -> Result<f64> {
    fit.predict(row)
}

pub fn fit_forest(x: &DesignMatrix, y: &[f64], cfg: &ForestConfig, stream: &mut RngStream) -> Result<ForestFit> {
    x.check_training(y)?;
    cfg.validate()?;
    let n = x.rows();
    let needed = 2 * cfg.min_leaf_size;
    if n < needed {
        return Err(Error::InsufficientData { needed, found: n });
    }
    let mtry = cfg.resolved_mtry(x.cols())?;
    let mut builder = TreeBuilder::new(x, y, mtry, cfg.min_leaf_size);
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        let sample: Vec<usize> = if cfg.bootstrap {
            (0..n).map(|_| stream.index(n)).collect()
        } else {
            (0..n).collect()
        };
        trees.push(builder.build(sample, stream));
    }
    Ok(ForestFit {
        trees,
        n_features: x.cols(),
        mtry,
        min_leaf_size: cfg.min_leaf_size,
        bootstrap: cfg.bootstrap,
    })
}

struct TreeBuilder<'a> {
    x: &'a DesignMatrix,
    y: &'a [f64],
    mtry: usize,
    min_leaf: usize,
    features: Vec<usize>,
    /// (feature value, centered target) for the node being searched.
    scratch: Vec<(f64, f64)>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl<'a> TreeBuilder<'a> {
    fn new(x: &'a DesignMatrix, y: &'a [f64], mtry: usize, min_leaf: usize) -> Self {
        TreeBuilder {
            x,
            y,
            mtry,
            min_leaf,
            features: (0..x.cols()).collect(),
            scratch: Vec::with_capacity(x.rows()),
        }
    }

    fn build(&mut self, mut rows: Vec<usize>, stream: &mut RngStream) -> RegressionTree {
        let mut nodes = vec![Node::Leaf { value: f64::NAN }];
        // (node slot, start, end) ranges into `rows`
        let mut pending = vec![(0usize, 0usize, rows.len())];
        while let Some((slot, start, end)) = pending.pop() {
            let node_rows = &mut rows[start..end];
            match self.find_split(node_rows, stream) {
                Ok(split) => {
                    let mid = partition(node_rows, |i| self.x.get(i, split.feature) <= split.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: f64::NAN });
                    nodes.push(Node::Leaf { value: f64::NAN });
                    nodes[slot] = Node::Split {
                        feature: split.feature,
                        threshold: split.threshold,
                        left,
                        right: left + 1,
                    };
                    pending.push((left + 1, start + mid, end));
                    pending.push((left, start, start + mid));
                }
                Err(value) => nodes[slot] = Node::Leaf { value },
            }
        }
        RegressionTree { nodes }
    }

    /// Best admissible split of the node, or the leaf value if none exists.
    fn find_split(&mut self, rows: &[usize], stream: &mut RngStream) -> Result<BestSplit, f64> {
        let m = rows.len();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in rows {
            lo = lo.min(self.y[i]);
            hi = hi.max(self.y[i]);
        }
        let mean = (rows.iter().map(|&i| self.y[i]).sum::<f64>() / m as f64).clamp(lo, hi);
        if m < 2 * self.min_leaf || lo == hi {
            return Err(mean);
        }
        let parent_sse: f64 = rows.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();

        // partial Fisher-Yates: the first mtry entries become the candidates
        let p = self.features.len();
        for k in 0..self.mtry {
            let pick = k + stream.index(p - k);
            self.features.swap(k, pick);
        }

        let mut best: Option<BestSplit> = None;
        for k in 0..self.mtry {
            let feature = self.features[k];
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&i| (self.x.get(i, feature), self.y[i] - mean)));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            let total: f64 = self.scratch.iter().map(|s| s.1).sum();
            let base = total * total / m as f64;
            let mut left_sum = 0.0;
            for idx in 0..m - 1 {
                left_sum += self.scratch[idx].1;
                let n_left = idx + 1;
                let n_right = m - n_left;
                if n_right < self.min_leaf {
                    break;
                }
                if n_left < self.min_leaf {
                    continue;
                }
                let (v, next) = (self.scratch[idx].0, self.scratch[idx + 1].0);
                if v == next {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64 - base;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = 0.5 * (v + next);
                    let threshold = if mid < next { mid } else { v };
                    best = Some(BestSplit {
                        gain,
                        feature,
                        threshold,
                    });
                }
            }
        }
        match best {
            Some(split) if split.gain > 1e-12 * parent_sse => Ok(split),
            _ => Err(mean),
        }
    }
}

/// In-place partition; returns the number of elements satisfying `pred`,
/// which are moved to the front.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for k in 0..rows.len() {
        if pred(rows[k]) {
            rows.swap(mid, k);
            mid += 1;
        }
    }
    mid
}
