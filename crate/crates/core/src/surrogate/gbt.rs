//! Gradient-boosted regression trees with squared-error loss.
//!
//! Trees are grown level by level with an exact greedy search over every
//! observed feature value. Rows are presorted once per feature, so each
//! level costs one linear scan per feature. Split ties go to the lowest
//! feature index, then the lowest threshold.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig { trees: 100, max_depth: 6, learning_rate: 0.3, min_samples_leaf: 1 }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.min_samples_leaf == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "gbt.trees, gbt.learning_rate and gbt.min_samples_leaf must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left as usize } else { *right as usize };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Boosted ensemble for one output: `base + lr * sum(tree(x))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl Ensemble {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub ensembles: Vec<Ensemble>,
}

impl GbtModel {
    /// Fits one ensemble per column of `y`.
    pub fn fit(x: ArrayView2<f64>, y: ArrayView2<f64>, cfg: &GbtConfig) -> Result<GbtModel> {
        cfg.validate()?;
        if x.nrows() == 0 || x.nrows() != y.nrows() {
            return Err(Error::InvalidArgument(format!("gbt: {} inputs vs {} targets", x.nrows(), y.nrows())));
        }
        let sorted = presort(x);
        let ensembles = (0..y.ncols())
            .into_par_iter()
            .map(|j| {
                let target: Vec<f64> = y.column(j).to_vec();
                fit_ensemble(x, &sorted, &target, cfg)
            })
            .collect();
        Ok(GbtModel { ensembles })
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.ensembles.iter().map(|e| e.predict(x)).collect()
    }
}

fn presort(x: ArrayView2<f64>) -> Vec<Vec<u32>> {
    (0..x.ncols())
        .map(|f| {
            let col = x.column(f);
            let mut idx: Vec<u32> = (0..x.nrows() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            idx
        })
        .collect()
}

fn fit_ensemble(x: ArrayView2<f64>, sorted: &[Vec<u32>], y: &[f64], cfg: &GbtConfig) -> Ensemble {
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut residual: Vec<f64> = y.iter().map(|v| v - base).collect();
    let mut trees = Vec::with_capacity(cfg.trees);
    let mut leaf_of = vec![0u32; n];
    for _ in 0..cfg.trees {
        let tree = grow_tree(x, sorted, &residual, cfg, &mut leaf_of);
        for (r, &leaf) in residual.iter_mut().zip(&leaf_of) {
            if let TreeNode::Leaf { value } = tree.nodes[leaf as usize] {
                *r -= cfg.learning_rate * value;
            }
        }
        trees.push(tree);
    }
    Ensemble { base, learning_rate: cfg.learning_rate, trees }
}

#[derive(Clone, Copy, Default)]
struct Stats {
    count: usize,
    sum: f64,
    sum_sq: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

#[derive(Clone, Copy)]
struct Scan {
    count: usize,
    sum: f64,
    last: f64,
}

const NO_SLOT: u32 = u32::MAX;

/// Grows one regression tree on `residual`; on return `leaf_of[i]` is the
/// leaf node reached by row `i`.
fn grow_tree(x: ArrayView2<f64>, sorted: &[Vec<u32>], residual: &[f64], cfg: &GbtConfig, leaf_of: &mut [u32]) -> Tree {
    let n = residual.len();
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    leaf_of.iter_mut().for_each(|l| *l = 0);
    let root = residual.iter().fold(Stats::default(), |s, &r| Stats {
        count: s.count + 1,
        sum: s.sum + r,
        sum_sq: s.sum_sq + r * r,
    });
    // Frontier: (node id, stats) of nodes that may still split.
    let mut frontier = vec![(0u32, root)];
    let mut slot_of: Vec<u32> = vec![NO_SLOT];

    for _depth in 0..cfg.max_depth {
        if frontier.is_empty() {
            break;
        }
        slot_of.resize(nodes.len(), NO_SLOT);
        slot_of.iter_mut().for_each(|s| *s = NO_SLOT);
        for (slot, (id, _)) in frontier.iter().enumerate() {
            slot_of[*id as usize] = slot as u32;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut scan = vec![Scan { count: 0, sum: 0.0, last: f64::NAN }; frontier.len()];
        for (f, order) in sorted.iter().enumerate() {
            scan.iter_mut().for_each(|s| *s = Scan { count: 0, sum: 0.0, last: f64::NAN });
            let col = x.column(f);
            for &row in order {
                let row = row as usize;
                let slot = slot_of[leaf_of[row] as usize];
                if slot == NO_SLOT {
                    continue;
                }
                let slot = slot as usize;
                let total = frontier[slot].1;
                let st = &mut scan[slot];
                let v = col[row];
                if st.count >= cfg.min_samples_leaf && v > st.last && total.count - st.count >= cfg.min_samples_leaf {
                    let right_sum = total.sum - st.sum;
                    let right_n = (total.count - st.count) as f64;
                    let gain = st.sum * st.sum / st.count as f64 + right_sum * right_sum / right_n
                        - total.sum * total.sum / total.count as f64;
                    // Gains equal up to rounding count as ties, which keeps the
                    // earlier (lower feature, lower threshold) candidate.
                    let tol = 1e-10 * total.sum_sq;
                    if best[slot].is_none_or(|b| gain > b.gain + tol) {
                        best[slot] = Some(Candidate { gain, feature: f, threshold: st.last });
                    }
                }
                st.count += 1;
                st.sum += residual[row];
                st.last = v;
            }
        }

        let mut next = Vec::new();
        let mut split_any = false;
        for (slot, (id, stats)) in frontier.iter().enumerate() {
            let sse = stats.sum_sq - stats.sum * stats.sum / stats.count as f64;
            match best[slot] {
                Some(c) if c.gain > 1e-12 * sse.max(f64::MIN_POSITIVE) && c.gain > 0.0 => {
                    let left = nodes.len() as u32;
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes[*id as usize] =
                        TreeNode::Split { feature: c.feature, threshold: c.threshold, left, right: left + 1 };
                    next.push((left, Stats::default()));
                    next.push((left + 1, Stats::default()));
                    split_any = true;
                }
                _ => {}
            }
        }
        if !split_any {
            break;
        }
        // Route rows of split nodes and accumulate child statistics.
        let first_child = next[0].0;
        for row in 0..n {
            if let TreeNode::Split { feature, threshold, left, right } = nodes[leaf_of[row] as usize] {
                let child = if x[[row, feature]] <= threshold { left } else { right };
                leaf_of[row] = child;
                let st = &mut next[(child - first_child) as usize].1;
                let r = residual[row];
                st.count += 1;
                st.sum += r;
                st.sum_sq += r * r;
            }
        }
        frontier = next;
    }

    // Leaf values: mean residual of the rows that land there.
    let mut acc = vec![(0usize, 0.0f64); nodes.len()];
    for (row, &leaf) in leaf_of.iter().enumerate() {
        acc[leaf as usize].0 += 1;
        acc[leaf as usize].1 += residual[row];
    }
    for (node, (count, sum)) in nodes.iter_mut().zip(acc) {
        if let TreeNode::Leaf { value } = node {
            *value = if count > 0 { sum / count as f64 } else { 0.0 };
        }
    }
    Tree { nodes }
}
