// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::seed;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means ⌈d/3⌉.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_trees: 200,
            mtry: None,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

struct Builder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    mtry: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn mean(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64
    }

    /// Best (feature, threshold, sse-reduction) among `mtry` random features.
    fn best_split(&self, idx: &mut [usize], rng: &mut seed::Rng) -> Option<(usize, f64)> {
        let n = idx.len();
        let d = self.x.ncols();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mut best: Option<(usize, f64, f64)> = None;
        for f in sample(rng, d, self.mtry.min(d)).into_iter() {
            idx.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[idx[k]];
                let nl = k + 1;
                let (xa, xb) = (self.x[(idx[k], f)], self.x[(idx[k + 1], f)]);
                if nl < self.min_leaf || n - nl < self.min_leaf || xa == xb {
                    continue;
                }
                let right_sum = total - left_sum;
                // Maximizing this is equivalent to maximizing the SSE reduction.
                let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64;
                if best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((f, 0.5 * (xa + xb), score));
                }
            }
        }
        let (f, t, score) = best?;
        let gain = score - total * total / n as f64;
        (gain > 1e-12 * (1.0 + score.abs())).then_some((f, t))
    }

    fn grow(&mut self, idx: &mut [usize], rng: &mut seed::Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.mean(idx)));
        if idx.len() < 2 * self.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(idx, rng) else {
            return id;
        };
        idx.sort_by(|&a, &b| {
            (self.x[(a, feature)] > threshold)
                .cmp(&(self.x[(b, feature)] > threshold))
                .then(a.cmp(&b))
        });
        let cut = idx
            .iter()
            .position(|&i| self.x[(i, feature)] > threshold)
            .unwrap_or(idx.len());
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
}

impl RandomForest {
    /// Bagged CART regression trees; tree `t` draws from its own substream
    /// of `seed`, so the result does not depend on thread scheduling.
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &RfConfig, seed: u64) -> RandomForest {
        let (n, d) = x.shape();
        let mtry = cfg.mtry.unwrap_or(d.div_ceil(3)).max(1);
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::substream(seed, &["tree", &t.to_string()]);
                let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut b = Builder {
                    x,
                    y,
                    mtry,
                    min_leaf: cfg.min_leaf.max(1),
                    nodes: Vec::new(),
                };
                b.grow(&mut idx, &mut rng);
                Tree { nodes: b.nodes }
            })
            .collect();
        RandomForest { trees }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut row = vec![0.0; x.ncols()];
        (0..x.nrows())
            .map(|i| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = x[(i, j)];
                }
                self.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>() / self.trees.len() as f64
            })
            .collect()
    }
}
