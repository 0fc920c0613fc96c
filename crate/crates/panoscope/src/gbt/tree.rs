//! Regression trees fit to second-order gradients.

use serde::{Deserialize, Serialize};

/// One node of a binary decision tree, stored in a flat arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Raw output for one sample; `x` must be in training feature order.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn max_depth(&self) -> usize {
        fn depth(nodes: &[TreeNode], idx: usize) -> usize {
            match &nodes[idx] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + depth(nodes, *left).max(depth(nodes, *right))
                }
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            depth(&self.nodes, 0)
        }
    }
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub l2_reg: f64,
}

pub(crate) struct GrowContext<'a> {
    /// Column-major feature matrix.
    pub columns: &'a [Vec<f64>],
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub params: GrowParams,
    /// Split gain accumulated per feature index.
    pub gain_by_feature: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

const MIN_GAIN: f64 = 1e-12;

impl<'a> GrowContext<'a> {
    pub fn grow(&mut self, sample_indices: Vec<usize>) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        self.grow_node(&mut tree, sample_indices, 0);
        tree
    }

    fn leaf_weight(&self, g_sum: f64, h_sum: f64) -> f64 {
        -g_sum / (h_sum + self.params.l2_reg)
    }

    fn grow_node(&mut self, tree: &mut Tree, indices: Vec<usize>, depth: usize) -> usize {
        let g_sum: f64 = indices.iter().map(|&i| self.grad[i]).sum();
        let h_sum: f64 = indices.iter().map(|&i| self.hess[i]).sum();

        let split = if depth < self.params.max_depth {
            self.best_split(&indices, g_sum, h_sum)
        } else {
            None
        };

        match split {
            Some(best) => {
                self.gain_by_feature[best.feature] += best.gain;
                let idx = tree.nodes.len();
                tree.nodes.push(TreeNode::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left: 0,
                    right: 0,
                });
                let left = self.grow_node(tree, best.left, depth + 1);
                let right = self.grow_node(tree, best.right, depth + 1);
                if let TreeNode::Split {
                    left: l, right: r, ..
                } = &mut tree.nodes[idx]
                {
                    *l = left;
                    *r = right;
                }
                idx
            }
            None => {
                let idx = tree.nodes.len();
                tree.nodes.push(TreeNode::Leaf {
                    weight: self.leaf_weight(g_sum, h_sum),
                });
                idx
            }
        }
    }

    /// Exact greedy scan over every midpoint between consecutive distinct
    /// values. Ties keep the first candidate found (lowest feature index,
    /// then lowest threshold).
    fn best_split(&self, indices: &[usize], g_sum: f64, h_sum: f64) -> Option<BestSplit> {
        if indices.len() < 2 {
            return None;
        }
        let lambda = self.params.l2_reg;
        let parent_score = g_sum * g_sum / (h_sum + lambda);
        let mut best: Option<(usize, f64, f64, usize)> = None; // feature, threshold, gain, left count

        let mut sorted: Vec<usize> = Vec::with_capacity(indices.len());
        for (feature, column) in self.columns.iter().enumerate() {
            sorted.clear();
            sorted.extend_from_slice(indices);
            sorted.sort_by(|&a, &b| {
                column[a]
                    .partial_cmp(&column[b])
                    .expect("non-finite feature value")
                    .then(a.cmp(&b))
            });

            let mut gl = 0.0;
            let mut hl = 0.0;
            for pos in 0..sorted.len() - 1 {
                gl += self.grad[sorted[pos]];
                hl += self.hess[sorted[pos]];
                let a = column[sorted[pos]];
                let b = column[sorted[pos + 1]];
                if a == b {
                    continue;
                }
                let hr = h_sum - hl;
                if hl < self.params.min_child_weight || hr < self.params.min_child_weight {
                    continue;
                }
                let gr = g_sum - gl;
                let gain =
                    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_score);
                if gain <= MIN_GAIN {
                    continue;
                }
                let improves = match &best {
                    Some((_, _, best_gain, _)) => gain > *best_gain,
                    None => true,
                };
                if improves {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold <= a {
                        threshold = b;
                    }
                    best = Some((feature, threshold, gain, pos + 1));
                }
            }
        }

        best.map(|(feature, threshold, gain, _)| {
            let column = &self.columns[feature];
            let mut left = Vec::new();
            let mut right = Vec::new();
            for &i in indices {
                if column[i] < threshold {
                    left.push(i);
                } else {
                    right.push(i);
                }
            }
            BestSplit {
                feature,
                threshold,
                gain,
                left,
                right,
            }
        })
    }
}
