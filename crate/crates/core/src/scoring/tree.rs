//! Second-order regression trees with exact greedy splits.
//!
//! Every learner in this crate grows the same kind of tree: each sample
//! carries a gradient `g` and hessian `h` (already multiplied by its weight),
//! a split maximises `G_L²/(H_L+λ) + G_R²/(H_R+λ) - G²/(H+λ)` and a leaf
//! predicts `-G/(H+λ)`. With `g = -w·y`, `h = w`, `λ = 0` this is a
//! weighted least-squares (variance reduction) tree whose leaves are
//! weighted means of `y`.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GrowConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
    /// Features examined per split; `>= n_features` means all.
    pub max_features: usize,
}

struct Pending {
    slot: usize,
    rows: Vec<usize>,
    depth: usize,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn leaf_score(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom > 0.0 {
        g * g / denom
    } else {
        0.0
    }
}

fn leaf_value(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom > 0.0 {
        -g / denom
    } else {
        0.0
    }
}

/// Grows one tree over `rows` (indices into `columns`, `grad`, `hess`).
pub fn grow<R: Rng>(
    columns: &[Vec<f64>],
    rows: Vec<usize>,
    grad: &[f64],
    hess: &[f64],
    cfg: &GrowConfig,
    rng: &mut R,
) -> Tree {
    let n_features = columns.len();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut stack = vec![Pending {
        slot: 0,
        rows,
        depth: 0,
    }];
    while let Some(Pending { slot, rows, depth }) = stack.pop() {
        let g: f64 = rows.iter().map(|&r| grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| hess[r]).sum();
        let can_split = depth < cfg.max_depth && rows.len() >= 2 * cfg.min_samples_leaf.max(1);
        let choice = if can_split {
            let features: Vec<usize> = if cfg.max_features >= n_features {
                (0..n_features).collect()
            } else {
                let mut f = sample(rng, n_features, cfg.max_features.max(1)).into_vec();
                f.sort_unstable();
                f
            };
            best_split(columns, &rows, grad, hess, g, h, &features, cfg)
        } else {
            None
        };
        match choice {
            None => {
                nodes[slot] = Node::Leaf {
                    value: leaf_value(g, h, cfg.lambda),
                }
            }
            Some(s) => {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[slot] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
                stack.push(Pending {
                    slot: right,
                    rows: s.right,
                    depth: depth + 1,
                });
                stack.push(Pending {
                    slot: left,
                    rows: s.left,
                    depth: depth + 1,
                });
            }
        }
    }
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn best_split(
    columns: &[Vec<f64>],
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    g_total: f64,
    h_total: f64,
    features: &[usize],
    cfg: &GrowConfig,
) -> Option<SplitChoice> {
    let parent = leaf_score(g_total, h_total, cfg.lambda);
    let min_gain = 1e-12 * parent.abs().max(1e-300);
    let min_leaf = cfg.min_samples_leaf.max(1);
    let mut best: Option<(f64, usize, usize, f64)> = None; // gain, feature, position, threshold
    let mut best_order: Vec<usize> = Vec::new();
    let mut order = rows.to_vec();
    for &f in features {
        let col = &columns[f];
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        let mut gl = 0.0;
        let mut hl = 0.0;
        for pos in 0..order.len() - 1 {
            let r = order[pos];
            gl += grad[r];
            hl += hess[r];
            let n_left = pos + 1;
            if n_left < min_leaf {
                continue;
            }
            if order.len() - n_left < min_leaf {
                break;
            }
            let (a, b) = (col[r], col[order[pos + 1]]);
            if a == b {
                continue;
            }
            let hr = h_total - hl;
            if hl < cfg.min_child_weight || hr < cfg.min_child_weight {
                continue;
            }
            let gain = leaf_score(gl, hl, cfg.lambda) + leaf_score(g_total - gl, hr, cfg.lambda) - parent;
            if gain > min_gain && best.is_none_or(|(bg, ..)| gain > bg) {
                let mut threshold = 0.5 * (a + b);
                if threshold >= b {
                    threshold = a;
                }
                best = Some((gain, f, pos, threshold));
                best_order.clone_from(&order);
            }
        }
    }
    best.map(|(_, feature, pos, threshold)| {
        let right = best_order.split_off(pos + 1);
        SplitChoice {
            feature,
            threshold,
            left: best_order,
            right,
        }
    })
}
