//! Bagged least-squares trees.
//!
//! For classification each tree's leaf holds the weighted share of positive
//! samples, and the forest probability is the mean of those per-tree
//! positive shares (a soft vote).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::Features;
use super::tree::{grow, GrowConfig, Tree};
use super::ScoringError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` picks `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    /// Bootstrap sample size as a fraction of the training rows.
    pub bagging_fraction: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 10,
            min_samples_leaf: 5,
            max_features: None,
            bagging_fraction: 1.0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ScoringError> {
        let bad = |m: &str| Err(ScoringError::Hyperparameter(m.to_string()));
        if self.n_trees == 0 {
            return bad("random forest needs n_trees >= 1");
        }
        if self.min_samples_leaf == 0 {
            return bad("random forest needs min_samples_leaf >= 1");
        }
        if self.max_features == Some(0) {
            return bad("random forest max_features must be >= 1");
        }
        if !(self.bagging_fraction > 0.0 && self.bagging_fraction <= 1.0) {
            return bad("random forest bagging_fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Seed for tree `t`, derived only from the forest seed.
fn tree_seed(seed: u64, t: usize) -> u64 {
    seed ^ (t as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn fit(params: &ForestParams, x: &Features, y: &[f64], w: &[f64], seed: u64) -> Forest {
    let n = x.n_rows();
    let d = x.n_cols();
    let columns = x.columns();
    let max_features = params
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let cfg = GrowConfig {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        min_child_weight: 0.0,
        lambda: 0.0,
        max_features,
    };
    let draws = ((n as f64 * params.bagging_fraction).round() as usize).max(1);

    // Each tree only depends on its own derived seed, so the parallel result
    // equals the serial one.
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, t));
            let mut counts = vec![0u32; n];
            for _ in 0..draws {
                counts[rng.random_range(0..n)] += 1;
            }
            let mut grad = vec![0.0; n];
            let mut hess = vec![0.0; n];
            let mut rows = Vec::new();
            for i in 0..n {
                if counts[i] > 0 {
                    let m = f64::from(counts[i]) * w[i];
                    grad[i] = -m * y[i];
                    hess[i] = m;
                    rows.push(i);
                }
            }
            grow(&columns, rows, &grad, &hess, &cfg, &mut rng)
        })
        .collect();
    Forest { trees }
}
