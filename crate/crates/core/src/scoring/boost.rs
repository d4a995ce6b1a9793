//! Gradient boosting with second-order trees.
//!
//! Regression uses squared loss; classification uses logistic loss on the
//! raw score with probability `sigmoid(F)`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Features;
use super::logistic::{sigmoid, softplus};
use super::tree::{grow, GrowConfig, Tree};
use super::ScoringError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_child_weight: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    /// Row fraction sampled without replacement each round.
    pub subsample: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 5,
            min_child_weight: 1e-3,
            lambda: 1.0,
            subsample: 1.0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<(), ScoringError> {
        let bad = |m: &str| Err(ScoringError::Hyperparameter(m.to_string()));
        if self.n_rounds == 0 {
            return bad("gradient boosting needs n_rounds >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("gradient boosting learning_rate must lie in (0, 1]");
        }
        if self.min_samples_leaf == 0 {
            return bad("gradient boosting needs min_samples_leaf >= 1");
        }
        if !(self.lambda >= 0.0 && self.min_child_weight >= 0.0) {
            return bad("gradient boosting lambda and min_child_weight must be >= 0");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("gradient boosting subsample must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostLoss {
    Squared,
    Logistic,
}

impl BoostLoss {
    /// Gradient and hessian of the per-sample loss with respect to the raw score.
    pub fn grad_hess(self, raw: f64, y: f64) -> (f64, f64) {
        match self {
            BoostLoss::Squared => (raw - y, 1.0),
            BoostLoss::Logistic => {
                let p = sigmoid(raw);
                (p - y, (p * (1.0 - p)).max(1e-16))
            }
        }
    }

    pub fn loss(self, raw: f64, y: f64) -> f64 {
        match self {
            BoostLoss::Squared => 0.5 * (raw - y).powi(2),
            BoostLoss::Logistic => softplus(raw) - y * raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    pub loss: BoostLoss,
    pub base: f64,
    pub trees: Vec<Tree>,
}

impl Boosted {
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.base + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.loss {
            BoostLoss::Squared => self.raw(x),
            BoostLoss::Logistic => sigmoid(self.raw(x)),
        }
    }
}

/// Fitted model plus the weighted mean training loss after each round
/// (index 0 is the constant model).
pub struct BoostTrace {
    pub model: Boosted,
    pub losses: Vec<f64>,
}

pub fn fit(params: &BoostParams, loss: BoostLoss, x: &Features, y: &[f64], w: &[f64], seed: u64) -> BoostTrace {
    let n = x.n_rows();
    let columns = x.columns();
    let total_w: f64 = w.iter().sum();
    let mean_y = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / total_w;
    let base = match loss {
        BoostLoss::Squared => mean_y,
        BoostLoss::Logistic => {
            let p = mean_y.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
    };
    let cfg = GrowConfig {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        min_child_weight: params.min_child_weight,
        lambda: params.lambda,
        max_features: usize::MAX,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = vec![base; n];
    let mean_loss = |raw: &[f64]| (0..n).map(|i| w[i] * loss.loss(raw[i], y[i])).sum::<f64>() / total_w;
    let mut losses = vec![mean_loss(&raw)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let n_rows = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
    for _ in 0..params.n_rounds {
        for i in 0..n {
            let (g, h) = loss.grad_hess(raw[i], y[i]);
            grad[i] = w[i] * g;
            hess[i] = w[i] * h;
        }
        let rows: Vec<usize> = if n_rows < n {
            let mut r = sample(&mut rng, n, n_rows).into_vec();
            r.sort_unstable();
            r
        } else {
            (0..n).collect()
        };
        let mut tree = grow(&columns, rows, &grad, &hess, &cfg, &mut rng);
        tree.scale_leaves(params.learning_rate);
        for (i, r) in raw.iter_mut().enumerate() {
            *r += tree.predict(x.row(i));
        }
        losses.push(mean_loss(&raw));
        trees.push(tree);
    }
    BoostTrace {
        model: Boosted { loss, base, trees },
        losses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn squared_loss_decreases_monotonically() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0]).collect();
        let x = Features::from_rows(&rows);
        let w = vec![1.0; 100];
        let params = BoostParams {
            n_rounds: 100,
            max_depth: 2,
            min_samples_leaf: 1,
            lambda: 0.0,
            ..BoostParams::default()
        };
        let trace = fit(&params, BoostLoss::Squared, &x, &y, &w, 0);
        for pair in trace.losses.windows(2) {
            assert!(pair[1] <= pair[0], "{} -> {}", pair[0], pair[1]);
        }
        // losses are half the MSE; index 0 is the variance model
        let initial_var = 2.0 * trace.losses[0];
        let final_mse = 2.0 * trace.losses.last().unwrap();
        assert!(final_mse < initial_var / 100.0, "{final_mse} vs {initial_var}");
    }

    #[test]
    fn logistic_grad_hess_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let raw: f64 = rng.random_range(-6.0..6.0);
            let y = f64::from(u8::from(rng.random::<bool>()));
            let (g, h) = BoostLoss::Logistic.grad_hess(raw, y);
            let e = 1e-5;
            let l = |r: f64| BoostLoss::Logistic.loss(r, y);
            let fd_g = (l(raw + e) - l(raw - e)) / (2.0 * e);
            let g_at = |r: f64| BoostLoss::Logistic.grad_hess(r, y).0;
            let fd_h = (g_at(raw + e) - g_at(raw - e)) / (2.0 * e);
            assert!((fd_g - g).abs() <= 1e-5 * g.abs().max(1e-3), "g {g} fd {fd_g}");
            assert!((fd_h - h).abs() <= 1e-5 * h.abs().max(1e-3), "h {h} fd {fd_h}");
        }
    }
}
