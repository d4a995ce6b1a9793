//! L2-regularised weighted logistic regression fitted by Newton's method.
//!
//! The objective is the weight-normalised mean log loss
//! `(1/W) Σ w_i [log(1 + e^{z_i}) - y_i z_i] + (l2/2)|β|²`, intercept
//! unpenalised. Because the loss is normalised by the total weight, fitting
//! with integer weights and fitting on the duplicated rows share one optimum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::data::Features;
use super::ScoringError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

impl LogisticParams {
    pub fn validate(&self) -> Result<(), ScoringError> {
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(ScoringError::Hyperparameter("logistic l2 must be >= 0".into()));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(ScoringError::Hyperparameter(
                "logistic max_iter must be >= 1 and tol > 0".into(),
            ));
        }
        Ok(())
    }
}

/// `coef[0]` is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
}

impl LinearModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.coef[0] + self.coef[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Objective value and gradient at `beta` (intercept first).
pub fn loss_and_gradient(beta: &[f64], x: &Features, y: &[f64], w: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let d = x.n_cols();
    let total: f64 = w.iter().sum();
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for i in 0..x.n_rows() {
        let row = x.row(i);
        let z = beta[0] + beta[1..].iter().zip(row).map(|(b, v)| b * v).sum::<f64>();
        loss += w[i] * (softplus(z) - y[i] * z);
        let r = w[i] * (sigmoid(z) - y[i]);
        grad[0] += r;
        for j in 0..d {
            grad[j + 1] += r * row[j];
        }
    }
    loss /= total;
    for g in grad.iter_mut() {
        *g /= total;
    }
    for j in 1..=d {
        loss += 0.5 * l2 * beta[j] * beta[j];
        grad[j] += l2 * beta[j];
    }
    (loss, grad)
}

fn hessian(beta: &[f64], x: &Features, w: &[f64], l2: f64) -> DMatrix<f64> {
    let d = x.n_cols();
    let total: f64 = w.iter().sum();
    let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut xt = vec![0.0; d + 1];
    for i in 0..x.n_rows() {
        let row = x.row(i);
        xt[0] = 1.0;
        xt[1..].copy_from_slice(row);
        let z = beta[0] + beta[1..].iter().zip(row).map(|(b, v)| b * v).sum::<f64>();
        let p = sigmoid(z);
        let s = w[i] * p * (1.0 - p) / total;
        for a in 0..=d {
            let sa = s * xt[a];
            for b in a..=d {
                h[(a, b)] += sa * xt[b];
            }
        }
    }
    for a in 0..=d {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    for j in 1..=d {
        h[(j, j)] += l2;
    }
    h[(0, 0)] += 1e-12;
    h
}

pub fn fit(params: &LogisticParams, x: &Features, y: &[f64], w: &[f64]) -> Result<LinearModel, ScoringError> {
    let d = x.n_cols();
    let mut beta = vec![0.0; d + 1];
    let (mut loss, mut grad) = loss_and_gradient(&beta, x, y, w, params.l2);
    for _ in 0..params.max_iter {
        let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if gmax < params.tol {
            break;
        }
        let h = hessian(&beta, x, w, params.l2);
        let g = DVector::from_vec(grad.clone());
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => h
                .lu()
                .solve(&g)
                .ok_or_else(|| ScoringError::Numerical("singular logistic Hessian".into()))?,
        };
        // backtracking line search on the Newton direction
        let mut t = 1.0;
        let slope: f64 = -g.dot(&step);
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b - t * s).collect();
            let (l_new, g_new) = loss_and_gradient(&cand, x, y, w, params.l2);
            if l_new <= loss + 1e-4 * t * slope || (l_new - loss).abs() <= 1e-15 * loss.abs() {
                beta = cand;
                loss = l_new;
                grad = g_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(ScoringError::Numerical("logistic fit diverged".into()));
    }
    Ok(LinearModel { coef: beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_toy_is_classified_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..200 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            let label = a + 2.0 * b > 0.1;
            // keep a margin between the classes
            if (a + 2.0 * b - 0.1).abs() < 0.05 {
                continue;
            }
            rows.push(vec![a, b]);
            y.push(f64::from(u8::from(label)));
        }
        let x = Features::from_rows(&rows);
        let w = vec![1.0; y.len()];
        let m = fit(&LogisticParams::default(), &x, &y, &w).unwrap();
        let correct = (0..y.len())
            .filter(|&i| (m.probability(x.row(i)) >= 0.5) == (y[i] == 1.0))
            .count();
        assert_eq!(correct, y.len());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(3..12);
            let d = rng.random_range(1..4);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let x = Features::from_rows(&rows);
            let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
            let beta: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let l2 = 0.1;
            let (_, grad) = loss_and_gradient(&beta, &x, &y, &w, l2);
            for j in 0..=d {
                let h = 1e-5;
                let mut up = beta.clone();
                up[j] += h;
                let mut dn = beta.clone();
                dn[j] -= h;
                let fd =
                    (loss_and_gradient(&up, &x, &y, &w, l2).0 - loss_and_gradient(&dn, &x, &y, &w, l2).0) / (2.0 * h);
                let rel = (fd - grad[j]).abs() / grad[j].abs().max(1e-8);
                assert!(
                    rel < 1e-5 || (fd - grad[j]).abs() < 1e-10,
                    "j={j} fd={fd} g={}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn integer_weights_match_duplicated_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)])
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| f64::from(u8::from(r[0] - r[1] + rng.random_range(-1.0..1.0) > 0.0)))
            .collect();
        let w: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { 2.0 } else { 1.0 }).collect();
        let mut dup_rows = Vec::new();
        let mut dup_y = Vec::new();
        for i in 0..n {
            for _ in 0..w[i] as usize {
                dup_rows.push(rows[i].clone());
                dup_y.push(y[i]);
            }
        }
        let p = LogisticParams::default();
        let a = fit(&p, &Features::from_rows(&rows), &y, &w).unwrap();
        let b = fit(&p, &Features::from_rows(&dup_rows), &dup_y, &vec![1.0; dup_y.len()]).unwrap();
        for (u, v) in a.coef.iter().zip(&b.coef) {
            assert!((u - v).abs() <= 1e-6, "{u} vs {v}");
        }
    }
}
