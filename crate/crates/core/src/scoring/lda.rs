//! Two-class linear discriminant analysis with a shared covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::data::Features;
use super::logistic::LinearModel;
use super::ScoringError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaParams {
    /// Ridge added to the pooled covariance, relative to its mean diagonal.
    pub shrinkage: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self { shrinkage: 1e-6 }
    }
}

impl LdaParams {
    pub fn validate(&self) -> Result<(), ScoringError> {
        if !(self.shrinkage.is_finite() && self.shrinkage >= 0.0) {
            return Err(ScoringError::Hyperparameter("lda shrinkage must be >= 0".into()));
        }
        Ok(())
    }
}

/// Posterior `P(y = 1 | x)` under Gaussian classes with pooled covariance is
/// logistic in `x`; the fit returns those linear coefficients.
pub fn fit(params: &LdaParams, x: &Features, y: &[f64], w: &[f64]) -> Result<LinearModel, ScoringError> {
    let d = x.n_cols();
    let mut mean = [DVector::<f64>::zeros(d), DVector::<f64>::zeros(d)];
    let mut mass = [0.0_f64; 2];
    for i in 0..x.n_rows() {
        let c = usize::from(y[i] > 0.5);
        mass[c] += w[i];
        for j in 0..d {
            mean[c][j] += w[i] * x.get(i, j);
        }
    }
    if mass[0] <= 0.0 || mass[1] <= 0.0 {
        return Err(ScoringError::DegenerateLabels);
    }
    for c in 0..2 {
        mean[c] /= mass[c];
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for i in 0..x.n_rows() {
        let c = usize::from(y[i] > 0.5);
        let diff: Vec<f64> = (0..d).map(|j| x.get(i, j) - mean[c][j]).collect();
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += w[i] * diff[a] * diff[b];
            }
        }
    }
    cov /= mass[0] + mass[1];
    let ridge = params.shrinkage * (cov.trace() / d.max(1) as f64).max(1e-12);
    for a in 0..d {
        cov[(a, a)] += ridge;
    }
    let delta = &mean[1] - &mean[0];
    let a = match cov.clone().cholesky() {
        Some(ch) => ch.solve(&delta),
        None => cov
            .lu()
            .solve(&delta)
            .ok_or_else(|| ScoringError::Numerical("singular covariance in LDA".into()))?,
    };
    let mid = (&mean[0] + &mean[1]) * 0.5;
    let intercept = -mid.dot(&a) + (mass[1] / mass[0]).ln();
    let mut coef = Vec::with_capacity(d + 1);
    coef.push(intercept);
    coef.extend(a.iter().copied());
    Ok(LinearModel { coef })
}
