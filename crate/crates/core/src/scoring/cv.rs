//! K-fold cross-validation and a small fixed hyperparameter grid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    data, fit_scorer, score, BoostParams, ForestParams, LogisticParams, ModelFamily, ModelSpec, Result, ScoringError,
    TargetKind,
};
use crate::population::Population;

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Weighted mean squared error per held-out fold (Brier score for
    /// classifiers).
    pub fold_losses: Vec<f64>,
    pub mean_loss: f64,
}

/// Fits on `k − 1` folds and scores the held-out fold, for each fold.
pub fn cross_validate(spec: &ModelSpec, pop: &Population, target: TargetKind, k: usize, seed: u64) -> Result<CvResult> {
    if k < 2 || k > pop.len() {
        return Err(ScoringError::Hyperparameter(format!(
            "need 2 <= k <= {} folds, got {k}",
            pop.len()
        )));
    }
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; pop.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    let records = pop.records();
    let mut fold_losses = Vec::with_capacity(k);
    for f in 0..k {
        let part = |held: bool| {
            Population::new(
                records
                    .iter()
                    .zip(&fold_of)
                    .filter(|(_, &g)| (g == f) == held)
                    .map(|(r, _)| r.clone())
                    .collect(),
            )
        };
        let (train, test) = (part(false)?, part(true)?);
        let scorer = fit_scorer(spec, &train, target)?;
        let pred = score(&scorer, &test)?;
        let y = data::targets(&test, target);
        let w = test.weights();
        let loss = pred
            .scores
            .iter()
            .zip(&y)
            .zip(&w)
            .map(|((p, y), w)| w * (p - y).powi(2))
            .sum::<f64>()
            / test.total_weight();
        fold_losses.push(loss);
    }
    let mean_loss = fold_losses.iter().sum::<f64>() / k as f64;
    Ok(CvResult { fold_losses, mean_loss })
}

/// Cross-validates every candidate; returns the index of the lowest mean
/// loss (first on ties) and all results.
pub fn grid_search(
    candidates: &[ModelSpec],
    pop: &Population,
    target: TargetKind,
    k: usize,
    seed: u64,
) -> Result<(usize, Vec<CvResult>)> {
    if candidates.is_empty() {
        return Err(ScoringError::Hyperparameter("empty grid".into()));
    }
    let results = candidates
        .iter()
        .map(|c| cross_validate(c, pop, target, k, seed))
        .collect::<Result<Vec<_>>>()?;
    let best = (0..results.len())
        .min_by(|&a, &b| results[a].mean_loss.total_cmp(&results[b].mean_loss))
        .unwrap_or(0);
    Ok((best, results))
}

/// A small fixed grid around the family defaults.
pub fn default_grid(family: &ModelFamily) -> Vec<ModelSpec> {
    let specs: Vec<ModelFamily> = match family {
        ModelFamily::LinearDiscriminant(p) => vec![ModelFamily::LinearDiscriminant(p.clone())],
        ModelFamily::Logistic(_) => [1e-6, 1e-4, 1e-2]
            .into_iter()
            .map(|l2| {
                ModelFamily::Logistic(LogisticParams {
                    l2,
                    ..Default::default()
                })
            })
            .collect(),
        ModelFamily::RandomForest(_) => [(6, 5), (10, 5), (14, 10)]
            .into_iter()
            .map(|(max_depth, min_samples_leaf)| {
                ModelFamily::RandomForest(ForestParams {
                    max_depth,
                    min_samples_leaf,
                    ..Default::default()
                })
            })
            .collect(),
        ModelFamily::GradientBoost(_) => [(2, 0.1), (3, 0.1), (4, 0.05)]
            .into_iter()
            .map(|(max_depth, learning_rate)| {
                ModelFamily::GradientBoost(BoostParams {
                    max_depth,
                    learning_rate,
                    ..Default::default()
                })
            })
            .collect(),
    };
    specs.into_iter().map(ModelSpec::new).collect()
}
