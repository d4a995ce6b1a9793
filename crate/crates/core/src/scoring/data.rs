use crate::population::{misreport_flag, Population};

use super::{ScoringError, TargetKind};

/// Row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Features {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Self {
        assert_eq!(data.len(), n_rows * n_cols);
        Self { data, n_rows, n_cols }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(data, rows.len(), n_cols)
    }

    pub fn from_population(pop: &Population) -> Self {
        let n_cols = pop.feature_count();
        let data = pop.records().iter().flat_map(|r| r.features.iter().copied()).collect();
        Self::new(data, pop.len(), n_cols)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    /// Column-major copy, used by the tree learners.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_cols)
            .map(|j| (0..self.n_rows).map(|i| self.get(i, j)).collect())
            .collect()
    }

    pub fn check_finite(&self) -> Result<(), ScoringError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(ScoringError::Data(format!(
                "non-finite feature at row {}, column {}",
                p / self.n_cols.max(1),
                p % self.n_cols.max(1)
            ))),
            None => Ok(()),
        }
    }
}

/// Training targets for `target`: 0/1 labels or raw misreport amounts.
pub fn targets(pop: &Population, target: TargetKind) -> Vec<f64> {
    pop.records()
        .iter()
        .map(|r| match target {
            TargetKind::Classification { tau } => f64::from(u8::from(misreport_flag(r.misreport, tau))),
            TargetKind::Regression => r.misreport,
        })
        .collect()
}

/// Weights rescaled to mean one.
pub fn unit_mean_weights(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let scale = weights.len() as f64 / total;
    weights.iter().map(|w| w * scale).collect()
}
