//! Group-fairness interventions across income buckets and the disparity
//! measurements used to audit them.

mod disparity;
mod postprocess;
mod reduction;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::population::PopulationError;
use crate::scoring::ScoringError;

pub use disparity::{constraint_disparity, threshold_decisions, BucketRates, DisparityGaps, DisparityReport};
pub use postprocess::{postprocess_thresholds, GroupThresholds, Threshold};
pub use reduction::{fit_reduction, Mixture, ReductionFit, ReductionParams};

/// Default slack on every fairness constraint.
pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("population must be bucketed")]
    NotBucketed,
    #[error("bucket {bucket} has no {missing} labels")]
    DegenerateGroup { bucket: usize, missing: &'static str },
    #[error("post-processing needs a classification scorer")]
    NotClassification,
    #[error("{got} decisions for {expected} records")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("linear program failed: {0}")]
    Lp(#[from] microlp::Error),
    #[error("malformed disparity table: {0}")]
    Parse(String),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = FairnessError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Equal selection rates.
    DemographicParity,
    /// Equal true positive rates.
    EqualTpr,
    /// Equal true and false positive rates.
    EqualizedOdds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessConstraint {
    pub kind: ConstraintKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl FairnessConstraint {
    pub fn new(kind: ConstraintKind) -> Self {
        Self {
            kind,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(FairnessError::InvalidParameter(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Label classes the constraint conditions on: `None` is everyone,
    /// `Some(true)` the misreporters, `Some(false)` the compliant.
    pub(crate) fn events(&self) -> &'static [Option<bool>] {
        match self.kind {
            ConstraintKind::DemographicParity => &[None],
            ConstraintKind::EqualTpr => &[Some(true)],
            ConstraintKind::EqualizedOdds => &[Some(false), Some(true)],
        }
    }
}
