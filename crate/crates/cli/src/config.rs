//! Experiment configuration, read from JSON.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use audit_core::allocation::{BudgetSpec, GroupRule};
use audit_core::fairness::{ConstraintKind, FairnessConstraint, DEFAULT_EPSILON};
use audit_core::population::{PopulationConfig, DEFAULT_BUCKETS, DEFAULT_TAU};
use audit_core::scoring::{ModelSpec, TargetKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub population: PopulationSource,
    /// Misreports above this many dollars count as a change.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Quantiles the regression training target is clipped to.
    #[serde(default = "default_winsorize")]
    pub winsorize: Option<[f64; 2]>,
    pub models: Vec<ModelRun>,
    #[serde(default = "BudgetSpec::rate")]
    pub budget: BudgetSpec,
    /// Costs the return-on-investment ranking sees. Reported costs always
    /// use the recorded per-record cost.
    #[serde(default)]
    pub costs: CostSource,
    /// Drives generation, the split and every model fit. Replaces the seed
    /// inside a generated population config.
    #[serde(default)]
    pub seed: u64,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_test_fraction() -> f64 {
    0.25
}

fn default_winsorize() -> Option<[f64; 2]> {
    Some([0.01, 0.99])
}

fn default_buckets() -> usize {
    DEFAULT_BUCKETS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationSource {
    Generate {
        #[serde(default)]
        config: PopulationConfig,
    },
    /// A population CSV; unbucketed files are split into income quantiles.
    Load {
        path: PathBuf,
        #[serde(default = "default_buckets")]
        n_buckets: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRun {
    pub label: String,
    pub model: ModelChoice,
    #[serde(default)]
    pub target: Target,
    #[serde(default)]
    pub fairness: FairnessOption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelChoice {
    /// Ranks by the true misreport.
    Oracle,
    Fitted {
        spec: ModelSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    Classification,
    Regression,
}

impl Target {
    pub fn kind(self, tau: f64) -> TargetKind {
        match self {
            Target::Classification => TargetKind::Classification { tau },
            Target::Regression => TargetKind::Regression,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum FairnessOption {
    #[default]
    None,
    /// Exponentiated-gradient reduction around the model.
    Reduction {
        constraint: ConstraintKind,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    /// Group-specific thresholds on the fitted model.
    Postprocess {
        constraint: ConstraintKind,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    /// Nondecreasing audit rates across income buckets.
    Monotone,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl FairnessOption {
    pub fn constraint(&self) -> Option<FairnessConstraint> {
        match *self {
            FairnessOption::Reduction { constraint, epsilon } | FairnessOption::Postprocess { constraint, epsilon } => {
                Some(FairnessConstraint::new(constraint).with_epsilon(epsilon))
            }
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            FairnessOption::None => "none".into(),
            FairnessOption::Reduction { constraint, .. } => format!("reduction_{}", constraint_name(*constraint)),
            FairnessOption::Postprocess { constraint, .. } => format!("postprocess_{}", constraint_name(*constraint)),
            FairnessOption::Monotone => "monotone".into(),
        }
    }
}

pub fn constraint_name(kind: ConstraintKind) -> &'static str {
    match kind {
        ConstraintKind::DemographicParity => "demographic_parity",
        ConstraintKind::EqualTpr => "equal_tpr",
        ConstraintKind::EqualizedOdds => "equalized_odds",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSource {
    /// Each record's own cost.
    #[default]
    Recorded,
    /// Training-set mean cost per (bucket, group) cell.
    CellMeans {
        #[serde(default)]
        rule: GroupRule,
        #[serde(default = "default_winsorize")]
        winsorize: Option<[f64; 2]>,
    },
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_quantiles(name: &str, q: Option<[f64; 2]>) -> Result<()> {
    match q {
        Some([lo, hi]) if !(0.0 <= lo && lo < hi && hi <= 1.0) => Err(config_error(format!(
            "{name} quantiles must satisfy 0 <= lower < upper <= 1"
        ))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical JSON form: every field spelled out, defaults included.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Checks everything that can be checked before any data is touched.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(config_error(format!("tau must be finite and >= 0, got {}", self.tau)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(config_error(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            )));
        }
        check_quantiles("winsorize", self.winsorize)?;
        if let CostSource::CellMeans { winsorize, .. } = self.costs {
            check_quantiles("cost winsorize", winsorize)?;
        }
        self.budget.validate().map_err(|e| config_error(e.to_string()))?;
        match &self.population {
            PopulationSource::Generate { config } => config.validate().map_err(|e| config_error(e.to_string()))?,
            PopulationSource::Load { n_buckets, .. } if *n_buckets < 2 => {
                return Err(config_error("n_buckets must be >= 2"));
            }
            PopulationSource::Load { .. } => {}
        }
        if self.models.is_empty() {
            return Err(config_error("at least one model is required"));
        }
        let mut labels = HashSet::new();
        for m in &self.models {
            if m.label.trim().is_empty() {
                return Err(config_error("model labels must be non-empty"));
            }
            if !labels.insert(m.label.as_str()) {
                return Err(config_error(format!("duplicate model label {:?}", m.label)));
            }
            let ctx = |msg: String| config_error(format!("model {:?}: {msg}", m.label));
            match &m.model {
                ModelChoice::Oracle if m.fairness != FairnessOption::None && m.fairness != FairnessOption::Monotone => {
                    return Err(ctx("the oracle cannot be fairness-wrapped".into()));
                }
                ModelChoice::Oracle => {}
                ModelChoice::Fitted { spec } => spec.validate().map_err(|e| ctx(e.to_string()))?,
            }
            if let Some(c) = m.fairness.constraint() {
                c.validate().map_err(|e| ctx(e.to_string()))?;
                if m.target != Target::Classification {
                    return Err(ctx("fairness constraints need a classification target".into()));
                }
            }
            if m.fairness == FairnessOption::Monotone && !matches!(self.budget, BudgetSpec::Rate { .. }) {
                return Err(ctx("monotone allocation needs a rate budget".into()));
            }
            if m.fairness == FairnessOption::Monotone {
                if let BudgetSpec::Rate { k } = self.budget {
                    if k > 1.0 {
                        return Err(ctx(format!("rate {k} exceeds 1")));
                    }
                }
            }
        }
        Ok(())
    }
}
