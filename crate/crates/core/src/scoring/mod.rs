//! Predictive scoring: fitted models mapping records to a misreport
//! probability (classification) or an expected misreport amount
//! (regression).

pub mod boost;
mod cv;
pub mod data;
pub mod forest;
pub mod lda;
pub mod logistic;
pub mod tree;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fairness::{GroupThresholds, Mixture};
use crate::population::{weighted_subsample, Population, PopulationError, TaxpayerRecord, DEFAULT_TAU};

pub use boost::{BoostLoss, BoostParams, Boosted};
pub use cv::{cross_validate, default_grid, grid_search, CvResult};
pub use data::Features;
pub use forest::{Forest, ForestParams};
pub use lda::LdaParams;
pub use logistic::{LinearModel, LogisticParams};

/// Current version of the serialized scorer document.
pub const SCORER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("invalid data: {0}")]
    Data(String),
    #[error("feature count mismatch: scorer expects {expected}, population has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameters: {0}")]
    Hyperparameter(String),
    #[error("{family} does not support {target} targets")]
    UnsupportedTarget { family: &'static str, target: &'static str },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("scorer needs a bucketed population")]
    NotBucketed,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("unsupported scorer format version {0}")]
    FormatVersion(u32),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ScoringError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    /// Labels `1[δ > tau]`.
    Classification { tau: f64 },
    /// Raw misreport amounts.
    Regression,
}

impl TargetKind {
    pub fn classification() -> Self {
        TargetKind::Classification { tau: DEFAULT_TAU }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, TargetKind::Classification { .. })
    }

    fn name(&self) -> &'static str {
        match self {
            TargetKind::Classification { .. } => "classification",
            TargetKind::Regression => "regression",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    LinearDiscriminant(LdaParams),
    Logistic(LogisticParams),
    RandomForest(ForestParams),
    GradientBoost(BoostParams),
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::LinearDiscriminant(_) => "linear_discriminant",
            ModelFamily::Logistic(_) => "logistic",
            ModelFamily::RandomForest(_) => "random_forest",
            ModelFamily::GradientBoost(_) => "gradient_boost",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelFamily::LinearDiscriminant(p) => p.validate(),
            ModelFamily::Logistic(p) => p.validate(),
            ModelFamily::RandomForest(p) => p.validate(),
            ModelFamily::GradientBoost(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Sampling weights enter the loss directly.
    NativeWeights,
    /// Fit on `n` unit-weight rows drawn with probability `w / W`.
    Subsample(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: ModelFamily,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fit_mode")]
    pub fit_mode: FitMode,
}

fn default_fit_mode() -> FitMode {
    FitMode::NativeWeights
}

impl ModelSpec {
    pub fn new(family: ModelFamily) -> Self {
        Self {
            family,
            seed: 0,
            fit_mode: FitMode::NativeWeights,
        }
    }

    /// LDA fitted on a one-million-row weighted resample.
    pub fn linear_discriminant() -> Self {
        Self {
            fit_mode: FitMode::Subsample(1_000_000),
            ..Self::new(ModelFamily::LinearDiscriminant(LdaParams::default()))
        }
    }

    pub fn logistic() -> Self {
        Self::new(ModelFamily::Logistic(LogisticParams::default()))
    }

    pub fn random_forest() -> Self {
        Self::new(ModelFamily::RandomForest(ForestParams::default()))
    }

    pub fn gradient_boost() -> Self {
        Self::new(ModelFamily::GradientBoost(BoostParams::default()))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_fit_mode(mut self, mode: FitMode) -> Self {
        self.fit_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let FitMode::Subsample(0) = self.fit_mode {
            return Err(ScoringError::Hyperparameter("subsample size must be >= 1".into()));
        }
        self.family.validate()
    }
}

/// Fitted parameters of any supported model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Constant { value: f64 },
    LinearDiscriminant(LinearModel),
    Logistic(LinearModel),
    RandomForest(Forest),
    GradientBoost(Boosted),
    Mixture(Mixture),
    GroupThresholds(GroupThresholds),
}

impl FittedModel {
    /// Model output for one record: a probability for classifiers, an amount
    /// for regressors.
    pub fn predict(&self, record: &TaxpayerRecord) -> f64 {
        let x = &record.features;
        match self {
            FittedModel::Constant { value } => *value,
            FittedModel::LinearDiscriminant(m) | FittedModel::Logistic(m) => m.probability(x),
            FittedModel::RandomForest(f) => f.predict(x),
            FittedModel::GradientBoost(b) => b.predict(x),
            FittedModel::Mixture(m) => m.predict(record),
            FittedModel::GroupThresholds(g) => g.predict(record),
        }
    }

    /// Bucket count the model's decisions depend on, if any.
    pub fn required_buckets(&self) -> Option<usize> {
        match self {
            FittedModel::GroupThresholds(g) => Some(g.n_groups()),
            FittedModel::Mixture(m) => m.components.iter().find_map(|(_, c)| c.required_buckets()),
            _ => None,
        }
    }
}

/// A fitted model together with the target it predicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorer {
    pub family: String,
    pub target: TargetKind,
    pub feature_count: usize,
    pub model: FittedModel,
}

#[derive(Serialize, Deserialize)]
struct ScorerDocument {
    format_version: u32,
    scorer: Scorer,
}

impl Scorer {
    pub fn new(family: impl Into<String>, target: TargetKind, feature_count: usize, model: FittedModel) -> Self {
        Self {
            family: family.into(),
            target,
            feature_count,
            model,
        }
    }

    /// A scorer that returns `value` for every record.
    pub fn constant(value: f64, target: TargetKind, feature_count: usize) -> Self {
        Self::new("constant", target, feature_count, FittedModel::Constant { value })
    }

    pub fn predict_record(&self, record: &TaxpayerRecord) -> Result<f64> {
        if record.features.len() != self.feature_count {
            return Err(ScoringError::DimensionMismatch {
                expected: self.feature_count,
                got: record.features.len(),
            });
        }
        Ok(self.model.predict(record))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ScorerDocument {
            format_version: SCORER_FORMAT_VERSION,
            scorer: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScorerDocument = serde_json::from_str(text)?;
        if doc.format_version != SCORER_FORMAT_VERSION {
            return Err(ScoringError::FormatVersion(doc.format_version));
        }
        Ok(doc.scorer)
    }
}

/// One score per record, aligned with a population's record order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub ids: Vec<u64>,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(ids: Vec<u64>, scores: Vec<f64>) -> Result<Self> {
        if ids.len() != scores.len() {
            return Err(ScoringError::Data(format!(
                "{} ids but {} scores",
                ids.len(),
                scores.len()
            )));
        }
        if let Some(p) = scores.iter().position(|s| !s.is_finite()) {
            return Err(ScoringError::Data(format!("non-finite score for id {}", ids[p])));
        }
        Ok(Self { ids, scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// True when the ids match `pop` record for record.
    pub fn is_aligned_with(&self, pop: &Population) -> bool {
        self.ids.len() == pop.len() && self.ids.iter().copied().eq(pop.ids())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["id", "score"])?;
        for (id, s) in self.ids.iter().zip(&self.scores) {
            wtr.write_record([id.to_string(), s.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut ids = Vec::new();
        let mut scores = Vec::new();
        for (k, row) in rdr.records().enumerate() {
            let row = row?;
            let parse_err = |c: &str| ScoringError::Data(format!("row {}: bad {c}", k + 1));
            ids.push(
                row.get(0)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| parse_err("id"))?,
            );
            scores.push(
                row.get(1)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| parse_err("score"))?,
            );
        }
        Self::new(ids, scores)
    }
}

/// Fits a model with explicit targets and weights. Weights are rescaled to
/// mean one before fitting.
pub fn fit_model(
    family: &ModelFamily,
    target: TargetKind,
    x: &Features,
    y: &[f64],
    w: &[f64],
    seed: u64,
) -> Result<FittedModel> {
    family.validate()?;
    if x.n_rows() == 0 {
        return Err(ScoringError::EmptyTrainingSet);
    }
    x.check_finite()?;
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().all(|&v| v == 0.0) {
        return Err(ScoringError::Data(
            "weights must be finite, >= 0 and not all zero".into(),
        ));
    }
    let w = data::unit_mean_weights(w);
    let unsupported = || ScoringError::UnsupportedTarget {
        family: family.name(),
        target: target.name(),
    };
    if target.is_classification() {
        let pos = y.iter().zip(&w).any(|(&v, &wt)| v > 0.5 && wt > 0.0);
        let neg = y.iter().zip(&w).any(|(&v, &wt)| v <= 0.5 && wt > 0.0);
        if !(pos && neg) {
            return Err(ScoringError::DegenerateLabels);
        }
    }
    Ok(match family {
        ModelFamily::LinearDiscriminant(p) => {
            if !target.is_classification() {
                return Err(unsupported());
            }
            FittedModel::LinearDiscriminant(lda::fit(p, x, y, &w)?)
        }
        ModelFamily::Logistic(p) => {
            if !target.is_classification() {
                return Err(unsupported());
            }
            FittedModel::Logistic(logistic::fit(p, x, y, &w)?)
        }
        ModelFamily::RandomForest(p) => FittedModel::RandomForest(forest::fit(p, x, y, &w, seed)),
        ModelFamily::GradientBoost(p) => {
            let loss = if target.is_classification() {
                BoostLoss::Logistic
            } else {
                BoostLoss::Squared
            };
            FittedModel::GradientBoost(boost::fit(p, loss, x, y, &w, seed).model)
        }
    })
}

/// Fits `spec` on `train` for `target`, honouring the spec's fit mode.
pub fn fit_scorer(spec: &ModelSpec, train: &Population, target: TargetKind) -> Result<Scorer> {
    spec.validate()?;
    if train.is_empty() {
        return Err(ScoringError::EmptyTrainingSet);
    }
    let resampled;
    let data = match spec.fit_mode {
        FitMode::NativeWeights => train,
        FitMode::Subsample(n) => {
            resampled = weighted_subsample(train, n, spec.seed)?;
            &resampled
        }
    };
    let x = Features::from_population(data);
    let y = data::targets(data, target);
    let w = data.weights();
    let model = fit_model(&spec.family, target, &x, &y, &w, spec.seed)?;
    Ok(Scorer::new(spec.family.name(), target, train.feature_count(), model))
}

/// Scores every record of `pop` in order.
pub fn score(scorer: &Scorer, pop: &Population) -> Result<ScoreVector> {
    if pop.feature_count() != scorer.feature_count && !pop.is_empty() {
        return Err(ScoringError::DimensionMismatch {
            expected: scorer.feature_count,
            got: pop.feature_count(),
        });
    }
    if let Some(nb) = scorer.model.required_buckets() {
        if !pop.is_bucketed() {
            return Err(ScoringError::NotBucketed);
        }
        if nb != pop.n_buckets() {
            return Err(ScoringError::Data(format!(
                "scorer uses {nb} buckets, population has {}",
                pop.n_buckets()
            )));
        }
    }
    let scores = pop
        .records()
        .iter()
        .map(|r| scorer.model.predict(r))
        .collect::<Vec<f64>>();
    ScoreVector::new(pop.ids().collect(), scores)
}

/// The omniscient scorer: each record's score is its true misreport.
pub fn oracle_scorer(pop: &Population) -> ScoreVector {
    ScoreVector {
        ids: pop.ids().collect(),
        scores: pop.misreports(),
    }
}
