use serde::{Deserialize, Serialize};

use super::{PopulationError, Result, DEFAULT_BUCKETS};

/// Ratio of the most to the least expensive decile's mean audit cost.
pub const DEFAULT_COST_RATIO: f64 = 41.0;

const DECILES: usize = 10;

/// Reported income is log-normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncomeParams {
    pub median: f64,
    pub sigma: f64,
}

impl Default for IncomeParams {
    fn default() -> Self {
        Self {
            median: 40_000.0,
            sigma: 1.0,
        }
    }
}

/// Sampling weights: `(income / median)^income_elasticity` times log-normal
/// noise, rescaled to `total_weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightParams {
    pub total_weight: f64,
    pub income_elasticity: f64,
    pub dispersion: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            // 1.125M audits at a 0.644% audit rate
            total_weight: 1_125_000.0 / 0.00644,
            income_elasticity: -0.3,
            dispersion: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjustmentParams {
    /// Threshold the per-decile misreport rates are calibrated against.
    pub calibration_tau: f64,
    /// Log-scale dispersion of the excess over `calibration_tau`.
    pub dispersion: f64,
    /// Compliant records deviate from zero with probability
    /// `rate[decile] * compliant_deviation_share`.
    pub compliant_deviation_share: f64,
    /// Mean overstatement (negative misreport) among deviating compliant records.
    pub overstatement_mean: f64,
}

impl Default for AdjustmentParams {
    fn default() -> Self {
        Self {
            calibration_tau: 200.0,
            dispersion: 1.0,
            compliant_deviation_share: 0.5,
            overstatement_mean: 300.0,
        }
    }
}

/// Synthetic feature model.
///
/// Features are, in order: log income; a noisy misreport indicator; a noisy
/// log misreport amount; one income-correlated nuisance variable; and
/// `n_nuisance - 1` pure noise columns. Signal noise is scaled per decile
/// from 1 (lowest) to `noise_growth` (highest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub flag_noise: f64,
    pub amount_noise: f64,
    pub noise_growth: f64,
    pub n_nuisance: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            flag_noise: 0.6,
            amount_noise: 1.5,
            noise_growth: 2.0,
            n_nuisance: 3,
        }
    }
}

impl FeatureParams {
    pub fn feature_count(&self) -> usize {
        3 + self.n_nuisance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub n_records: usize,
    pub n_buckets: usize,
    /// Share of each income decile with a misreport above `calibration_tau`.
    pub misreport_rate: Vec<f64>,
    /// Mean misreport among misreporters, per decile.
    pub mean_adjustment: Vec<f64>,
    /// Mean audit cost per decile.
    pub mean_cost: Vec<f64>,
    /// Log-scale dispersion of individual costs around the decile mean.
    pub cost_dispersion: f64,
    pub income: IncomeParams,
    pub weights: WeightParams,
    pub adjustment: AdjustmentParams,
    pub features: FeatureParams,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n_records: 50_000,
            n_buckets: DEFAULT_BUCKETS,
            misreport_rate: vec![0.10, 0.14, 0.18, 0.22, 0.26, 0.30, 0.34, 0.38, 0.42, 0.46],
            mean_adjustment: vec![
                700.0, 800.0, 900.0, 1_000.0, 1_200.0, 1_400.0, 1_800.0, 2_500.0, 4_000.0, 15_000.0,
            ],
            mean_cost: geometric_costs(60.0, DEFAULT_COST_RATIO),
            cost_dispersion: 0.25,
            income: IncomeParams::default(),
            weights: WeightParams::default(),
            adjustment: AdjustmentParams::default(),
            features: FeatureParams::default(),
            seed: 0,
        }
    }
}

/// Ten decile costs rising geometrically from `lowest` to `lowest * ratio`.
fn geometric_costs(lowest: f64, ratio: f64) -> Vec<f64> {
    (0..DECILES)
        .map(|d| lowest * ratio.powf(d as f64 / (DECILES - 1) as f64))
        .collect()
}

impl PopulationConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_records(mut self, n: usize) -> Self {
        self.n_records = n;
        self
    }

    /// Rescale decile costs so the top/bottom ratio equals `ratio`, keeping
    /// the lowest decile's mean.
    pub fn with_cost_ratio(mut self, ratio: f64) -> Self {
        let lowest = self.mean_cost.first().copied().unwrap_or(60.0);
        self.mean_cost = geometric_costs(lowest, ratio);
        self
    }

    pub fn cost_ratio(&self) -> f64 {
        self.mean_cost[DECILES - 1] / self.mean_cost[0]
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(PopulationError::Config(m));
        for (name, v) in [
            ("misreport_rate", &self.misreport_rate),
            ("mean_adjustment", &self.mean_adjustment),
            ("mean_cost", &self.mean_cost),
        ] {
            if v.len() != DECILES {
                return cfg(format!("{name} needs {DECILES} entries, got {}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return cfg(format!("{name} has a non-finite entry"));
            }
        }
        if self.misreport_rate.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return cfg("misreport_rate entries must lie in [0, 1]".into());
        }
        if self.misreport_rate.windows(2).any(|w| w[1] < w[0]) {
            return cfg("misreport_rate must be nondecreasing across deciles".into());
        }
        if self
            .mean_adjustment
            .iter()
            .any(|&a| a <= self.adjustment.calibration_tau)
        {
            return cfg("mean_adjustment entries must exceed calibration_tau".into());
        }
        let top = self.mean_adjustment[DECILES - 1];
        if self.mean_adjustment.iter().any(|&a| a > top) {
            return cfg("mean_adjustment must peak in the top decile".into());
        }
        if self.mean_cost.iter().any(|&c| c <= 0.0) || self.mean_cost.windows(2).any(|w| w[1] < w[0]) {
            return cfg("mean_cost must be positive and nondecreasing".into());
        }
        if self.n_buckets < 2 {
            return cfg("n_buckets must be >= 2".into());
        }
        let positive = [
            ("income.median", self.income.median),
            ("weights.total_weight", self.weights.total_weight),
            ("features.noise_growth", self.features.noise_growth),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return cfg(format!("{name} must be finite and > 0"));
            }
        }
        let nonneg = [
            ("income.sigma", self.income.sigma),
            ("weights.dispersion", self.weights.dispersion),
            ("cost_dispersion", self.cost_dispersion),
            ("adjustment.dispersion", self.adjustment.dispersion),
            ("adjustment.overstatement_mean", self.adjustment.overstatement_mean),
            ("adjustment.calibration_tau", self.adjustment.calibration_tau),
            ("features.flag_noise", self.features.flag_noise),
            ("features.amount_noise", self.features.amount_noise),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return cfg(format!("{name} must be finite and >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.adjustment.compliant_deviation_share) {
            return cfg("adjustment.compliant_deviation_share must lie in [0, 1]".into());
        }
        if self.features.n_nuisance == 0 {
            return cfg("features.n_nuisance must be >= 1".into());
        }
        let need = DECILES.max(self.n_buckets) * 10;
        if self.n_records < need {
            return Err(PopulationError::Size {
                got: self.n_records,
                need,
            });
        }
        Ok(())
    }
}
