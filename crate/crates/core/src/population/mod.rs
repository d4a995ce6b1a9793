//! Weighted taxpayer populations: construction, bucketing, splitting and
//! resampling.
//!
//! A [`Population`] is immutable once built; every transformation returns a
//! new value. Income buckets are never generated or persisted, they are
//! always recomputed with [`assign_buckets`].

mod config;
mod generate;
mod io;

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{neumaier_sum, weighted_quantile};

pub use config::{AdjustmentParams, FeatureParams, IncomeParams, PopulationConfig, WeightParams, DEFAULT_COST_RATIO};
pub use generate::generate_population;
pub use io::{load_population, load_population_from_reader, save_population, write_population};

/// Default de minimis misreport threshold in dollars.
pub const DEFAULT_TAU: f64 = 200.0;

/// Default number of income buckets (deciles).
pub const DEFAULT_BUCKETS: usize = 10;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("population too small: {got} records, need at least {need}")]
    Size { got: usize, need: usize },
    #[error("row {row}, column \"{column}\": {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("invalid record {id}: {message}")]
    InvalidRecord { id: u64, message: String },
    #[error("duplicate record id {0}")]
    DuplicateId(u64),
    #[error("population is not bucketed")]
    NotBucketed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = PopulationError> = std::result::Result<T, E>;

/// One sampled filer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxpayerRecord {
    pub id: u64,
    pub features: Vec<f64>,
    /// Reported total positive income, dollars.
    pub reported_income: f64,
    /// True minus reported liability, dollars. Negative means overstated.
    pub misreport: f64,
    /// Cost of auditing this return, dollars.
    pub cost: f64,
    /// Number of population members this record represents.
    pub weight: f64,
    /// 1-based income bucket, `None` until [`assign_buckets`] runs.
    pub bucket: Option<usize>,
}

impl TaxpayerRecord {
    fn validate(&self) -> Result<()> {
        let bad = |message: &str| {
            Err(PopulationError::InvalidRecord {
                id: self.id,
                message: message.to_string(),
            })
        };
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return bad("weight must be finite and > 0");
        }
        if !(self.cost.is_finite() && self.cost > 0.0) {
            return bad("cost must be finite and > 0");
        }
        if !(self.reported_income.is_finite() && self.reported_income >= 0.0) {
            return bad("reported_income must be finite and >= 0");
        }
        if !self.misreport.is_finite() {
            return bad("misreport must be finite");
        }
        if self.features.iter().any(|f| !f.is_finite()) {
            return bad("features must be finite");
        }
        Ok(())
    }
}

/// An ordered, weighted collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    records: Vec<TaxpayerRecord>,
    n_buckets: usize,
    total_weight: f64,
}

impl Population {
    /// Validates records (positive weights and costs, unique ids, a common
    /// feature length) and caches the total weight.
    pub fn new(records: Vec<TaxpayerRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        let dim = records.first().map(|r| r.features.len());
        for r in &records {
            r.validate()?;
            if Some(r.features.len()) != dim {
                return Err(PopulationError::InvalidRecord {
                    id: r.id,
                    message: format!("feature length {} differs from {}", r.features.len(), dim.unwrap_or(0)),
                });
            }
            if !seen.insert(r.id) {
                return Err(PopulationError::DuplicateId(r.id));
            }
        }
        let n_buckets = records.iter().filter_map(|r| r.bucket).max().unwrap_or(DEFAULT_BUCKETS);
        let total_weight = neumaier_sum(records.iter().map(|r| r.weight));
        Ok(Self {
            records,
            n_buckets,
            total_weight,
        })
    }

    pub fn records(&self) -> &[TaxpayerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_buckets(&self) -> usize {
        self.n_buckets
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn feature_count(&self) -> usize {
        self.records.first().map_or(0, |r| r.features.len())
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.iter().map(|r| r.id)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.weight).collect()
    }

    pub fn misreports(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.misreport).collect()
    }

    pub fn is_bucketed(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.bucket.is_some())
    }

    /// Zero-based bucket index of every record.
    pub fn bucket_indices(&self) -> Result<Vec<usize>> {
        self.records
            .iter()
            .map(|r| r.bucket.map(|b| b - 1).ok_or(PopulationError::NotBucketed))
            .collect()
    }

    /// Total weight per bucket (zero-based).
    pub fn bucket_weights(&self) -> Result<Vec<f64>> {
        let idx = self.bucket_indices()?;
        let mut per: Vec<Vec<f64>> = vec![Vec::new(); self.n_buckets];
        for (r, b) in self.records.iter().zip(idx) {
            per[b].push(r.weight);
        }
        Ok(per.into_iter().map(neumaier_sum).collect())
    }

    /// Records whose ids are in `keep`, in original order. Buckets are kept.
    fn subset(&self, keep: &[usize]) -> Population {
        let records: Vec<TaxpayerRecord> = keep.iter().map(|&i| self.records[i].clone()).collect();
        let total_weight = neumaier_sum(records.iter().map(|r| r.weight));
        Population {
            records,
            n_buckets: self.n_buckets,
            total_weight,
        }
    }

    /// Replace misreport amounts, keeping everything else.
    pub fn with_misreports(&self, misreports: &[f64]) -> Population {
        assert_eq!(misreports.len(), self.len());
        let mut out = self.clone();
        for (r, &d) in out.records.iter_mut().zip(misreports) {
            r.misreport = d;
        }
        out
    }

    /// Explicit 1-based bucket labels, one per record.
    pub fn with_bucket_labels(&self, buckets: &[usize], n_buckets: usize) -> Result<Population> {
        if buckets.len() != self.len() {
            return Err(PopulationError::Config(format!(
                "{} bucket labels for {} records",
                buckets.len(),
                self.len()
            )));
        }
        if n_buckets < 1 {
            return Err(PopulationError::Config("n_buckets must be >= 1".into()));
        }
        let mut out = self.clone();
        for (r, &b) in out.records.iter_mut().zip(buckets) {
            if !(1..=n_buckets).contains(&b) {
                return Err(PopulationError::InvalidRecord {
                    id: r.id,
                    message: format!("bucket {b} outside 1..={n_buckets}"),
                });
            }
            r.bucket = Some(b);
        }
        out.n_buckets = n_buckets;
        Ok(out)
    }

    /// Replace audit costs, keeping everything else.
    pub fn with_costs(&self, costs: &[f64]) -> Result<Population> {
        assert_eq!(costs.len(), self.len());
        let mut out = self.clone();
        for (r, &c) in out.records.iter_mut().zip(costs) {
            r.cost = c;
            r.validate()?;
        }
        Ok(out)
    }
}

/// `true` iff the misreport strictly exceeds the threshold.
pub fn misreport_flag(delta: f64, tau: f64) -> bool {
    delta > tau
}

/// Assigns each record to a weighted income quantile bucket (1 = lowest).
///
/// Records are ordered by (income, id); a record belongs to the bucket whose
/// interval `((b-1)W/B, bW/B]` contains its inclusive cumulative weight, so a
/// record ending exactly on a boundary falls in the lower bucket.
pub fn assign_buckets(pop: &Population, n_buckets: usize) -> Result<Population> {
    if n_buckets < 2 {
        return Err(PopulationError::Config(format!(
            "n_buckets must be >= 2, got {n_buckets}"
        )));
    }
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&pop.records[a], &pop.records[b]);
        ra.reported_income
            .total_cmp(&rb.reported_income)
            .then(ra.id.cmp(&rb.id))
    });
    let total = pop.total_weight;
    let mut out = pop.clone();
    out.n_buckets = n_buckets;
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &i in &order {
        // compensated running sum
        let w = pop.records[i].weight;
        let t = sum + w;
        if sum.abs() >= w.abs() {
            comp += (sum - t) + w;
        } else {
            comp += (w - t) + sum;
        }
        sum = t;
        let position = (sum + comp) * n_buckets as f64 / total;
        let bucket = (position - 1e-9).ceil().clamp(1.0, n_buckets as f64) as usize;
        out.records[i].bucket = Some(bucket);
    }
    Ok(out)
}

/// Clips misreports to the weighted `lower_q` and `upper_q` quantiles.
pub fn winsorize_misreports(pop: &Population, lower_q: f64, upper_q: f64) -> Result<Population> {
    if !(0.0..=1.0).contains(&lower_q) || !(0.0..=1.0).contains(&upper_q) || lower_q >= upper_q {
        return Err(PopulationError::Config(format!(
            "winsorize quantiles must satisfy 0 <= lower < upper <= 1, got ({lower_q}, {upper_q})"
        )));
    }
    if pop.is_empty() {
        return Ok(pop.clone());
    }
    let deltas = pop.misreports();
    let weights = pop.weights();
    let lo = weighted_quantile(&deltas, &weights, lower_q).unwrap_or(f64::NEG_INFINITY);
    let hi = weighted_quantile(&deltas, &weights, upper_q).unwrap_or(f64::INFINITY);
    let clipped: Vec<f64> = deltas.iter().map(|d| d.clamp(lo, hi)).collect();
    Ok(pop.with_misreports(&clipped))
}

/// Random train/test split with exactly `round(n * test_fraction)` test
/// records (at least one record on each side when `n >= 2`).
pub fn split(pop: &Population, test_fraction: f64, seed: u64) -> Result<(Population, Population)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(PopulationError::Config(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = pop.len();
    let mut n_test = (n as f64 * test_fraction).round() as usize;
    if n >= 2 {
        n_test = n_test.clamp(1, n - 1);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut test_idx = order[..n_test].to_vec();
    let mut train_idx = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((pop.subset(&train_idx), pop.subset(&test_idx)))
}

/// Indices of `n` draws with replacement, each picking record `i` with
/// probability `w_i / W`.
pub fn weighted_subsample_indices(pop: &Population, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(PopulationError::Config("subsample size must be >= 1".into()));
    }
    if pop.is_empty() {
        return Err(PopulationError::Size { got: 0, need: 1 });
    }
    let dist = WeightedIndex::new(pop.records.iter().map(|r| r.weight))
        .map_err(|e| PopulationError::Config(format!("subsample weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

/// Weighted resampling with replacement. Drawn records carry weight 1 and
/// are renumbered `0..n` in draw order so ids stay unique; use
/// [`weighted_subsample_indices`] to recover the source rows.
pub fn weighted_subsample(pop: &Population, n: usize, seed: u64) -> Result<Population> {
    let idx = weighted_subsample_indices(pop, n, seed)?;
    let records: Vec<TaxpayerRecord> = idx
        .iter()
        .enumerate()
        .map(|(k, &i)| TaxpayerRecord {
            id: k as u64,
            weight: 1.0,
            ..pop.records[i].clone()
        })
        .collect();
    Ok(Population {
        total_weight: records.len() as f64,
        n_buckets: pop.n_buckets,
        records,
    })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn record(id: u64, weight: f64, income: f64, misreport: f64) -> TaxpayerRecord {
        TaxpayerRecord {
            id,
            features: vec![income],
            reported_income: income,
            misreport,
            cost: 1.0,
            weight,
            bucket: None,
        }
    }

    pub fn population(weights: &[f64], incomes: &[f64]) -> Population {
        let recs = weights
            .iter()
            .zip(incomes)
            .enumerate()
            .map(|(i, (&w, &inc))| record(i as u64, w, inc, 0.0))
            .collect();
        Population::new(recs).unwrap()
    }

    pub fn with_buckets(pop: &Population, buckets: &[usize], n_buckets: usize) -> Population {
        pop.with_bucket_labels(buckets, n_buckets).unwrap()
    }

    pub fn buckets(pop: &Population) -> Vec<usize> {
        pop.records().iter().map(|r| r.bucket.unwrap()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn misreport_flag_is_strict() {
        assert!(misreport_flag(201.0, 200.0));
        assert!(!misreport_flag(200.0, 200.0));
        assert!(!misreport_flag(-50.0, 200.0));
    }

    #[test]
    fn buckets_unit_weights() {
        let pop = population(&[1.0; 4], &[10.0, 20.0, 30.0, 40.0]);
        let b = assign_buckets(&pop, 2).unwrap();
        assert_eq!(buckets(&b), vec![1, 1, 2, 2]);
    }

    #[test]
    fn buckets_weighted_median() {
        let pop = population(&[3.0, 1.0, 1.0, 1.0], &[10.0, 20.0, 30.0, 40.0]);
        let b = assign_buckets(&pop, 2).unwrap();
        assert_eq!(buckets(&b), vec![1, 2, 2, 2]);
    }

    #[test]
    fn equal_incomes_break_ties_by_id() {
        let pop = population(&[1.0; 6], &[5.0; 6]);
        let b = assign_buckets(&pop, 3).unwrap();
        assert_eq!(buckets(&b), vec![1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn bucketing_rejects_single_bucket() {
        let pop = population(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]);
        assert!(assign_buckets(&pop, 1).is_err());
    }

    #[test]
    fn winsorize_clips_to_interpolated_quantiles() {
        let recs = [-100.0, 0.0, 10.0, 1e9]
            .iter()
            .enumerate()
            .map(|(i, &d)| record(i as u64, 1.0, 1.0, d))
            .collect();
        let pop = Population::new(recs).unwrap();
        let w = winsorize_misreports(&pop, 0.01, 0.99).unwrap();
        // positions 0.03 and 2.97 on the sorted sample
        let lo = -100.0 + 0.03 * 100.0;
        let hi = 10.0 + 0.97 * (1e9 - 10.0);
        let got = w.misreports();
        assert!((got[0] - lo).abs() < 1e-9);
        assert_eq!(got[1], 0.0);
        assert_eq!(got[2], 10.0);
        assert!((got[3] - hi).abs() < 1e-3);
        assert!(got[3] < 1e9);
    }

    #[test]
    fn winsorize_identity_cases() {
        let recs = [3.0, -7.0, 12.0]
            .iter()
            .enumerate()
            .map(|(i, &d)| record(i as u64, 1.0 + i as f64, 1.0, d))
            .collect();
        let pop = Population::new(recs).unwrap();
        assert_eq!(winsorize_misreports(&pop, 0.0, 1.0).unwrap(), pop);

        let flat = pop.with_misreports(&[4.0, 4.0, 4.0]);
        assert_eq!(winsorize_misreports(&flat, 0.01, 0.99).unwrap(), flat);
        assert!(winsorize_misreports(&pop, 0.5, 0.5).is_err());
    }

    #[test]
    fn split_is_exhaustive_and_deterministic() {
        let pop = population(&vec![1.0; 1000], &(0..1000).map(f64::from).collect::<Vec<_>>());
        let (train, test) = split(&pop, 0.25, 1).unwrap();
        assert!((200..=300).contains(&test.len()));
        let mut ids: Vec<u64> = train.ids().chain(test.ids()).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..1000).collect::<Vec<_>>());

        let (train2, test2) = split(&pop, 0.25, 1).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_two_records_in_half() {
        let pop = population(&[1.0, 1.0], &[1.0, 2.0]);
        let (train, test) = split(&pop, 0.5, 9).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
        assert!(split(&pop, 1.0, 9).is_err());
    }

    #[test]
    fn subsample_frequencies_follow_weights() {
        let pop = population(&[3.0, 1.0], &[1.0, 2.0]);
        let n = 40_000;
        let idx = weighted_subsample_indices(&pop, n, 11).unwrap();
        let c0 = idx.iter().filter(|&&i| i == 0).count() as f64;
        let p = 0.75;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((c0 - n as f64 * p).abs() <= 3.0 * sd, "count {c0}");
    }

    #[test]
    fn subsample_single_record() {
        let pop = population(&[2.5], &[7.0]);
        let s = weighted_subsample(&pop, 5, 3).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.records().iter().all(|r| r.reported_income == 7.0 && r.weight == 1.0));
        assert_eq!(s.ids().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert_eq!(s, weighted_subsample(&pop, 5, 3).unwrap());
    }

    #[test]
    fn subsample_converges_at_large_n() {
        let weights = [5.0, 1.0, 2.0, 0.5, 1.5];
        let pop = population(&weights, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let n = 100_000;
        let idx = weighted_subsample_indices(&pop, n, 5).unwrap();
        let total: f64 = weights.iter().sum();
        for (i, w) in weights.iter().enumerate() {
            let p = w / total;
            let freq = idx.iter().filter(|&&j| j == i).count() as f64 / n as f64;
            assert!((freq - p).abs() <= 4.0 * (p * (1.0 - p) / n as f64).sqrt());
        }
    }

    #[test]
    fn rejects_bad_records() {
        let mut r = record(0, 1.0, 1.0, 0.0);
        r.weight = 0.0;
        assert!(Population::new(vec![r]).is_err());
        let dup = vec![record(1, 1.0, 1.0, 0.0), record(1, 1.0, 2.0, 0.0)];
        assert!(matches!(Population::new(dup), Err(PopulationError::DuplicateId(1))));
    }

    proptest! {
        #[test]
        fn bucket_weights_partition_total(
            weights in proptest::collection::vec(0.1f64..100.0, 20..200),
            n_buckets in 2usize..12,
        ) {
            let incomes: Vec<f64> = weights.iter().enumerate().map(|(i, w)| ((i * 7919) % 101) as f64 * w).collect();
            let pop = population(&weights, &incomes);
            let b = assign_buckets(&pop, n_buckets).unwrap();
            let per = b.bucket_weights().unwrap();
            let total: f64 = per.iter().sum();
            prop_assert!((total - pop.total_weight()).abs() <= 1e-9 * pop.total_weight());
            let w_max = weights.iter().copied().fold(0.0, f64::max);
            for bw in &per {
                prop_assert!((bw - pop.total_weight() / n_buckets as f64).abs() <= w_max + 1e-9);
            }
            // idempotent
            let again = assign_buckets(&b, n_buckets).unwrap();
            prop_assert_eq!(buckets(&again), buckets(&b));
            // ordered by income
            let recs = b.records();
            for i in 0..recs.len() {
                for j in 0..recs.len() {
                    if recs[i].reported_income < recs[j].reported_income {
                        prop_assert!(recs[i].bucket <= recs[j].bucket);
                    }
                }
            }
        }
    }
}
