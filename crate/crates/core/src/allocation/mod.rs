//! Audit allocations under a rate budget (top-k, oracle, monotone bucket
//! rates) or a dollar budget (return on investment), and the cost model.

mod cost;
mod monotone;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::population::{Population, PopulationError};
use crate::scoring::{oracle_scorer, ScoreVector};
use crate::stats::neumaier_sum;

pub use cost::{estimate_costs, CostCell, CostModel, GroupRule};
pub use monotone::{monotone_allocation, monotone_objective};

/// Audited share of the weighted population.
pub const DEFAULT_RATE: f64 = 0.00644;
/// Total examiner cost.
pub const DEFAULT_DOLLAR_BUDGET: f64 = 125_000_000.0;

#[derive(Debug, Error)]
pub enum AllocationError {
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("budget infeasible: {0}")]
    Infeasible(String),
    #[error("scores are not aligned with the population")]
    Misaligned,
    #[error("population must be bucketed")]
    NotBucketed,
    #[error("no cost for bucket {bucket}, group {group}")]
    MissingCell { bucket: usize, group: usize },
    #[error("invalid cost model: {0}")]
    CostModel(String),
    #[error("invalid allocation: {0}")]
    Invalid(String),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AllocationError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetSpec {
    /// Audit a share `k` of the weighted population.
    Rate { k: f64 },
    /// Spend at most this many dollars of audit cost.
    Dollar { amount: f64 },
}

impl BudgetSpec {
    pub fn rate() -> Self {
        BudgetSpec::Rate { k: DEFAULT_RATE }
    }

    pub fn dollar() -> Self {
        BudgetSpec::Dollar {
            amount: DEFAULT_DOLLAR_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BudgetSpec::Rate { k } if !(k > 0.0 && k.is_finite()) => Err(AllocationError::InvalidBudget(format!(
                "rate must be positive, got {k}"
            ))),
            BudgetSpec::Dollar { amount } if !(amount > 0.0 && amount.is_finite()) => Err(
                AllocationError::InvalidBudget(format!("dollar budget must be positive, got {amount}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Per-record audit intensities `α ∈ [0, 1]`, aligned with a population.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub ids: Vec<u64>,
    pub alpha: Vec<f64>,
    pub budget: BudgetSpec,
    /// Weighted audit mass `Σ α w` for rate budgets, dollars `Σ α w c`
    /// otherwise.
    pub spent: f64,
}

impl Allocation {
    /// Wraps intensities for `pop`, computing what they spend.
    pub fn new(pop: &Population, alpha: Vec<f64>, budget: BudgetSpec) -> Result<Self> {
        if alpha.len() != pop.len() {
            return Err(AllocationError::Invalid(format!(
                "{} intensities for {} records",
                alpha.len(),
                pop.len()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(AllocationError::Invalid(format!("intensity {a} outside [0, 1]")));
        }
        let spent = spent(pop, &alpha, budget);
        Ok(Self {
            ids: pop.ids().collect(),
            alpha,
            budget,
            spent,
        })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn is_aligned_with(&self, pop: &Population) -> bool {
        self.ids.len() == pop.len() && self.ids.iter().copied().eq(pop.ids())
    }

    /// Number of records with `0 < α < 1`.
    pub fn fractional_count(&self) -> usize {
        self.alpha.iter().filter(|&&a| a > 0.0 && a < 1.0).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["id", "alpha"])?;
        for (id, a) in self.ids.iter().zip(&self.alpha) {
            wtr.write_record([id.to_string(), a.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `id,alpha` rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<(Vec<u64>, Vec<f64>)> {
        let mut rdr = csv::Reader::from_reader(reader);
        if rdr.headers()?.iter().ne(["id", "alpha"]) {
            return Err(AllocationError::Invalid("expected header id,alpha".into()));
        }
        let mut ids = Vec::new();
        let mut alpha = Vec::new();
        for (k, row) in rdr.records().enumerate() {
            let row = row?;
            let bad = |c: &str| AllocationError::Invalid(format!("row {}: bad {c}", k + 1));
            ids.push(
                row.get(0)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| bad("id"))?,
            );
            alpha.push(
                row.get(1)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| bad("alpha"))?,
            );
        }
        Ok((ids, alpha))
    }
}

fn spent(pop: &Population, alpha: &[f64], budget: BudgetSpec) -> f64 {
    let recs = pop.records();
    match budget {
        BudgetSpec::Rate { .. } => neumaier_sum(recs.iter().zip(alpha).map(|(r, a)| a * r.weight)),
        BudgetSpec::Dollar { .. } => neumaier_sum(recs.iter().zip(alpha).map(|(r, a)| a * r.weight * r.cost)),
    }
}

fn check_aligned(scores: &ScoreVector, pop: &Population) -> Result<()> {
    if scores.is_aligned_with(pop) {
        Ok(())
    } else {
        Err(AllocationError::Misaligned)
    }
}

/// Record indices by `key` descending, ties by id ascending.
fn ranking(pop: &Population, key: impl Fn(usize) -> f64) -> Vec<usize> {
    let recs = pop.records();
    let keys: Vec<f64> = (0..recs.len()).map(key).collect();
    let mut order: Vec<usize> = (0..recs.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(recs[a].id.cmp(&recs[b].id)));
    order
}

/// Walks `order`, taking whole records while `size` fits in `capacity` and
/// a fraction of the first one that does not.
fn fill(order: &[usize], size: impl Fn(usize) -> f64, capacity: f64, alpha: &mut [f64]) {
    let mut remaining = capacity;
    for &i in order {
        if remaining <= 0.0 {
            break;
        }
        let s = size(i);
        if s <= remaining {
            alpha[i] = 1.0;
            remaining -= s;
        } else {
            alpha[i] = remaining / s;
            remaining = 0.0;
        }
    }
}

fn rate_of(budget: BudgetSpec) -> Result<f64> {
    budget.validate()?;
    match budget {
        BudgetSpec::Rate { k } => Ok(k),
        BudgetSpec::Dollar { .. } => Err(AllocationError::InvalidBudget("expected a rate budget".into())),
    }
}

/// Audits the highest scores until weighted mass `k·Σw` is reached.
pub fn topk_allocation(scores: &ScoreVector, pop: &Population, budget: BudgetSpec) -> Result<Allocation> {
    let k = rate_of(budget)?;
    check_aligned(scores, pop)?;
    let recs = pop.records();
    let order = ranking(pop, |i| scores.scores[i]);
    let mut alpha = vec![0.0; pop.len()];
    fill(&order, |i| recs[i].weight, k * pop.total_weight(), &mut alpha);
    Allocation::new(pop, alpha, budget)
}

/// Top-k on the true misreport amounts.
pub fn oracle_allocation(pop: &Population, budget: BudgetSpec) -> Result<Allocation> {
    topk_allocation(&oracle_scorer(pop), pop, budget)
}

/// Greedy fractional knapsack: audits by `score / cost` descending until
/// the dollar budget is spent.
pub fn roi_allocation(scores: &ScoreVector, pop: &Population, budget: BudgetSpec) -> Result<Allocation> {
    budget.validate()?;
    let BudgetSpec::Dollar { amount } = budget else {
        return Err(AllocationError::InvalidBudget("expected a dollar budget".into()));
    };
    check_aligned(scores, pop)?;
    let recs = pop.records();
    let order = ranking(pop, |i| scores.scores[i] / recs[i].cost);
    let mut alpha = vec![0.0; pop.len()];
    fill(&order, |i| recs[i].weight * recs[i].cost, amount, &mut alpha);
    Allocation::new(pop, alpha, budget)
}

/// `Σ α w s` for an allocation and scores.
pub fn weighted_objective(alloc: &Allocation, pop: &Population, scores: &[f64]) -> f64 {
    neumaier_sum(
        pop.records()
            .iter()
            .zip(&alloc.alpha)
            .zip(scores)
            .map(|((r, a), s)| a * r.weight * s),
    )
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::population::test_support::record;
    use crate::population::Population;
    use crate::scoring::ScoreVector;

    pub fn pop(weights: &[f64]) -> Population {
        Population::new(
            weights
                .iter()
                .enumerate()
                .map(|(i, &w)| record(i as u64, w, i as f64, 0.0))
                .collect(),
        )
        .unwrap()
    }

    pub fn scores(pop: &Population, s: &[f64]) -> ScoreVector {
        ScoreVector::new(pop.ids().collect(), s.to_vec()).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::population::test_support::record;
    use proptest::prelude::*;

    fn rate(k: f64) -> BudgetSpec {
        BudgetSpec::Rate { k }
    }

    #[test]
    fn topk_unit_weights() {
        let p = pop(&[1.0; 4]);
        let a = topk_allocation(&scores(&p, &[0.9, 0.5, 0.7, 0.1]), &p, rate(0.5)).unwrap();
        assert_eq!(a.alpha, vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn topk_weighted_mass() {
        let p = pop(&[3.0, 1.0, 1.0, 1.0]);
        let a = topk_allocation(&scores(&p, &[0.9, 0.8, 0.7, 0.6]), &p, rate(0.5)).unwrap();
        assert_eq!(a.alpha, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn topk_boundary_fraction() {
        let p = pop(&[2.0, 2.0]);
        let a = topk_allocation(&scores(&p, &[0.9, 0.5]), &p, rate(0.75)).unwrap();
        assert_eq!(a.alpha, vec![1.0, 0.5]);
        assert_eq!(a.spent, 3.0);
    }

    #[test]
    fn topk_ties_break_by_id() {
        let p = pop(&[1.0; 3]);
        let a = topk_allocation(&scores(&p, &[0.5, 0.5, 0.5]), &p, rate(1.0 / 3.0)).unwrap();
        assert_eq!(a.alpha, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn oracle_picks_largest_misreport() {
        let recs = [10.0, 30.0, 20.0]
            .iter()
            .enumerate()
            .map(|(i, &d)| record(i as u64, 1.0, 1.0, d))
            .collect();
        let p = Population::new(recs).unwrap();
        let a = oracle_allocation(&p, rate(1.0 / 3.0)).unwrap();
        assert_eq!(a.alpha, vec![0.0, 1.0, 0.0]);
    }

    fn knapsack_pop() -> (Population, ScoreVector) {
        let costs = [10.0, 2.0, 15.0];
        let recs = costs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut r = record(i as u64, 1.0, 1.0, 0.0);
                r.cost = c;
                r
            })
            .collect();
        let p = Population::new(recs).unwrap();
        let s = scores(&p, &[100.0, 50.0, 30.0]);
        (p, s)
    }

    #[test]
    fn roi_examples() {
        let (p, s) = knapsack_pop();
        let a = roi_allocation(&s, &p, BudgetSpec::Dollar { amount: 12.0 }).unwrap();
        assert_eq!(a.alpha, vec![1.0, 1.0, 0.0]);
        assert_eq!(weighted_objective(&a, &p, &s.scores), 150.0);
        let a = roi_allocation(&s, &p, BudgetSpec::Dollar { amount: 11.0 }).unwrap();
        assert_eq!(a.alpha, vec![0.9, 1.0, 0.0]);
        assert!((weighted_objective(&a, &p, &s.scores) - 140.0).abs() < 1e-12);
        let a = roi_allocation(&s, &p, BudgetSpec::Dollar { amount: 1e6 }).unwrap();
        assert_eq!(a.alpha, vec![1.0; 3]);
    }

    #[test]
    fn roi_beats_a_fine_grid() {
        let (p, s) = knapsack_pop();
        let budget = 12.0;
        let a = roi_allocation(&s, &p, BudgetSpec::Dollar { amount: budget }).unwrap();
        let best = weighted_objective(&a, &p, &s.scores);
        let steps = 40;
        for i in 0..=steps {
            for j in 0..=steps {
                let (x, y) = (i as f64 / steps as f64, j as f64 / steps as f64);
                let rest = budget - 10.0 * x - 2.0 * y;
                if rest < 0.0 {
                    continue;
                }
                let z = (rest / 15.0).min(1.0);
                assert!(100.0 * x + 50.0 * y + 30.0 * z <= best + 1e-9);
            }
        }
    }

    #[test]
    fn bad_budgets_are_rejected() {
        let p = pop(&[1.0]);
        let s = scores(&p, &[1.0]);
        assert!(roi_allocation(&s, &p, BudgetSpec::Dollar { amount: 0.0 }).is_err());
        assert!(topk_allocation(&s, &p, rate(-0.1)).is_err());
        assert!(topk_allocation(&s, &p, BudgetSpec::dollar()).is_err());
        let other = pop(&[1.0, 1.0]);
        assert!(matches!(
            topk_allocation(&s, &other, rate(0.5)),
            Err(AllocationError::Misaligned)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let p = pop(&[2.0, 2.0]);
        let a = topk_allocation(&scores(&p, &[0.9, 0.5]), &p, rate(0.3)).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(
            Allocation::read_csv(buf.as_slice()).unwrap(),
            (a.ids.clone(), a.alpha.clone())
        );
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
        (1usize..25).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.1f64..5.0, n),
                proptest::collection::vec(-3.0f64..10.0, n),
                proptest::collection::vec(0.5f64..50.0, n),
                0.01f64..1.0,
            )
        })
    }

    fn with_costs(weights: &[f64], costs: &[f64]) -> Population {
        let p = pop(weights);
        p.with_costs(costs).unwrap()
    }

    proptest! {
        #[test]
        fn budgets_are_exact((w, s, c, k) in instance()) {
            let p = with_costs(&w, &c);
            let sv = scores(&p, &s);
            let a = topk_allocation(&sv, &p, rate(k)).unwrap();
            let target = k * p.total_weight();
            prop_assert!((a.spent - target).abs() <= 1e-9 * target);
            prop_assert!(a.fractional_count() <= 1);
            let total_cost: f64 = w.iter().zip(&c).map(|(w, c)| w * c).sum();
            let budget = k * total_cost;
            let r = roi_allocation(&sv, &p, BudgetSpec::Dollar { amount: budget }).unwrap();
            prop_assert!((r.spent - budget).abs() <= 1e-9 * budget);
            prop_assert!(r.fractional_count() <= 1);
        }

        #[test]
        fn topk_is_exchange_optimal((w, s, _c, k) in instance()) {
            let p = pop(&w);
            let a = topk_allocation(&scores(&p, &s), &p, rate(k)).unwrap();
            for i in 0..s.len() {
                for j in 0..s.len() {
                    // moving mass from a selected record i to an unselected j never helps
                    if a.alpha[i] > 0.0 && a.alpha[j] < 1.0 {
                        prop_assert!(s[j] <= s[i]);
                    }
                }
            }
        }

        #[test]
        fn allocations_ignore_positive_score_scaling((w, s, c, k) in instance(), lambda in 0.01f64..100.0) {
            let p = with_costs(&w, &c);
            let scaled: Vec<f64> = s.iter().map(|v| v * lambda).collect();
            let a = topk_allocation(&scores(&p, &s), &p, rate(k)).unwrap();
            let b = topk_allocation(&scores(&p, &scaled), &p, rate(k)).unwrap();
            prop_assert_eq!(a.alpha, b.alpha);
            let budget = BudgetSpec::Dollar { amount: 10.0 };
            let a = roi_allocation(&scores(&p, &s), &p, budget).unwrap();
            let b = roi_allocation(&scores(&p, &scaled), &p, budget).unwrap();
            prop_assert_eq!(a.alpha, b.alpha);
        }

        #[test]
        fn roi_equals_topk_with_equal_costs_and_weights(s in proptest::collection::vec(-1.0f64..1.0, 1..30), k in 0.01f64..1.0) {
            let p = with_costs(&vec![1.0; s.len()], &vec![7.0; s.len()]);
            let sv = scores(&p, &s);
            let t = topk_allocation(&sv, &p, rate(k)).unwrap();
            let r = roi_allocation(&sv, &p, BudgetSpec::Dollar { amount: 7.0 * k * s.len() as f64 }).unwrap();
            for (x, y) in t.alpha.iter().zip(&r.alpha) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
