//! Allocation quality: revenue, no-change rate, cost, oracle overlap and
//! per-bucket audit rates, plus checks of the two group-fairness lemmas
//! linking equal TPR / equalized odds to audit-rate ordering.

use std::io::{Read, Write};

use thiserror::Error;

use crate::allocation::{Allocation, BudgetSpec};
use crate::population::{misreport_flag, Population};
use crate::stats::neumaier_sum;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("allocation is not aligned with the population")]
    Misaligned,
    #[error("allocations have different budgets: {0:?} vs {1:?}")]
    BudgetMismatch(BudgetSpec, BudgetSpec),
    #[error("overlap needs a rate budget")]
    NotRateBudget,
    #[error("population must be bucketed")]
    NotBucketed,
    #[error("malformed metrics table: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

fn aligned(alloc: &Allocation, pop: &Population) -> Result<()> {
    if alloc.is_aligned_with(pop) && alloc.alpha.len() == pop.len() {
        Ok(())
    } else {
        Err(MetricsError::Misaligned)
    }
}

fn weighted(alloc: &Allocation, pop: &Population, f: impl Fn(&crate::population::TaxpayerRecord) -> f64) -> f64 {
    neumaier_sum(pop.records().iter().zip(&alloc.alpha).map(|(r, a)| a * r.weight * f(r)))
}

/// `Σ α w δ`.
pub fn revenue(alloc: &Allocation, pop: &Population) -> Result<f64> {
    aligned(alloc, pop)?;
    Ok(weighted(alloc, pop, |r| r.misreport))
}

/// Share of audited mass with `δ ≤ τ`; `None` when nothing is audited.
pub fn no_change_rate(alloc: &Allocation, pop: &Population, tau: f64) -> Result<Option<f64>> {
    aligned(alloc, pop)?;
    let audited = weighted(alloc, pop, |_| 1.0);
    if audited <= 0.0 {
        return Ok(None);
    }
    let unchanged = weighted(alloc, pop, |r| f64::from(u8::from(!misreport_flag(r.misreport, tau))));
    Ok(Some(unchanged / audited))
}

/// `Σ α w c`.
pub fn total_cost(alloc: &Allocation, pop: &Population) -> Result<f64> {
    aligned(alloc, pop)?;
    Ok(weighted(alloc, pop, |r| r.cost))
}

pub fn net_revenue(alloc: &Allocation, pop: &Population) -> Result<f64> {
    Ok(revenue(alloc, pop)? - total_cost(alloc, pop)?)
}

/// Weighted audit mass shared by the two allocations over the larger of
/// their audit masses. Both must share one rate budget; when both spend it
/// the denominator is `k Σw`.
pub fn oracle_overlap(alloc: &Allocation, oracle: &Allocation, pop: &Population) -> Result<f64> {
    aligned(alloc, pop)?;
    aligned(oracle, pop)?;
    if alloc.budget != oracle.budget {
        return Err(MetricsError::BudgetMismatch(alloc.budget, oracle.budget));
    }
    if !matches!(alloc.budget, BudgetSpec::Rate { .. }) {
        return Err(MetricsError::NotRateBudget);
    }
    let mass = |alpha: &[f64]| neumaier_sum(pop.records().iter().zip(alpha).map(|(r, a)| a * r.weight));
    let shared = neumaier_sum(
        pop.records()
            .iter()
            .zip(alloc.alpha.iter().zip(&oracle.alpha))
            .map(|(r, (a, o))| a.min(*o) * r.weight),
    );
    // summing the allocations' own masses keeps overlap(a, a) exactly 1
    let audits = mass(&alloc.alpha).max(mass(&oracle.alpha));
    if audits == 0.0 {
        return Ok(0.0);
    }
    Ok((shared / audits).clamp(0.0, 1.0))
}

/// Weighted audit rate per bucket; `None` for a bucket with no weight.
pub fn audit_rate_by_bucket(alloc: &Allocation, pop: &Population) -> Result<Vec<Option<f64>>> {
    aligned(alloc, pop)?;
    let idx = pop.bucket_indices().map_err(|_| MetricsError::NotBucketed)?;
    let nb = pop.n_buckets();
    let mut mass = vec![Vec::new(); nb];
    let mut weight = vec![Vec::new(); nb];
    for ((r, a), &b) in pop.records().iter().zip(&alloc.alpha).zip(&idx) {
        mass[b].push(a * r.weight);
        weight[b].push(r.weight);
    }
    Ok(mass
        .into_iter()
        .zip(weight)
        .map(|(m, w)| {
            let w = neumaier_sum(w);
            (w > 0.0).then(|| neumaier_sum(m) / w)
        })
        .collect())
}

/// `rates[b+1] ≥ rates[b] − tol` for every adjacent pair.
pub fn check_monotone(rates: &[f64], tol: f64) -> bool {
    rates.windows(2).all(|p| p[1] >= p[0] - tol)
}

/// Audit outcome counts for one group. Counts may be weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub n: f64,
    /// Misreporters.
    pub m: f64,
    /// Compliant taxpayers, `n − m`.
    pub r: f64,
    /// Audits, `tp + fp`.
    pub a: f64,
    pub tp: f64,
    pub fp: f64,
}

impl GroupStats {
    /// Counts from size, positives, and audited positives and negatives.
    pub fn new(n: f64, m: f64, tp: f64, fp: f64) -> Option<Self> {
        let ok = [n, m, tp, fp].iter().all(|v| v.is_finite() && *v >= 0.0) && m <= n && tp <= m && fp <= n - m;
        ok.then_some(Self {
            n,
            m,
            r: n - m,
            a: tp + fp,
            tp,
            fp,
        })
    }

    /// Weighted counts for one bucket (1-based) under an allocation.
    pub fn from_allocation(alloc: &Allocation, pop: &Population, tau: f64, bucket: usize) -> Result<Self> {
        aligned(alloc, pop)?;
        let (mut n, mut m, mut tp, mut fp) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (r, a) in pop.records().iter().zip(&alloc.alpha) {
            if r.bucket.ok_or(MetricsError::NotBucketed)? != bucket {
                continue;
            }
            n.push(r.weight);
            if misreport_flag(r.misreport, tau) {
                m.push(r.weight);
                tp.push(a * r.weight);
            } else {
                fp.push(a * r.weight);
            }
        }
        let (n, m) = (neumaier_sum(n), neumaier_sum(m));
        Ok(Self {
            n,
            m,
            r: n - m,
            a: neumaier_sum(tp.iter().chain(&fp).copied()),
            tp: neumaier_sum(tp),
            fp: neumaier_sum(fp),
        })
    }

    /// False positive rate of the audits.
    pub fn alpha(&self) -> f64 {
        self.fp / self.r
    }

    /// True positive rate of the audits.
    pub fn beta(&self) -> f64 {
        self.tp / self.m
    }

    pub fn precision(&self) -> f64 {
        self.tp / self.a
    }
}

/// Outcome of a lemma check.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict<T> {
    Checked(T),
    /// The lemma's assumptions do not hold for these groups.
    NotApplicable(String),
}

impl<T> Verdict<T> {
    pub fn checked(self) -> Option<T> {
        match self {
            Verdict::Checked(t) => Some(t),
            Verdict::NotApplicable(_) => None,
        }
    }
}

const LEMMA_TOL: f64 = 1e-12;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= LEMMA_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Record {
    /// `A₂ ≥ A₁`.
    pub audits_increase: bool,
    /// `m₁/m₂ ≤ p₁/p₂`.
    pub precision_condition: bool,
    pub pass: bool,
}

/// Under equal TPR and equal group sizes, `A₂ ≥ A₁ ⇔ m₁/m₂ ≤ p₁/p₂`.
pub fn lemma1_check(g1: &GroupStats, g2: &GroupStats) -> Verdict<Lemma1Record> {
    if !close(g1.n, g2.n) {
        return Verdict::NotApplicable(format!("group sizes differ: {} vs {}", g1.n, g2.n));
    }
    if [g1.m, g2.m, g1.a, g2.a, g1.tp, g2.tp].iter().any(|&v| v <= 0.0) {
        return Verdict::NotApplicable("needs positives, audits and precision above zero".into());
    }
    if !close(g1.beta(), g2.beta()) {
        return Verdict::NotApplicable(format!("TPRs differ: {} vs {}", g1.beta(), g2.beta()));
    }
    let scale = g1.a.max(g2.a);
    let audits_increase = g2.a >= g1.a - LEMMA_TOL * scale;
    // cross-multiplied to avoid two divisions
    let lhs = g1.m * g2.precision();
    let rhs = g2.m * g1.precision();
    let precision_condition = lhs <= rhs + LEMMA_TOL * lhs.max(rhs);
    Verdict::Checked(Lemma1Record {
        audits_increase,
        precision_condition,
        pass: audits_increase == precision_condition,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2Record {
    /// `A₂ − A₁` from the counts.
    pub difference: f64,
    /// `(β − α)(m₂ − m₁)`.
    pub predicted: f64,
    /// Sign of the predicted difference: 1 if group 2 is audited more, −1
    /// if less, 0 if equally.
    pub direction: i8,
    pub pass: bool,
}

/// Under equalized odds with shared `(α, β)` and equal group sizes,
/// `A₂ − A₁ = (β − α)(m₂ − m₁)`.
pub fn lemma2_check(alpha: f64, beta: f64, g1: &GroupStats, g2: &GroupStats) -> Verdict<Lemma2Record> {
    if !close(g1.n, g2.n) {
        return Verdict::NotApplicable(format!("group sizes differ: {} vs {}", g1.n, g2.n));
    }
    if [g1.m, g2.m, g1.r, g2.r].iter().any(|&v| v <= 0.0) {
        return Verdict::NotApplicable("both groups need positives and negatives".into());
    }
    for g in [g1, g2] {
        if !close(g.alpha(), alpha) || !close(g.beta(), beta) {
            return Verdict::NotApplicable(format!(
                "group rates ({}, {}) differ from ({alpha}, {beta})",
                g.alpha(),
                g.beta()
            ));
        }
    }
    let difference = g2.a - g1.a;
    let predicted = (beta - alpha) * (g2.m - g1.m);
    let scale = g1.a.max(g2.a).max(g1.n);
    let pass = (difference - predicted).abs() <= LEMMA_TOL * scale;
    let direction = if predicted.abs() <= LEMMA_TOL * scale {
        0
    } else if predicted > 0.0 {
        1
    } else {
        -1
    };
    Verdict::Checked(Lemma2Record {
        difference,
        predicted,
        direction,
        pass,
    })
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub label: String,
    pub revenue: f64,
    pub no_change_rate: Option<f64>,
    pub cost: f64,
    pub net_revenue: f64,
    /// Undefined for dollar budgets.
    pub oracle_overlap: Option<f64>,
    pub tau: f64,
    pub audit_rate_by_bucket: Vec<Option<f64>>,
}

const HEADER: [&str; 7] = [
    "label",
    "revenue",
    "no_change_rate",
    "cost",
    "net_revenue",
    "oracle_overlap",
    "tau",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

impl MetricsReport {
    /// Evaluates `alloc`; overlap is computed against `oracle` when both
    /// use the same rate budget.
    pub fn evaluate(
        label: &str,
        alloc: &Allocation,
        oracle: Option<&Allocation>,
        pop: &Population,
        tau: f64,
    ) -> Result<Self> {
        let revenue = revenue(alloc, pop)?;
        let cost = total_cost(alloc, pop)?;
        let oracle_overlap = match oracle {
            Some(o) if matches!(alloc.budget, BudgetSpec::Rate { .. }) => Some(oracle_overlap(alloc, o, pop)?),
            _ => None,
        };
        let audit_rate_by_bucket = if pop.is_bucketed() {
            audit_rate_by_bucket(alloc, pop)?
        } else {
            Vec::new()
        };
        Ok(Self {
            label: label.to_string(),
            revenue,
            no_change_rate: no_change_rate(alloc, pop, tau)?,
            cost,
            net_revenue: revenue - cost,
            oracle_overlap,
            tau,
            audit_rate_by_bucket,
        })
    }

    /// Writes the table rows; per-bucket rates are not part of the table.
    pub fn write_csv<W: Write>(reports: &[MetricsReport], writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(HEADER)?;
        for r in reports {
            wtr.write_record([
                r.label.clone(),
                r.revenue.to_string(),
                opt(r.no_change_rate),
                r.cost.to_string(),
                r.net_revenue.to_string(),
                opt(r.oracle_overlap),
                r.tau.to_string(),
            ])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<MetricsReport>> {
        let mut rdr = csv::Reader::from_reader(reader);
        if rdr.headers()?.iter().ne(HEADER) {
            return Err(MetricsError::Parse(format!("expected header {}", HEADER.join(","))));
        }
        let mut out = Vec::new();
        for (k, row) in rdr.records().enumerate() {
            let row = row?;
            let field = |i: usize| -> Result<Option<f64>> {
                match row.get(i).map(str::trim) {
                    Some("NA") => Ok(None),
                    Some(v) => v
                        .parse()
                        .map(Some)
                        .map_err(|_| MetricsError::Parse(format!("row {}: bad {}", k + 1, HEADER[i]))),
                    None => Err(MetricsError::Parse(format!("row {}: missing {}", k + 1, HEADER[i]))),
                }
            };
            let req = |i: usize| -> Result<f64> {
                field(i)?.ok_or_else(|| MetricsError::Parse(format!("row {}: {} is NA", k + 1, HEADER[i])))
            };
            out.push(MetricsReport {
                label: row.get(0).unwrap_or_default().to_string(),
                revenue: req(1)?,
                no_change_rate: field(2)?,
                cost: req(3)?,
                net_revenue: req(4)?,
                oracle_overlap: field(5)?,
                tau: req(6)?,
                audit_rate_by_bucket: Vec::new(),
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{oracle_allocation, topk_allocation};
    use crate::population::test_support::{record, with_buckets};
    use crate::population::{generate_population, PopulationConfig};
    use crate::scoring::ScoreVector;
    use proptest::prelude::*;

    fn pop_of(weights: &[f64], deltas: &[f64], costs: &[f64]) -> Population {
        let recs = weights
            .iter()
            .zip(deltas)
            .zip(costs)
            .enumerate()
            .map(|(i, ((&w, &d), &c))| {
                let mut r = record(i as u64, w, i as f64, d);
                r.cost = c;
                r
            })
            .collect();
        Population::new(recs).unwrap()
    }

    fn alloc(pop: &Population, alpha: &[f64], k: f64) -> Allocation {
        Allocation::new(pop, alpha.to_vec(), BudgetSpec::Rate { k }).unwrap()
    }

    #[test]
    fn revenue_and_cost_by_hand() {
        let p = pop_of(&[2.0, 1.0, 3.0], &[100.0, 50.0, -20.0], &[5.0, 7.0, 1.0]);
        let a = alloc(&p, &[1.0, 0.0, 1.0], 0.5);
        assert_eq!(revenue(&a, &p).unwrap(), 140.0);
        let p = pop_of(&[2.0, 1.0], &[0.0, 0.0], &[5.0, 7.0]);
        let a = alloc(&p, &[1.0, 0.0], 0.5);
        assert_eq!(total_cost(&a, &p).unwrap(), 10.0);
        let zero = alloc(&p, &[0.0, 0.0], 0.5);
        assert_eq!(total_cost(&zero, &p).unwrap(), 0.0);
        assert_eq!(net_revenue(&zero, &p).unwrap(), 0.0);
        assert_eq!(revenue(&zero, &p).unwrap(), 0.0);
        let p = pop_of(&[2.0], &[10.0], &[1.0]);
        assert_eq!(revenue(&alloc(&p, &[0.5], 0.5), &p).unwrap(), 10.0);
    }

    #[test]
    fn no_change_rate_by_hand() {
        let p = pop_of(&[1.0; 4], &[500.0, 0.0, 300.0, 900.0], &[1.0; 4]);
        let a = alloc(&p, &[1.0, 1.0, 1.0, 0.0], 0.75);
        assert!((no_change_rate(&a, &p, 200.0).unwrap().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let a = alloc(&p, &[1.0, 0.0, 1.0, 1.0], 0.75);
        assert_eq!(no_change_rate(&a, &p, 200.0).unwrap(), Some(0.0));
        assert_eq!(no_change_rate(&alloc(&p, &[0.0; 4], 0.75), &p, 200.0).unwrap(), None);
    }

    #[test]
    fn overlap_by_hand() {
        let p = pop_of(&[1.0; 4], &[0.0; 4], &[1.0; 4]);
        let a = alloc(&p, &[1.0, 1.0, 0.0, 0.0], 0.5);
        let o = alloc(&p, &[0.0, 1.0, 1.0, 0.0], 0.5);
        assert_eq!(oracle_overlap(&a, &o, &p).unwrap(), 0.5);
        assert_eq!(oracle_overlap(&a, &a, &p).unwrap(), 1.0);
        let d = alloc(&p, &[0.0, 0.0, 1.0, 1.0], 0.5);
        assert_eq!(oracle_overlap(&a, &d, &p).unwrap(), 0.0);
        let other = alloc(&p, &[1.0, 0.0, 0.0, 0.0], 0.25);
        assert!(matches!(
            oracle_overlap(&a, &other, &p),
            Err(MetricsError::BudgetMismatch(..))
        ));
    }

    #[test]
    fn rates_by_bucket() {
        let p = with_buckets(&pop_of(&[1.0; 4], &[0.0; 4], &[1.0; 4]), &[1, 1, 2, 2], 2);
        let a = alloc(&p, &[1.0, 0.0, 1.0, 1.0], 0.75);
        assert_eq!(audit_rate_by_bucket(&a, &p).unwrap(), vec![Some(0.5), Some(1.0)]);
        let all = alloc(&p, &[1.0; 4], 1.0);
        assert_eq!(audit_rate_by_bucket(&all, &p).unwrap(), vec![Some(1.0); 2]);
        let sparse = with_buckets(&pop_of(&[1.0; 2], &[0.0; 2], &[1.0; 2]), &[1, 3], 3);
        let a = alloc(&sparse, &[1.0, 0.0], 0.5);
        assert_eq!(
            audit_rate_by_bucket(&a, &sparse).unwrap(),
            vec![Some(1.0), None, Some(0.0)]
        );
    }

    #[test]
    fn monotone_check() {
        assert!(check_monotone(&[0.1, 0.1, 0.2], 0.0));
        assert!(!check_monotone(&[0.3, 0.1], 0.0));
        assert!(check_monotone(&[0.3, 0.3 - 1e-10], 1e-9));
        assert!(check_monotone(&[], 0.0));
    }

    #[test]
    fn lemma1_examples() {
        // m=4, 8; p=0.5; beta=0.25 → A = 2, 4
        let g1 = GroupStats::new(20.0, 4.0, 1.0, 1.0).unwrap();
        let g2 = GroupStats::new(20.0, 8.0, 2.0, 2.0).unwrap();
        let r = lemma1_check(&g1, &g2).checked().unwrap();
        assert!(r.audits_increase && r.precision_condition && r.pass);
        let r = lemma1_check(&g1, &g1).checked().unwrap();
        assert!(r.audits_increase && r.precision_condition && r.pass);
        let uneven = GroupStats::new(20.0, 8.0, 4.0, 0.0).unwrap();
        assert!(matches!(lemma1_check(&g1, &uneven), Verdict::NotApplicable(_)));
    }

    #[test]
    fn lemma2_examples() {
        let g1 = GroupStats::new(10.0, 2.0, 1.0, 0.8).unwrap();
        let g2 = GroupStats::new(10.0, 6.0, 3.0, 0.4).unwrap();
        assert!((g1.a - 1.8).abs() < 1e-15 && (g2.a - 3.4).abs() < 1e-15);
        let r = lemma2_check(0.1, 0.5, &g1, &g2).checked().unwrap();
        assert!(r.pass && r.direction == 1);
        assert!((r.difference - 1.6).abs() < 1e-12);
        // beta == alpha: equal audits regardless of m
        let g1 = GroupStats::new(10.0, 2.0, 0.6, 2.4).unwrap();
        let g2 = GroupStats::new(10.0, 6.0, 1.8, 1.2).unwrap();
        let r = lemma2_check(0.3, 0.3, &g1, &g2).checked().unwrap();
        assert!(r.pass && r.direction == 0);
        // beta < alpha with m2 > m1: group 2 audited less
        let g1 = GroupStats::new(10.0, 2.0, 0.2, 4.0).unwrap();
        let g2 = GroupStats::new(10.0, 6.0, 0.6, 2.0).unwrap();
        let r = lemma2_check(0.5, 0.1, &g1, &g2).checked().unwrap();
        assert!(r.pass && r.direction == -1 && r.difference < 0.0);
        assert!(matches!(lemma2_check(0.4, 0.1, &g1, &g2), Verdict::NotApplicable(_)));
    }

    #[test]
    fn report_csv_round_trip() {
        let p = pop_of(&[1.0; 4], &[500.0, 0.0, 300.0, 900.0], &[3.0; 4]);
        let a = alloc(&p, &[1.0, 1.0, 0.0, 0.0], 0.5);
        let o = oracle_allocation(&p, BudgetSpec::Rate { k: 0.5 }).unwrap();
        let mut r = MetricsReport::evaluate("model", &a, Some(&o), &p, 200.0).unwrap();
        assert_eq!(r.net_revenue, r.revenue - r.cost);
        let z = MetricsReport::evaluate("none", &alloc(&p, &[0.0; 4], 0.5), None, &p, 200.0).unwrap();
        let mut buf = Vec::new();
        MetricsReport::write_csv(&[r.clone(), z.clone()], &mut buf).unwrap();
        let back = MetricsReport::read_csv(buf.as_slice()).unwrap();
        r.audit_rate_by_bucket.clear();
        assert_eq!(back, vec![r, z]);
        assert!(String::from_utf8(buf).unwrap().contains("none,0,NA,0,0,NA,200"));
    }

    #[test]
    fn oracle_has_no_changes_under_small_budgets() {
        let p = generate_population(&PopulationConfig::default().with_records(5_000).with_seed(3)).unwrap();
        let o = oracle_allocation(&p, BudgetSpec::rate()).unwrap();
        assert_eq!(no_change_rate(&o, &p, 200.0).unwrap(), Some(0.0));
        assert_eq!(oracle_overlap(&o, &o, &p).unwrap(), 1.0);
    }

    /// Expands integer weights into that many unit-weight copies.
    fn expand(p: &Population, alpha: &[f64]) -> (Population, Vec<f64>) {
        let mut recs = Vec::new();
        let mut a = Vec::new();
        for (r, &x) in p.records().iter().zip(alpha) {
            for _ in 0..r.weight as usize {
                let mut c = r.clone();
                c.id = recs.len() as u64;
                c.weight = 1.0;
                recs.push(c);
                a.push(x);
            }
        }
        let mut e = Population::new(recs).unwrap();
        if p.is_bucketed() {
            let labels: Vec<usize> = e.records().iter().map(|r| r.bucket.unwrap()).collect();
            e = e.with_bucket_labels(&labels, p.n_buckets()).unwrap();
        }
        (e, a)
    }

    fn small() -> impl Strategy<Value = (Vec<u8>, Vec<i32>, Vec<u8>, Vec<u8>, Vec<usize>)> {
        (1usize..12).prop_flat_map(|n| {
            (
                proptest::collection::vec(1u8..5, n),
                proptest::collection::vec(-100i32..2_000, n),
                proptest::collection::vec(1u8..50, n),
                proptest::collection::vec(0u8..=4, n),
                proptest::collection::vec(1usize..=3, n),
            )
        })
    }

    proptest! {
        #[test]
        fn weights_act_like_duplicates((w, d, c, a4, b) in small()) {
            let w: Vec<f64> = w.into_iter().map(f64::from).collect();
            let d: Vec<f64> = d.into_iter().map(f64::from).collect();
            let c: Vec<f64> = c.into_iter().map(f64::from).collect();
            let alpha: Vec<f64> = a4.into_iter().map(|x| f64::from(x) / 4.0).collect();
            let p = with_buckets(&pop_of(&w, &d, &c), &b, 3);
            let a = alloc(&p, &alpha, 0.5);
            let (e, ea) = expand(&p, &alpha);
            let ea = alloc(&e, &ea, 0.5);
            prop_assert_eq!(revenue(&a, &p).unwrap(), revenue(&ea, &e).unwrap());
            prop_assert_eq!(total_cost(&a, &p).unwrap(), total_cost(&ea, &e).unwrap());
            prop_assert_eq!(no_change_rate(&a, &p, 200.0).unwrap(), no_change_rate(&ea, &e, 200.0).unwrap());
            prop_assert_eq!(audit_rate_by_bucket(&a, &p).unwrap(), audit_rate_by_bucket(&ea, &e).unwrap());
        }

        #[test]
        fn self_overlap_is_exactly_one(w in proptest::collection::vec(0.01f64..1e4, 1..200), k in 0.001f64..1.0) {
            let p = pop_of(&w, &vec![1.0; w.len()], &vec![1.0; w.len()]);
            let o = oracle_allocation(&p, BudgetSpec::Rate { k }).unwrap();
            prop_assert_eq!(oracle_overlap(&o, &o, &p).unwrap(), 1.0);
        }

        #[test]
        fn overlap_is_symmetric_and_revenue_linear((w, d, c, a4, _b) in small(), lambda in 0.0f64..=1.0) {
            let w: Vec<f64> = w.into_iter().map(f64::from).collect();
            let d: Vec<f64> = d.into_iter().map(f64::from).collect();
            let c: Vec<f64> = c.into_iter().map(f64::from).collect();
            let p = pop_of(&w, &d, &c);
            let alpha: Vec<f64> = a4.iter().map(|&x| f64::from(x) / 4.0).collect();
            let x = alloc(&p, &alpha, 0.3);
            let y = oracle_allocation(&p, BudgetSpec::Rate { k: 0.3 }).unwrap();
            prop_assert_eq!(oracle_overlap(&x, &y, &p).unwrap(), oracle_overlap(&y, &x, &p).unwrap());
            let scaled = alloc(&p, &alpha.iter().map(|a| a * lambda).collect::<Vec<_>>(), 0.3);
            let (r, rs) = (revenue(&x, &p).unwrap(), revenue(&scaled, &p).unwrap());
            prop_assert!((rs - lambda * r).abs() <= 1e-9 * r.abs().max(1.0));
        }

        #[test]
        fn oracle_revenue_dominates_any_ranking((w, d, c, _a, _b) in small(), s in proptest::collection::vec(-1.0f64..1.0, 12), k in 0.05f64..1.0) {
            let w: Vec<f64> = w.into_iter().map(f64::from).collect();
            let d: Vec<f64> = d.into_iter().map(f64::from).collect();
            let c: Vec<f64> = c.into_iter().map(f64::from).collect();
            let p = pop_of(&w, &d, &c);
            let scores = ScoreVector::new(p.ids().collect(), s[..p.len()].to_vec()).unwrap();
            let budget = BudgetSpec::Rate { k };
            let m = topk_allocation(&scores, &p, budget).unwrap();
            let o = oracle_allocation(&p, budget).unwrap();
            prop_assert!(revenue(&o, &p).unwrap() >= revenue(&m, &p).unwrap() - 1e-9);
        }

        #[test]
        fn lemmas_hold_on_random_constructions(
            n in 2.0f64..1_000.0, f1 in 0.01f64..0.99, f2 in 0.01f64..0.99,
            beta in 0.0f64..=1.0, alpha in 0.0f64..=1.0, p1 in 0.05f64..=1.0,
        ) {
            let (m1, m2) = (n * f1, n * f2);
            // equalized odds: shared (alpha, beta)
            let g1 = GroupStats::new(n, m1, beta * m1, alpha * (n - m1)).unwrap();
            let g2 = GroupStats::new(n, m2, beta * m2, alpha * (n - m2)).unwrap();
            let r = lemma2_check(alpha, beta, &g1, &g2).checked().unwrap();
            prop_assert!(r.pass);
            // equal TPR with a chosen precision in group 1
            prop_assume!(beta > 0.0);
            let tp1 = beta * m1;
            let fp1 = (tp1 / p1 - tp1).min(n - m1);
            let g1 = GroupStats::new(n, m1, tp1, fp1).unwrap();
            let g2 = GroupStats::new(n, m2, beta * m2, alpha * (n - m2)).unwrap();
            if let Verdict::Checked(r) = lemma1_check(&g1, &g2) {
                prop_assert!(r.pass);
            }
        }
    }
}
