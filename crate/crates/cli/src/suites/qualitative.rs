//! Orderings the synthetic populations should reproduce: regression beats
//! classification, return-on-investment ranking favours low incomes, and
//! monotone rates cost little revenue.

use std::path::Path;

use audit_core::allocation::{
    monotone_allocation, oracle_allocation, roi_allocation, topk_allocation, Allocation, BudgetSpec,
};
use audit_core::metrics::{audit_rate_by_bucket, check_monotone, oracle_overlap, revenue};
use audit_core::population::{
    generate_population, split, winsorize_misreports, Population, PopulationConfig, DEFAULT_TAU,
};
use audit_core::scoring::{fit_scorer, score, ModelSpec, TargetKind};
use rayon::prelude::*;

use super::{criterion, write_table, SuiteOptions};
use crate::artifacts::{CriterionResult, Table};
use crate::{mix_seed, Result};

const BOTTOM_BUCKETS: usize = 3;
const BOTTOM_SHARE: f64 = 0.70;
const MAX_MONOTONE_LOSS: f64 = 0.10;
const MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct SeedResult {
    seed: u64,
    cls_overlap: f64,
    reg_overlap: f64,
    cls_revenue: f64,
    reg_revenue: f64,
    roi_bottom_share: f64,
    monotone_revenue: f64,
    monotone_ok: bool,
}

fn bottom_share(alloc: &Allocation, pop: &Population) -> Result<f64> {
    let buckets = pop.bucket_indices()?;
    let (mut low, mut all) = (0.0, 0.0);
    for ((r, a), b) in pop.records().iter().zip(&alloc.alpha).zip(buckets) {
        let mass = a * r.weight;
        all += mass;
        if b < BOTTOM_BUCKETS {
            low += mass;
        }
    }
    Ok(if all > 0.0 { low / all } else { 0.0 })
}

fn run_seed(seed: u64, n_records: usize) -> Result<SeedResult> {
    let pop = generate_population(&PopulationConfig::default().with_records(n_records).with_seed(seed))?;
    let (train, test) = split(&pop, 0.25, mix_seed(seed, 1))?;
    let spec = ModelSpec::random_forest().with_seed(mix_seed(seed, 2));
    let cls = fit_scorer(&spec, &train, TargetKind::Classification { tau: DEFAULT_TAU })?;
    let reg = fit_scorer(
        &spec,
        &winsorize_misreports(&train, 0.01, 0.99)?,
        TargetKind::Regression,
    )?;
    let (cls, reg) = (score(&cls, &test)?, score(&reg, &test)?);

    let rate = BudgetSpec::rate();
    let oracle = oracle_allocation(&test, rate)?;
    let cls_top = topk_allocation(&cls, &test, rate)?;
    let reg_top = topk_allocation(&reg, &test, rate)?;

    // same audit share as the rate budget, expressed in dollars
    let BudgetSpec::Rate { k } = rate else { unreachable!() };
    let total_cost: f64 = test.records().iter().map(|r| r.weight * r.cost).sum();
    let roi = roi_allocation(&cls, &test, BudgetSpec::Dollar { amount: k * total_cost })?;

    let mono = monotone_allocation(&cls, &test, rate)?;
    let rates: Vec<f64> = audit_rate_by_bucket(&mono, &test)?.into_iter().flatten().collect();
    Ok(SeedResult {
        seed,
        cls_overlap: oracle_overlap(&cls_top, &oracle, &test)?,
        reg_overlap: oracle_overlap(&reg_top, &oracle, &test)?,
        cls_revenue: revenue(&cls_top, &test)?,
        reg_revenue: revenue(&reg_top, &test)?,
        roi_bottom_share: bottom_share(&roi, &test)?,
        monotone_revenue: revenue(&mono, &test)?,
        monotone_ok: rates.len() == test.n_buckets() && check_monotone(&rates, MONOTONE_TOL),
    })
}

pub(super) fn run(options: &SuiteOptions, out: &Path) -> Result<Vec<CriterionResult>> {
    let results: Vec<SeedResult> = (0..options.n_seeds)
        .into_par_iter()
        .map(|seed| run_seed(seed, options.n_records))
        .collect::<Result<_>>()?;

    let mut table = Table::new(&[
        "seed",
        "classification_overlap",
        "regression_overlap",
        "classification_revenue",
        "regression_revenue",
        "roi_bottom3_share",
        "monotone_revenue",
        "monotone_rates_ok",
    ]);
    for r in &results {
        table.push(vec![
            r.seed.to_string(),
            r.cls_overlap.to_string(),
            r.reg_overlap.to_string(),
            r.cls_revenue.to_string(),
            r.reg_revenue.to_string(),
            r.roi_bottom_share.to_string(),
            r.monotone_revenue.to_string(),
            r.monotone_ok.to_string(),
        ]);
    }
    write_table(&table, out, "scenarios.csv")?;

    let n = results.len();
    let wins = results
        .iter()
        .filter(|r| r.reg_overlap > r.cls_overlap && r.reg_revenue > r.cls_revenue)
        .count();
    let needed = n.saturating_sub(1).max(1);
    let low = results.iter().map(|r| r.roi_bottom_share).fold(f64::INFINITY, f64::min);
    let worst_loss = results
        .iter()
        .map(|r| 1.0 - r.monotone_revenue / r.cls_revenue)
        .fold(f64::NEG_INFINITY, f64::max);
    let all_monotone = results.iter().all(|r| r.monotone_ok);
    Ok(vec![
        criterion(
            "regression_beats_classification",
            wins >= needed,
            format!("regression has higher overlap and revenue in {wins} of {n} seeds (need {needed})"),
        ),
        criterion(
            "roi_targets_bottom_deciles",
            low >= BOTTOM_SHARE,
            format!("smallest share of audit mass in the bottom {BOTTOM_BUCKETS} buckets: {low:.4}"),
        ),
        criterion(
            "monotone_tradeoff",
            all_monotone && worst_loss <= MAX_MONOTONE_LOSS,
            format!("rates nondecreasing in every seed: {all_monotone}; worst revenue loss vs top-k: {worst_loss:.4}"),
        ),
    ])
}
