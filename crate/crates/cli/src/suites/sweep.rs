//! No-change rate of one fixed classifier allocation as the change
//! threshold rises.

use std::path::Path;

use audit_core::allocation::{topk_allocation, BudgetSpec};
use audit_core::metrics::no_change_rate;
use audit_core::population::{generate_population, split, PopulationConfig, DEFAULT_TAU};
use audit_core::scoring::{fit_scorer, score, ModelSpec, TargetKind};

use super::{criterion, write_table, SuiteOptions};
use crate::artifacts::{CriterionResult, Table};
use crate::{mix_seed, Result};

const TAUS: [f64; 4] = [200.0, 1_000.0, 5_000.0, 10_000.0];

pub(super) fn run(options: &SuiteOptions, out: &Path) -> Result<Vec<CriterionResult>> {
    let pop = generate_population(&PopulationConfig::default().with_records(options.n_records))?;
    let (train, test) = split(&pop, 0.25, mix_seed(0, 1))?;
    let spec = ModelSpec::random_forest().with_seed(mix_seed(0, 2));
    let scorer = fit_scorer(&spec, &train, TargetKind::Classification { tau: DEFAULT_TAU })?;
    let alloc = topk_allocation(&score(&scorer, &test)?, &test, BudgetSpec::rate())?;

    let mut table = Table::new(&["tau", "no_change_rate"]);
    let mut rates = Vec::new();
    for tau in TAUS {
        let r = no_change_rate(&alloc, &test, tau)?;
        table.push(vec![tau.to_string(), r.map_or_else(|| "NA".into(), |v| v.to_string())]);
        rates.push(r);
    }
    write_table(&table, out, "sweep.csv")?;

    let defined: Option<Vec<f64>> = rates.iter().copied().collect();
    let passed = defined.as_ref().is_some_and(|v| v.windows(2).all(|p| p[0] <= p[1]));
    let detail = rates
        .iter()
        .zip(TAUS)
        .map(|(r, t)| format!("{t}: {}", r.map_or_else(|| "NA".into(), |v| format!("{v:.4}"))))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(vec![criterion("no_change_rate_nondecreasing", passed, detail)])
}
