//! One configured experiment: population, split, per-model scoring and
//! allocation, and the tables and manifest describing the result.

use std::collections::BTreeMap;
use std::path::Path;

use audit_core::allocation::{
    estimate_costs, monotone_allocation, oracle_allocation, roi_allocation, topk_allocation, Allocation, BudgetSpec,
    CostModel,
};
use audit_core::fairness::{
    constraint_disparity, fit_reduction, postprocess_thresholds, ConstraintKind, FairnessConstraint, ReductionParams,
};
use audit_core::metrics::{audit_rate_by_bucket, MetricsReport};
use audit_core::population::{
    assign_buckets, generate_population, load_population, split, winsorize_misreports, Population,
};
use audit_core::scoring::{fit_scorer, oracle_scorer, score, ScoreVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::{write_allocations, write_disparity, write_rates, AllocationRow, RateRow};
use crate::config::{CostSource, ExperimentConfig, FairnessOption, ModelChoice, ModelRun, PopulationSource, Target};
use crate::{create_dir, create_file, mix_seed, CliError, Result};

const SPLIT_STREAM: u64 = 1;
const MODEL_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub label: String,
    pub model: String,
    pub target: Target,
    pub fairness: String,
    /// Reduction fits only.
    pub converged: Option<bool>,
    pub gap: Option<f64>,
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub models: Vec<ModelRecord>,
    pub warnings: Vec<String>,
    /// SHA-256 of every other file written.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub reports: Vec<MetricsReport>,
}

/// The configured population, bucketed.
pub fn build_population(config: &ExperimentConfig) -> Result<Population> {
    match &config.population {
        PopulationSource::Generate { config: pc } => {
            let pc = pc.clone().with_seed(config.seed);
            Ok(generate_population(&pc)?)
        }
        PopulationSource::Load { path, n_buckets } => {
            let pop = load_population(path)?;
            if pop.is_bucketed() && pop.n_buckets() == *n_buckets {
                Ok(pop)
            } else {
                Ok(assign_buckets(&pop, *n_buckets)?)
            }
        }
    }
}

struct ModelResult {
    record: ModelRecord,
    warning: Option<String>,
    alloc: Allocation,
}

fn model_scores(
    run: &ModelRun,
    config: &ExperimentConfig,
    train: &Population,
    train_reg: &Population,
    test: &Population,
) -> Result<(ScoreVector, ModelRecord, Option<String>)> {
    let mut record = ModelRecord {
        label: run.label.clone(),
        model: "oracle".into(),
        target: run.target,
        fairness: run.fairness.name(),
        converged: None,
        gap: None,
        iterations: None,
    };
    let spec = match &run.model {
        ModelChoice::Oracle => return Ok((oracle_scorer(test), record, None)),
        ModelChoice::Fitted { spec } => spec,
    };
    let seed = mix_seed(config.seed, mix_seed(MODEL_STREAM, spec.seed));
    let spec = spec.clone().with_seed(seed);
    record.model = spec.family.name().into();
    let target = run.target.kind(config.tau);
    let fit_set = match run.target {
        Target::Classification => train,
        Target::Regression => train_reg,
    };
    let mut warning = None;
    let scorer = match run.fairness {
        FairnessOption::None | FairnessOption::Monotone => fit_scorer(&spec, fit_set, target)?,
        FairnessOption::Reduction { .. } => {
            let constraint = run.fairness.constraint().expect("reduction has a constraint");
            let params = ReductionParams {
                tau: config.tau,
                ..ReductionParams::default()
            };
            let fit = fit_reduction(&spec, train, constraint, &params, seed)?;
            record.converged = Some(fit.converged);
            record.gap = Some(fit.gap);
            record.iterations = Some(fit.iterations);
            if !fit.converged {
                warning = Some(format!(
                    "{}: reduction stopped after {} iterations with gap {} above {}",
                    run.label, fit.iterations, fit.gap, fit.nu
                ));
            }
            fit.scorer
        }
        FairnessOption::Postprocess { .. } => {
            let constraint = run.fairness.constraint().expect("postprocess has a constraint");
            let base = fit_scorer(&spec, train, target)?;
            postprocess_thresholds(&base, train, constraint, seed)?
        }
    };
    Ok((score(&scorer, test)?, record, warning))
}

fn allocate(
    run: &ModelRun,
    budget: BudgetSpec,
    scores: &ScoreVector,
    test: &Population,
    ranking: &Population,
) -> Result<Allocation> {
    Ok(match (budget, run.fairness) {
        (BudgetSpec::Rate { .. }, FairnessOption::Monotone) => monotone_allocation(scores, test, budget)?,
        (BudgetSpec::Rate { .. }, _) => topk_allocation(scores, test, budget)?,
        (BudgetSpec::Dollar { .. }, _) => roi_allocation(scores, ranking, budget)?,
    })
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Runs `config` and writes `metrics.csv`, `audit_rate_by_bucket.csv`,
/// `disparity.csv`, `allocation.csv` (records with nonzero intensity),
/// `config.json` and `manifest.json` into `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    config.validate()?;
    create_dir(out)?;
    let pop = build_population(config)?;
    let (train, test) = split(&pop, config.test_fraction, mix_seed(config.seed, SPLIT_STREAM))?;
    let train_reg = match config.winsorize {
        Some([lo, hi]) => winsorize_misreports(&train, lo, hi)?,
        None => train.clone(),
    };
    let ranking = match config.costs {
        CostSource::Recorded => test.clone(),
        CostSource::CellMeans { rule, winsorize } => {
            let observed: Vec<f64> = train.records().iter().map(|r| r.cost).collect();
            let model = CostModel::from_observations(&train, &observed, rule, winsorize.map(|[a, b]| (a, b)))?;
            test.with_costs(&estimate_costs(&test, &model)?)?
        }
    };
    let oracle = match config.budget {
        BudgetSpec::Rate { .. } => oracle_allocation(&test, config.budget)?,
        BudgetSpec::Dollar { .. } => roi_allocation(&oracle_scorer(&test), &test, config.budget)?,
    };

    let results: Vec<ModelResult> = config
        .models
        .par_iter()
        .map(|run| {
            let (scores, record, warning) = model_scores(run, config, &train, &train_reg, &test)?;
            let alloc = allocate(run, config.budget, &scores, &test, &ranking)?;
            Ok(ModelResult { record, warning, alloc })
        })
        .collect::<Result<_>>()?;

    let oracle_rates = audit_rate_by_bucket(&oracle, &test)?;
    let mut reports = Vec::new();
    let mut rates = Vec::new();
    let mut disparity = Vec::new();
    let mut allocations = Vec::new();
    for (run, res) in config.models.iter().zip(&results) {
        let report = MetricsReport::evaluate(&run.label, &res.alloc, Some(&oracle), &test, config.tau)?;
        for (b, (rate, oracle_rate)) in report.audit_rate_by_bucket.iter().zip(&oracle_rates).enumerate() {
            rates.push(RateRow {
                label: run.label.clone(),
                bucket: b + 1,
                rate: *rate,
                oracle_rate: *oracle_rate,
            });
        }
        let constraint = run
            .fairness
            .constraint()
            .unwrap_or_else(|| FairnessConstraint::new(ConstraintKind::EqualizedOdds));
        let report_d = constraint_disparity(&res.alloc.alpha, &test, constraint, config.tau)?;
        disparity.extend(report_d.buckets.into_iter().map(|b| (run.label.clone(), b)));
        allocations.extend(
            res.alloc
                .ids
                .iter()
                .zip(&res.alloc.alpha)
                .filter(|(_, &a)| a > 0.0)
                .map(|(&id, &alpha)| AllocationRow {
                    label: run.label.clone(),
                    id,
                    alpha,
                }),
        );
        reports.push(report);
    }

    let files = [
        "config.json",
        "metrics.csv",
        "audit_rate_by_bucket.csv",
        "disparity.csv",
        "allocation.csv",
    ];
    std::fs::write(out.join(files[0]), config.canonical_json() + "\n")?;
    MetricsReport::write_csv(&reports, create_file(&out.join(files[1]))?)?;
    write_rates(&rates, create_file(&out.join(files[2]))?)?;
    write_disparity(&disparity, create_file(&out.join(files[3]))?)?;
    write_allocations(&allocations, create_file(&out.join(files[4]))?)?;

    let mut outputs = BTreeMap::new();
    for f in files {
        outputs.insert(f.to_string(), hash_file(&out.join(f))?);
    }
    let manifest = Manifest {
        config_sha256: config.hash(),
        seed: config.seed,
        n_train: train.len(),
        n_test: test.len(),
        models: results.iter().map(|r| r.record.clone()).collect(),
        warnings: results.iter().filter_map(|r| r.warning.clone()).collect(),
        outputs,
    };
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(RunOutcome { manifest, reports })
}
