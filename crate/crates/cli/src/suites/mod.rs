//! Named scenario batches. Each writes its per-scenario tables and then a
//! `summary.csv` with one pass/fail row per criterion.

mod lemmas;
mod qualitative;
pub mod solver;
mod sweep;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::artifacts::{write_summary, CriterionResult, Table};
use crate::{create_dir, create_file, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    PaperQualitative,
    SolverOracle,
    LemmaProperties,
    ThresholdSweep,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::PaperQualitative,
        Suite::SolverOracle,
        Suite::LemmaProperties,
        Suite::ThresholdSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::PaperQualitative => "paper-qualitative",
            Suite::SolverOracle => "solver-oracle",
            Suite::LemmaProperties => "lemma-properties",
            Suite::ThresholdSweep => "threshold-sweep",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| CliError::UnknownSuite(s.to_string()))
    }
}

/// Sizes of the synthetic scenarios. The defaults are the full runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    /// Records per generated population.
    pub n_records: usize,
    /// Populations in the qualitative suite, seeded `0..n_seeds`.
    pub n_seeds: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            n_records: 50_000,
            n_seeds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub criteria: Vec<CriterionResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }
}

fn criterion(name: &str, passed: bool, detail: impl Into<String>) -> CriterionResult {
    CriterionResult {
        name: name.to_string(),
        passed,
        detail: detail.into(),
    }
}

fn write_table(table: &Table, out: &Path, name: &str) -> Result<()> {
    table.write(create_file(&out.join(name))?)
}

/// Runs `suite` at full size and writes its artifacts into `out`.
pub fn run_suite(suite: Suite, out: &Path) -> Result<SuiteReport> {
    run_suite_with(suite, &SuiteOptions::default(), out)
}

pub fn run_suite_with(suite: Suite, options: &SuiteOptions, out: &Path) -> Result<SuiteReport> {
    create_dir(out)?;
    let criteria = match suite {
        Suite::PaperQualitative => qualitative::run(options, out)?,
        Suite::SolverOracle => solver::run(out)?,
        Suite::LemmaProperties => lemmas::run(out)?,
        Suite::ThresholdSweep => sweep::run(options, out)?,
    };
    write_summary(&criteria, create_file(&out.join("summary.csv"))?)?;
    Ok(SuiteReport { suite, criteria })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!(matches!("fast".parse::<Suite>(), Err(CliError::UnknownSuite(_))));
    }
}
