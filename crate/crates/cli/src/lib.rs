//! Config-driven experiments and named scenario suites over the audit
//! allocation library.

pub mod artifacts;
pub mod config;
pub mod experiment;
pub mod suites;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::ExperimentConfig;
pub use experiment::{build_population, run_experiment, Manifest, RunOutcome};
pub use suites::{run_suite, Suite, SuiteReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(
        "unknown suite {0:?}, expected one of: paper-qualitative, solver-oracle, lemma-properties, threshold-sweep"
    )]
    UnknownSuite(String),
    #[error(transparent)]
    Population(#[from] audit_core::population::PopulationError),
    #[error(transparent)]
    Scoring(#[from] audit_core::scoring::ScoringError),
    #[error(transparent)]
    Fairness(#[from] audit_core::fairness::FairnessError),
    #[error(transparent)]
    Allocation(#[from] audit_core::allocation::AllocationError),
    #[error(transparent)]
    Metrics(#[from] audit_core::metrics::MetricsError),
    #[error("malformed artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 1 for anything the user can fix in the invocation or config.
    pub fn exit_code(&self) -> u8 {
        1
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Derives an independent stream seed from a master seed.
pub fn mix_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        })
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}
