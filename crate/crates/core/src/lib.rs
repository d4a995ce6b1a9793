//! Budget-constrained audit selection on weighted taxpayer populations.

pub mod allocation;
pub mod fairness;
pub mod metrics;
pub mod population;
pub mod scoring;
pub mod stats;
