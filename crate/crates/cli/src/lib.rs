//! Benchmark harness for the Bloch-generator identification pipeline:
//! scenario configs, seeded Monte Carlo trial runners, error-distribution
//! summaries, and the comparison table used by the CLI.

pub mod bench;

pub use bench::{
    compare_settings, run_experiment, ComparisonTable, ErrorDistribution, ExperimentConfig,
    ExperimentOutcome, LabeledConfig, Method, ModelSource, TrialRecord,
};
