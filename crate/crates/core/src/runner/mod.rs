//! Experiment orchestration: configs, seeded runs, persistence, comparison
//! tables and sweeps.

mod compare;
mod config;
mod experiment;
mod io;
mod sweep;

pub use compare::{compare, ComparisonRow, ComparisonTable, Stat};
pub use config::{
    AnalysisConfig, DataConfig, DomainConfig, EmbeddingsConfig, ExperimentConfig, FallbackMode,
    ModelConfig,
};
pub use experiment::{
    analyze_drift, build_dataset, build_targets, deviations, run_experiment, run_experiment_with,
    run_seed, BlockHash, CorrelationResult, DriftFeatures, DriftSeries, Manifest, ManifestEntry,
    RunOptions, RunRecord, SeedOutcome, SeedResult, FRAMEWORK_VERSION,
};
pub use io::{read_json, write_atomic, write_json};
pub use sweep::{sweep, sweep_configs, SweepAxis};
