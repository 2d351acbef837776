//! Experiment protocols wiring data generation, training and scoring into
//! result files.
//!
//! A run writes into its output directory:
//!
//! - `config.json`: the configuration as run
//! - `results.csv`: one row per (condition, seed)
//! - `summary.csv`: min, max, mean and sample std per condition
//! - `trajectory.csv`: per-epoch training metrics
//! - `scores.csv`: AUROC per source, accuracy and false positives at each
//!   scored epoch
//! - `runs/<condition>/seed-<seed>/`: checkpoints, feature dumps, densities
//! - `manifest.json`: every file above with its SHA-256

mod config;
mod manifest;
mod pipeline;
mod report;
mod run;
mod tables;

pub use config::{ExperimentConfig, ExperimentKind, InterventionSettings, SCHEMA_VERSION};
pub use manifest::{sha256_hex, ArtifactEntry, FailureRecord, Manifest, MANIFEST_FILE};
pub use pipeline::{evaluate, EvalSummary, Evaluation};
pub use report::{
    report, CORRELATION_FILE, CORRELATION_SUMMARY_FILE, FALSE_POSITIVE_FILE, NC_TRAJECTORY_FILE,
    SCORE_CURVES_FILE,
};
pub use run::{
    generate_datasets, run_experiment, train_models, RunOutcome, CONFIG_FILE, RESULTS_FILE, SCORES_FILE,
    SUMMARY_FILE, TRAJECTORY_FILE,
};
pub use tables::{describe, RESULT_METRICS};
