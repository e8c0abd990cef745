//! Experiment harness for `rcmdp`: JSON run configs, the three-variant
//! inventory experiment, and the oracle self-check behind `--verify`.

pub mod config;
pub mod error;
pub mod experiment;
pub mod verify;

pub use config::{DatasetConfig, Environment, EvaluationConfig, RunConfig, Variant, VariantOverrides};
pub use error::CliError;
pub use experiment::{export, run_all, run_experiment, ExperimentSummary, RunOutcome, VariantSummary, CSV_HEADER};
pub use verify::{verify, verify_with, Check, VerifyOptions, VerifyReport};
