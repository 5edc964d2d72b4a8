//! Experiment configuration, Monte Carlo driver, report files and the
//! verification suite.

pub mod config;
pub mod experiment;
pub mod report;
pub mod verify;

pub use config::{ExperimentConfig, ExperimentSection, NormSelector, ProblemSection};
pub use experiment::{predicted_ceiling, run_experiment, run_experiment_with, CellResult, DifferenceRecord, ErrorReport, RateEntry};
pub use report::emit_report;
pub use verify::{run_verification_suite, CheckOutcome, VerificationReport};
