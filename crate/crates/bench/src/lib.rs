//! Experiment harness for the tensor Krylov recursions: spec parsing, the
//! runner and CSV output.

pub mod runner;
pub mod spec;

pub use runner::{execute, run_experiment, Outcome, Report, Row};
pub use spec::{ExperimentSpec, Method, Rank, Source, StartPolicy};
