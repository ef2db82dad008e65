//! Library side of the `datatrack` command: configuration, experiment
//! pipelines and the oracle verification suite.

pub mod command;
pub mod config;
pub mod experiment;
pub mod verify;

pub use config::ExperimentConfig;
pub use experiment::{run_identify, run_track, Summary, TrackOutcome};
pub use verify::{verify, VerifyReport};
