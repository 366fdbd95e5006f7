//! Experiment orchestration library behind the `quelec` binary: config
//! loading/validation, the experiment engine, model fitting and result
//! persistence.

pub mod config;
pub mod experiments;
pub mod fit;
pub mod output;
