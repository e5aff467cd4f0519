//! Experiment harness around `lrsd-core`: instance bundles, solver runs,
//! trace CSVs and convergence charts. The `lrsd` binary is a thin wrapper
//! over [`commands`].

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod matfile;
pub mod report;
pub mod run;
pub mod svg;

pub use error::CliError;
