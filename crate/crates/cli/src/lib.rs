//! Command-line front end: configuration, stage orchestration and run reports.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use config::RunConfig;
pub use error::CliError;
pub use pipeline::{run, Target};
pub use report::RunReport;
