//! Command-line front end for `qrvie-core`: scenario files, threaded
//! schedule execution, the solve pipeline, experiments and text outputs.

pub mod error;
pub mod experiments;
pub mod output;
pub mod parallel;
pub mod pipeline;
pub mod scenario;

pub use error::{CliError, CliResult};
pub use scenario::Scenario;
