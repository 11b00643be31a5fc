//! Batch harness over `kinetic-core`: one JSON config in, one JSON report out.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::{RunConfig, Subcommand};
pub use error::{ToolError, ToolResult};
pub use report::{compare_reports, Report};
pub use run::run;
