//! Command-line entry points: serve the mock endpoint, run a tree-search
//! generation against any compatible endpoint, and analyze a finalized store
//! into tables, plots, and a JSON report.

pub mod commands;
pub mod report;
pub mod svg;

pub use commands::{
    cmd_analyze, cmd_run, cmd_serve_mock, AnalyzeOptions, CliError, RunOptions, ENDPOINT_ENV,
};
pub use report::{ReportBundle, REPORT_SCHEMA_VERSION};

impl CliError {
    /// Process exit code: 2 config, 3 endpoint, 4 empty or insufficient data.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Endpoint(_) => 3,
            CliError::InsufficientData(_) => 4,
            CliError::Internal(_) => 1,
        }
    }
}
