//! Scenario files, price series, the deterministic event loop and its outputs.

mod agents;
mod engine;
mod file;
mod metrics;
mod output;
mod prices;
mod validate;

use std::path::Path;

use thiserror::Error;

pub use agents::AgentSpec;
pub use engine::{
    run, ActionRecord, ActionSource, ArbRow, LockedDeposit, RunOptions, RunOutput, Sim,
};
pub use file::{AccountSpec, Action, Scenario, ScriptedEvent, DEFAULT_CHECKPOINT_INTERVAL};
pub use metrics::{
    frames_from_rows, mean_position_size, GlobalMetrics, MarketMetrics, MetricsFrame, MetricsRow,
    METRICS_COLUMNS,
};
pub use output::{
    read_metrics_csv, read_metrics_json, write_outputs, OutputFormat, RunSummary, OUTPUT_FILES_CSV,
};
pub use prices::{PriceError, PriceSeries};
pub use validate::{validate, Diagnostic, DiagnosticKind};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Prices(#[from] PriceError),
    #[error("scenario failed validation with {} diagnostic(s)", .0.len())]
    Invalid(Vec<Diagnostic>),
    #[error("event {event} ({action}) at t={time}: {message}")]
    Runtime {
        event: usize,
        time: u64,
        action: String,
        message: String,
    },
}

impl ScenarioError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
