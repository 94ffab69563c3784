use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::engine::{LockedDeposit, RunOutput};
use super::metrics::{frames_from_rows, MetricsFrame, MetricsRow};
use super::ScenarioError;
use crate::fixed::{Amount, Ray, Value};
use crate::fork_arb::ForkReport;

pub const OUTPUT_FILES_CSV: &[&str] = &[
    "metrics.csv",
    "liquidations.csv",
    "arb_positions.csv",
    "actions.csv",
    "summary.json",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

/// Run metadata written next to the ledgers.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    pub scenario: &'a str,
    pub seed: u64,
    pub checkpoint_interval: u64,
    pub frames: usize,
    pub liquidations: usize,
    pub actions: usize,
    pub rejected_actions: usize,
    pub keeper_violations: u64,
    pub max_bad_debt_value: Value,
    pub max_bad_debt_total: Value,
    pub max_bad_debt_ratio: Ray,
    pub ethw_minted: Amount,
    pub fork: Option<&'a ForkReport>,
    pub locked_deposits: &'a [LockedDeposit],
}

impl<'a> RunSummary<'a> {
    pub fn new(out: &'a RunOutput) -> Self {
        RunSummary {
            scenario: &out.name,
            seed: out.seed,
            checkpoint_interval: out.checkpoint_interval,
            frames: out.frames.len(),
            liquidations: out.liquidations.len(),
            actions: out.actions.len(),
            rejected_actions: out.actions.iter().filter(|a| !a.succeeded()).count(),
            keeper_violations: out.keeper_violations,
            max_bad_debt_value: out.max_bad_debt.bad_debt_value,
            max_bad_debt_total: out.max_bad_debt.total_debt_value,
            max_bad_debt_ratio: out.max_bad_debt.ratio(),
            ethw_minted: out.fork.as_ref().map_or(Amount::ZERO, |f| f.total_minted()),
            fork: out.fork.as_ref(),
            locked_deposits: &out.locked_deposits,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ScenarioError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| ScenarioError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> ScenarioError {
    ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_csv<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
    header: &[&str],
) -> Result<(), ScenarioError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| ScenarioError::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ScenarioError> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    f.write_all(b"\n")
        .and_then(|_| f.flush())
        .map_err(|e| ScenarioError::io(path, e))
}

const LIQUIDATION_COLUMNS: &[&str] = &[
    "time",
    "liquidator",
    "borrower",
    "protocol",
    "debt_market",
    "debt_asset",
    "collateral_market",
    "collateral_asset",
    "repaid",
    "seized",
    "repaid_value",
    "seized_value",
    "health_before",
    "health_after",
];

const ARB_COLUMNS: &[&str] = &[
    "account",
    "open_time",
    "close_time",
    "borrowed",
    "interest_paid",
    "ethw_received",
    "pnl",
];

const ACTION_COLUMNS: &[&str] = &[
    "time",
    "source",
    "action",
    "account",
    "market",
    "amount",
    "outcome",
    "cash_before",
    "debt_after",
];

/// Write all run artifacts into `dir`, creating it if needed. Returns the written paths.
pub fn write_outputs(
    out: &RunOutput,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>, ScenarioError> {
    std::fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    let rows: Vec<MetricsRow> = out.frames.iter().flat_map(MetricsFrame::rows).collect();
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            let p = dir.join("metrics.csv");
            write_csv(&p, &rows, super::METRICS_COLUMNS)?;
            written.push(p);
            let p = dir.join("liquidations.csv");
            write_csv(&p, &out.liquidations, LIQUIDATION_COLUMNS)?;
            written.push(p);
            let p = dir.join("arb_positions.csv");
            write_csv(&p, &out.arb_positions, ARB_COLUMNS)?;
            written.push(p);
            let p = dir.join("actions.csv");
            write_csv(&p, &out.actions, ACTION_COLUMNS)?;
            written.push(p);
        }
        OutputFormat::Json => {
            let p = dir.join("metrics.json");
            write_json(&p, &rows)?;
            written.push(p);
            let p = dir.join("liquidations.json");
            write_json(&p, &out.liquidations)?;
            written.push(p);
            let p = dir.join("arb_positions.json");
            write_json(&p, &out.arb_positions)?;
            written.push(p);
            let p = dir.join("actions.json");
            write_json(&p, &out.actions)?;
            written.push(p);
        }
    }
    let p = dir.join("summary.json");
    write_json(&p, &RunSummary::new(out))?;
    written.push(p);
    Ok(written)
}

/// Parse `metrics.csv` back into frames.
pub fn read_metrics_csv(reader: impl Read) -> Result<Vec<MetricsFrame>, ScenarioError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if headers.iter().ne(super::METRICS_COLUMNS.iter().copied()) {
        return Err(ScenarioError::Parse(
            "metrics.csv header does not match the expected columns".into(),
        ));
    }
    let rows = rdr
        .deserialize::<MetricsRow>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ScenarioError::Parse(e.to_string()))?;
    Ok(frames_from_rows(rows))
}

pub fn read_metrics_json(reader: impl Read) -> Result<Vec<MetricsFrame>, ScenarioError> {
    let rows: Vec<MetricsRow> =
        serde_json::from_reader(reader).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    Ok(frames_from_rows(rows))
}
