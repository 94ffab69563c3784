mod model;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use forksim_core::fixed::Price;
use forksim_core::fork_arb::{break_even_rate, ForkError, TimeToMerge};
use forksim_core::scenario::{
    self, validate, write_outputs, OutputFormat, PriceError, PriceSeries, RunOptions, Scenario,
    ScenarioError,
};
use thiserror::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "forksim",
    version,
    about = "Lending-market simulator around a chain fork"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios and write metrics and ledgers.
    Run(RunArgs),
    /// Print a borrow-rate table over a utilization grid.
    Rates(RatesArgs),
    /// Print the break-even annual borrow rate for a forked-token price ratio.
    Breakeven(BreakevenArgs),
    /// Check a scenario file without running it.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file; repeat to run several.
    #[arg(long, required = true)]
    scenario: Vec<PathBuf>,
    /// Price CSV; defaults to the path named in the scenario.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Output directory. FORKSIM_OUT takes precedence when set.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint interval in seconds; overrides the scenario.
    #[arg(long)]
    interval: Option<u64>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Scenarios to run in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct RatesArgs {
    /// aave, aave-stable, compound-linear or compound-jump.
    #[arg(long)]
    model: String,
    /// Overrides as key=value pairs, e.g. "r0=0.02,slope=0.1".
    #[arg(long)]
    params: Option<String>,
    /// Comma-separated utilizations; defaults to 101 points over [0, 1].
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct BreakevenArgs {
    #[arg(long = "p-ethw")]
    p_ethw: Price,
    #[arg(long = "p-eth")]
    p_eth: Price,
    #[arg(long = "horizon-seconds")]
    horizon_seconds: u64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Also check price coverage against this file.
    #[arg(long)]
    prices: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] model::BadModelSpec),
    #[error("{0:?}: {0}")]
    Fork(#[from] ForkError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(e) => match e {
                ScenarioError::Io { .. } | ScenarioError::Prices(PriceError::Io(_)) => EXIT_IO,
                ScenarioError::Runtime { .. } => EXIT_RUNTIME,
                ScenarioError::Parse(_) | ScenarioError::Prices(_) | ScenarioError::Invalid(_) => {
                    EXIT_VALIDATION
                }
            },
            CliError::Model(_) | CliError::Fork(_) | CliError::Usage(_) => EXIT_VALIDATION,
            CliError::Output(_) => EXIT_IO,
        }
    }

    fn report(&self) {
        eprintln!("error: {self}");
        if let CliError::Scenario(ScenarioError::Invalid(diags)) = self {
            for d in diags {
                eprintln!("  {d}");
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Rates(args) => cmd_rates(args),
        Command::Breakeven(args) => cmd_breakeven(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.exit_code())
        }
    }
}

fn output_dir(flag: &Path) -> PathBuf {
    match std::env::var_os("FORKSIM_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.to_path_buf(),
    }
}

fn load_prices(scenario: &Scenario, flag: Option<&Path>) -> Result<PriceSeries, CliError> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| scenario.prices.clone())
        .ok_or_else(|| {
            CliError::Usage("no price file: pass --prices or set `prices` in the scenario".into())
        })?;
    Ok(PriceSeries::load(&path).map_err(ScenarioError::from)?)
}

fn run_one(path: &Path, args: &RunArgs, out: &Path) -> Result<(), CliError> {
    let scenario = Scenario::load(path)?;
    let prices = load_prices(&scenario, args.prices.as_deref())?;
    let opts = RunOptions {
        seed: args.seed,
        checkpoint_interval: args.interval,
    };
    let output = scenario::run(&scenario, &prices, opts)?;
    let written = write_outputs(&output, out, args.format)?;
    println!(
        "{}: {} frames, {} liquidations -> {}",
        path.display(),
        output.frames.len(),
        output.liquidations.len(),
        written
            .first()
            .and_then(|p| p.parent())
            .unwrap_or(out)
            .display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    if args.interval == Some(0) {
        return Err(CliError::Usage("--interval must be positive".into()));
    }
    let out = output_dir(&args.out);
    let targets: Vec<(PathBuf, PathBuf)> = if args.scenario.len() == 1 {
        vec![(args.scenario[0].clone(), out)]
    } else {
        args.scenario
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let stem = p.file_stem().map_or_else(
                    || format!("scenario_{i}"),
                    |s| s.to_string_lossy().into_owned(),
                );
                (p.clone(), out.join(format!("{i:02}_{stem}")))
            })
            .collect()
    };

    let next = AtomicUsize::new(0);
    let failures: Mutex<Vec<(usize, CliError)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..args.jobs.clamp(1, targets.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((path, dir)) = targets.get(i) else {
                    break;
                };
                if let Err(e) = run_one(path, &args, dir) {
                    failures
                        .lock()
                        .expect("no panics while holding the lock")
                        .push((i, e));
                }
            });
        }
    });
    let mut failures = failures.into_inner().expect("threads joined");
    failures.sort_by_key(|(i, _)| *i);
    let mut iter = failures.into_iter();
    let first = iter.next();
    for (i, e) in iter {
        eprint!("{}: ", targets[i].0.display());
        e.report();
    }
    match first {
        Some((i, e)) => {
            eprint!("{}: ", targets[i].0.display());
            Err(e)
        }
        None => Ok(()),
    }
}

fn cmd_rates(args: RatesArgs) -> Result<(), CliError> {
    let model = model::parse_model(&args.model, args.params.as_deref())?;
    let grid = match &args.grid {
        Some(g) => model::parse_grid(g)?,
        None => model::uniform_grid(100),
    };
    println!("utilization,borrow_rate");
    for u in grid {
        println!("{},{}", u.value(), model.rate(u));
    }
    Ok(())
}

fn cmd_breakeven(args: BreakevenArgs) -> Result<(), CliError> {
    let horizon = TimeToMerge::new(args.horizon_seconds)?;
    let rate = break_even_rate(args.p_ethw, args.p_eth, horizon)?;
    println!("{rate}");
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let scenario = Scenario::load(&args.scenario)?;
    let path = args.prices.or_else(|| scenario.prices.clone());
    let prices = match path {
        Some(p) => Some(PriceSeries::load(&p).map_err(ScenarioError::from)?),
        None => None,
    };
    let diagnostics = validate(&scenario, prices.as_ref());
    if diagnostics.is_empty() {
        println!("{}: ok", args.scenario.display());
        Ok(())
    } else {
        Err(ScenarioError::Invalid(diagnostics).into())
    }
}
