//! `urllc-plan`: bandwidth dimensioning, capacity, HARQ planning, exact
//! blocking and simulation for URLLC traffic described in a scenario file.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod output;
mod scenario;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use urllc_core::exact_queue::{ExactOptions, DEFAULT_STATE_CAP};
use urllc_core::harq::{OptimizerOptions, Regime, SumConvention, DEFAULT_MAX_STAGES};

use commands::{Report, SplitSpec, SweepSpec};
use error::{CliError, CliResult};
use output::ReportEnvelope;
use scenario::Scenario;

#[derive(Debug, Parser)]
#[command(name = "urllc-plan", version, about = "Plan bandwidth for deadline-constrained low-latency traffic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (JSON, schema 1).
    #[arg(long)]
    scenario: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Maximum worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Largest stage count the optimizer considers.
    #[arg(long, default_value_t = DEFAULT_MAX_STAGES)]
    max_stages: u32,
    /// Number of geometric terms in the optimizer objective.
    #[arg(long, value_enum, default_value_t = Convention::Transmissions)]
    convention: Convention,
}

impl PlanArgs {
    fn options(&self) -> OptimizerOptions {
        OptimizerOptions {
            max_stages: self.max_stages,
            convention: match self.convention {
                Convention::Transmissions => SumConvention::Transmissions,
                Convention::ExtraTerm => SumConvention::ExtraTerm,
            },
        }
    }
}

#[derive(Debug, Args)]
struct ExactArgs {
    /// Refuse exact enumeration beyond this many states.
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    state_cap: u64,
}

impl ExactArgs {
    fn options(&self) -> ExactOptions {
        ExactOptions { state_cap: self.state_cap, ..Default::default() }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bandwidth needed for the scenario's traffic.
    Dimension {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        plan: PlanArgs,
        /// Target blocking probability; defaults to the strictest class target.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Largest arrival rate of a single class the bandwidth supports.
    Capacity {
        #[command(flatten)]
        common: Common,
        /// var:start:stop:steps[:log] with var one of bandwidth, sinr,
        /// sinr_db, deadline, reliability.
        #[arg(long)]
        sweep: Option<SweepSpec>,
    },
    /// Best number of HARQ stages per class.
    OptimizeHarq {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, value_enum)]
        regime: RegimeArg,
    },
    /// Exact per-class blocking probabilities.
    Blocking {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        exact: ExactArgs,
        /// class:factor; compare against the class spread over `factor`
        /// times the duration at `1/factor` of the bandwidth.
        #[arg(long)]
        split: Option<SplitSpec>,
    },
    /// Discrete-event simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Write a per-attempt CSV trace of the first replication. Without
        /// a path it goes next to --out, or to trace.csv.
        #[arg(long, num_args = 0..=1, value_name = "PATH")]
        trace: Option<Option<PathBuf>>,
    },
    /// Compare simulated and exact blocking for a single-attempt scenario.
    Validate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        exact: ExactArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Allowed deviation in confidence half-widths.
        #[arg(long, default_value_t = 3.0)]
        sigmas: f64,
    },
    /// Objective of every stage count, optionally along a parameter sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, value_enum)]
        regime: RegimeArg,
        /// var:start:stop:steps[:log] with var one of sinr_db, sinr,
        /// payload_bits, deadline, reliability, feedback_delay,
        /// arrival_rate, bandwidth.
        #[arg(long)]
        sweep: Option<SweepSpec>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Dimension { .. } => "dimension",
            Command::Capacity { .. } => "capacity",
            Command::OptimizeHarq { .. } => "optimize-harq",
            Command::Blocking { .. } => "blocking",
            Command::Simulate { .. } => "simulate",
            Command::Validate { .. } => "validate",
            Command::Sweep { .. } => "sweep",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Dimension { common, .. }
            | Command::Capacity { common, .. }
            | Command::OptimizeHarq { common, .. }
            | Command::Blocking { common, .. }
            | Command::Simulate { common, .. }
            | Command::Validate { common, .. }
            | Command::Sweep { common, .. } => common,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Mean,
    Variance,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Mean => Regime::Mean,
            RegimeArg::Variance => Regime::Variance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Convention {
    Transmissions,
    ExtraTerm,
}

fn execute(command: &Command, scenario: &Scenario) -> CliResult<Report> {
    match command {
        Command::Dimension { plan, delta, .. } => commands::dimension(scenario, &plan.options(), *delta),
        Command::Capacity { sweep, .. } => commands::capacity(scenario, sweep.as_ref()),
        Command::OptimizeHarq { plan, regime, .. } => {
            commands::optimize_harq(scenario, &plan.options(), (*regime).into())
        }
        Command::Blocking { plan, exact, split, .. } => {
            commands::blocking(scenario, &plan.options(), &exact.options(), *split)
        }
        Command::Simulate { plan, seed, trace, .. } => {
            commands::simulate_cmd(scenario, &plan.options(), *seed, trace.is_some())
        }
        Command::Validate { plan, exact, seed, sigmas, .. } => {
            commands::validate(scenario, &plan.options(), &exact.options(), *seed, *sigmas)
        }
        Command::Sweep { plan, regime, sweep, .. } => {
            commands::sweep(scenario, &plan.options(), (*regime).into(), sweep.as_ref())
        }
    }
}

fn trace_path(command: &Command) -> Option<PathBuf> {
    let Command::Simulate { common, trace: Some(path), .. } = command else {
        return None;
    };
    Some(match (path, &common.out) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => out.with_extension("trace.csv"),
        (None, None) => PathBuf::from("trace.csv"),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("writing {}: {e}", p.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("writing standard output: {e}"))),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let common = cli.command.common();
    let scenario = Scenario::load(&common.scenario)?;
    let report = execute(&cli.command, &scenario)?;
    if let (Some(path), Some(trace)) = (trace_path(&cli.command), &report.trace) {
        write_text(Some(&path), &trace.to_csv())?;
    }
    let text = match common.format {
        Format::Csv => report.table.to_csv(),
        Format::Json => {
            let envelope = ReportEnvelope::new(scenario.digest(), cli.command.name(), report.payload);
            let mut s = serde_json::to_string_pretty(&envelope).expect("report serializes");
            s.push('\n');
            s
        }
    };
    write_text(common.out.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.command.common().threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(n);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(&cli)),
        Err(e) => Err(CliError::Io(format!("starting worker threads: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
