//! `rail`: simulate, inspect and serve the chunk linker.

mod report;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rail_core::protocol::{Client, RemoteSource, Server, TcpTransport};
use rail_core::runtime::live::run_live;
use rail_core::runtime::{ChunkOutcome, Strategy};
use rail_sim::latency::SampledDelay;
use rail_sim::metrics::DerivativeSource;
use rail_sim::policy::{stream, SharedPolicy, SyntheticPolicy};
use rail_sim::robot::{LiveRobot, SimulatedRobot};
use rail_sim::trace::TraceError;
use rail_sim::{control_gaps, run_scenario, RunTrace, Scenario, ScenarioError};

#[derive(Parser, Debug)]
#[command(name = "rail", version, about = "Smooth, latency-compensated execution of action chunks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario on the virtual clock and export its trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's strategy.
        #[arg(long)]
        strategy: Option<StrategyArg>,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smoothness and discontinuity summary of one or two traces.
    Report {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Also write the per-window statistics as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Where velocity/acceleration samples come from; `auto` uses
        /// finite differences for raw traces only.
        #[arg(long, value_enum, default_value_t = Derivatives::Auto)]
        derivatives: Derivatives,
    },
    /// Serve a policy over TCP until interrupted.
    Serve {
        #[arg(long, value_enum)]
        policy: PolicyKind,
        /// Scenario file supplying the policy, inference delay and seed.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
    /// Run the threaded executive in wall-clock time against a server.
    Client {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario duration, seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Raw,
    Naive,
    Rail,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Raw => Strategy::Raw,
            StrategyArg::Naive => Strategy::Naive,
            StrategyArg::Rail => Strategy::Rail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Derivatives {
    Auto,
    Analytic,
    Fd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyKind {
    Synthetic,
}

/// Process exit status by failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    Config = 1,
    Runtime = 2,
    Io = 3,
}

/// Marks an error as a runtime fault regardless of its type.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct RuntimeFault(String);

fn classify(err: &anyhow::Error) -> Failure {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ScenarioError>() {
            return match e {
                ScenarioError::Io { .. } => Failure::Io,
                _ => Failure::Config,
            };
        }
        if let Some(e) = cause.downcast_ref::<TraceError>() {
            return match e {
                TraceError::Io { .. } => Failure::Io,
                _ => Failure::Config,
            };
        }
        if cause.is::<RuntimeFault>() {
            return Failure::Runtime;
        }
        if cause.is::<std::io::Error>() {
            return Failure::Io;
        }
    }
    Failure::Runtime
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Failure::Config as u8) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { scenario, strategy, seed, out } => cmd_run(&scenario, strategy.map(Into::into), seed, &out),
        Command::Report { trace, compare, csv, derivatives } => {
            cmd_report(&trace, compare.as_deref(), csv.as_deref(), derivatives)
        }
        Command::Serve { policy: PolicyKind::Synthetic, config, listen } => cmd_serve(&config, &listen),
        Command::Client { connect, scenario, duration, out } => {
            cmd_client(&connect, &scenario, duration, out.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(classify(&e) as u8)
        }
    }
}

/// The error chain joined by `: `, skipping causes that the previous
/// message already spells out.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&msg)) {
            parts.push(msg);
        }
    }
    parts.join(": ")
}

fn load(path: &Path) -> anyhow::Result<Scenario> {
    Scenario::load(path).with_context(|| format!("scenario {}", path.display()))
}

fn cmd_run(path: &Path, strategy: Option<Strategy>, seed: Option<u64>, out: &Path) -> anyhow::Result<()> {
    let mut s = load(path)?;
    if let Some(st) = strategy {
        s = s.with_strategy(st);
    }
    if let Some(seed) = seed {
        s = s.with_seed(seed);
    }
    let run = run_scenario(&s)?;
    run.trace.export(out)?;
    println!("{}", summary(&run.trace, s.linker.f_ctrl));
    println!("trace written to {}", out.display());
    Ok(())
}

/// One line: ticks, commands, chunk outcomes and control gaps.
fn summary(trace: &RunTrace, f_ctrl: f64) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, r) in trace.reports() {
        let key = match &r.outcome {
            ChunkOutcome::Installed => "installed",
            ChunkOutcome::Fused { .. } => "fused",
            ChunkOutcome::Switched { .. } => "switched",
            ChunkOutcome::Discarded(_) => "discarded",
        };
        *counts.entry(key).or_default() += 1;
    }
    let chunks: Vec<String> = counts.iter().map(|(k, n)| format!("{k}={n}")).collect();
    format!(
        "strategy={} ticks={} commands={} chunks[{}] control_gaps={}",
        trace.strategy.map_or("?", Strategy::as_str),
        trace.rows.len(),
        trace.commands().count(),
        chunks.join(" "),
        control_gaps(trace, f_ctrl).len()
    )
}

fn cmd_report(
    trace: &Path,
    compare: Option<&Path>,
    csv: Option<&Path>,
    derivatives: Derivatives,
) -> anyhow::Result<()> {
    let mut entries = Vec::new();
    for path in std::iter::once(trace).chain(compare) {
        let t = RunTrace::import(path)?;
        let source = match derivatives {
            Derivatives::Auto => DerivativeSource::for_strategy(t.strategy),
            Derivatives::Analytic => DerivativeSource::Analytic,
            Derivatives::Fd => DerivativeSource::FiniteDifference,
        };
        let r = rail_sim::metrics::smoothness_report_with(&t, source)
            .map_err(|e| RuntimeFault(format!("{}: {e}", path.display())))?;
        let jumps = rail_sim::discontinuity_report(&t);
        entries.push(report::Entry { name: path.display().to_string(), report: r, jumps });
    }
    print!("{}", report::render(&entries));
    if let Some(csv) = csv {
        let io = |e| TraceError::Io { path: csv.display().to_string(), source: e };
        std::fs::write(csv, report::windows_csv(&entries)).map_err(io)?;
    }
    Ok(())
}

fn cmd_serve(config: &Path, listen: &str) -> anyhow::Result<()> {
    let s = load(config)?;
    s.validate()?;
    let policy = SyntheticPolicy::new(
        s.policy.clone(),
        s.linker.discrete_channels.clone(),
        s.linker.alpha(),
        s.latency.sensor,
        s.seed,
    );
    let (inference, seed) = (s.latency.inference, s.seed);
    let server =
        Server::spawn(listen, SharedPolicy(Mutex::new(policy)), move || SampledDelay::new(inference, stream(seed, 3)))
            .map_err(|e| RuntimeFault(format!("cannot listen on {listen}: {e}")))?;
    println!("listening on {}", server.local_addr());
    std::io::stdout().flush()?;
    server.wait();
    Ok(())
}

fn cmd_client(connect: &str, path: &Path, duration: Option<f64>, out: Option<&Path>) -> anyhow::Result<()> {
    let mut s = load(path)?;
    if let Some(d) = duration {
        s.duration = d;
    }
    s.validate()?;
    let transport =
        TcpTransport::connect(connect).map_err(|e| RuntimeFault(format!("cannot connect to {connect}: {e}")))?;
    info!("connected to {connect}");
    let timeout = Duration::from_secs_f64(s.linker.request_timeout);
    let source = RemoteSource::new(Client::new(transport), timeout);
    let robot = LiveRobot { robot: SimulatedRobot::new(s.robot, s.initial_position()), period: 1.0 / s.linker.f_ctrl };
    let outcome = run_live(&s.linker, robot, source, &s.instruction, s.duration);
    let trace = RunTrace { dims: s.policy.dims, strategy: Some(s.linker.strategy), rows: outcome.records };
    if let Some(out) = out {
        trace.export(out)?;
    }
    println!("{}", summary(&trace, s.linker.f_ctrl));
    match outcome.inference_error {
        Some(e) => {
            warn!("inference abandoned: {e}");
            Err(anyhow!(RuntimeFault(format!("inference abandoned: {e}"))))
        }
        None => Ok(()),
    }
}
