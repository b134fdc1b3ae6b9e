//! `gexpect` — worst-case expectations over volatility-uncertain scenario
//! trees, with a finite-difference cross-check, monotone-extension drivers,
//! capacity enumeration, and stopping-time diagnostics.

mod commands;
mod config;
mod spec;

use std::collections::BTreeMap;
use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use gexpect::Result;
use serde::Serialize;
use serde_json::Value;

use commands::{CmdResult, EngineChoice, Payload};
use config::RunConfig;

/// Exit code for malformed invocations.
const EXIT_USAGE: u8 = 64;
/// Exit code for domain errors (bad parameters, infeasible models).
const EXIT_DOMAIN: u8 = 2;

#[derive(Parser)]
#[command(name = "gexpect", version, about = "Worst-case expectation engines")]
struct Cli {
    /// Path to a JSON run configuration.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<String>,

    /// Seed for sampled payoffs (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Tree resolution override (steps to the horizon).
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Largest tolerated gap before the gap exit code fires.
    #[arg(long, global = true, default_value_t = 1e-12, allow_negative_numbers = true)]
    gap_tol: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Worst-case expectation of a payoff, optionally conditioned at a time.
    Expect {
        /// Payoff spec, e.g. `call:0.0` or `envc:[0.4,inf):8`.
        #[arg(long)]
        payoff: String,
        /// Lattice time to condition at (tree engine only).
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_enum, default_value_t = EngineChoice::Tree)]
        engine: EngineChoice,
    },
    /// Worst-case probability of a tree event over all volatility selections.
    Capacity {
        /// Event spec, e.g. `pos_ge:0.0` or `qv_in:[0.4,0.6]`.
        #[arg(long)]
        event: String,
    },
    /// Verify that node values are attained by exhaustive selection search.
    Represent {
        /// How many sampled payoffs to check.
        #[arg(long, default_value_t = 20)]
        payoffs: usize,
        /// Restrict the check to the lattice level at this time.
        #[arg(long)]
        t: Option<f64>,
    },
    /// Drive a monotone family of payoffs to its limiting expectation.
    Extend {
        /// Scheme spec, e.g. `envdown:[0.4,inf)` or `envup:(0.4,inf)`.
        #[arg(long)]
        scheme: String,
        #[arg(long, value_enum, default_value_t = EngineChoice::Tree)]
        engine: EngineChoice,
    },
    /// Optional-stopping and dyadic-coarsening diagnostics for an exit time.
    Stop {
        /// Region the process starts in; the rule fires on first leaving it,
        /// e.g. `[-0.9,0.9]`.
        #[arg(long)]
        exit: String,
        #[arg(long, default_value = "call:0.0")]
        payoff: String,
        /// Dyadic refinement indices to report.
        #[arg(long, value_delimiter = ',')]
        ns: Vec<u32>,
    },
    /// Boundary run: a shrinking band of quadratic variation whose
    /// worst-case weight stays at one while its pointwise limit vanishes.
    Counterexample {
        /// Band index n; the band is `(sigma_high_sq - 1/n, sigma_high_sq)`.
        #[arg(long, default_value_t = 4)]
        band_n: u64,
    },
    /// Tree-vs-PDE convergence sweep; emits CSV.
    Convergence {
        #[arg(long, default_value = "call:0.0")]
        payoff: String,
    },
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    config_echo: &'a RunConfig,
    values: BTreeMap<String, Value>,
    gaps: BTreeMap<String, f64>,
    iterations: Option<u64>,
    runtime_ms: u128,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Expect { .. } => "expect",
        Command::Capacity { .. } => "capacity",
        Command::Represent { .. } => "represent",
        Command::Extend { .. } => "extend",
        Command::Stop { .. } => "stop",
        Command::Counterexample { .. } => "counterexample",
        Command::Convergence { .. } => "convergence",
    }
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<CmdResult> {
    match &cli.command {
        Command::Expect { payoff, t, engine } => {
            commands::expect_cmd(cfg, payoff, *t, *engine, cli.n)
        }
        Command::Capacity { event } => commands::capacity_cmd(cfg, event, cli.n),
        Command::Represent { payoffs, t } => {
            commands::represent_cmd(cfg, *payoffs, *t, cli.n, cli.gap_tol)
        }
        Command::Extend { scheme, engine } => commands::extend_cmd(cfg, scheme, *engine, cli.n),
        Command::Stop { exit, payoff, ns } => {
            commands::stop_cmd(cfg, exit, payoff, ns, cli.n, cli.gap_tol)
        }
        Command::Counterexample { band_n } => commands::counterexample_cmd(cfg, *band_n, cli.n),
        Command::Convergence { payoff } => commands::convergence_cmd(cfg, payoff),
    }
}

fn emit(out: Option<&str>, text: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let mut cfg = match cli
        .config
        .as_deref()
        .map(|p| RunConfig::load(std::path::Path::new(p)))
        .transpose()
    {
        Ok(cfg) => cfg.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_DOMAIN);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let started = Instant::now();
    let result = match run(&cli, &cfg) {
        Ok(result) => result,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_DOMAIN);
        }
    };
    let runtime_ms = started.elapsed().as_millis();

    let text = match result.payload {
        Payload::Report {
            values,
            gaps,
            iterations,
        } => {
            let report = Report {
                command: command_name(&cli.command),
                config_echo: &cfg,
                values,
                gaps,
                iterations,
                runtime_ms,
            };
            let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
            s.push('\n');
            s
        }
        Payload::Csv(csv) => csv,
    };
    if let Err(e) = emit(cli.out.as_deref(), &text) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_DOMAIN);
    }
    ExitCode::from(u8::try_from(result.exit).unwrap_or(EXIT_DOMAIN))
}
