//! Command-line front end for the tripartite Bell-test simulator.

mod commands;
mod config;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tribell_core::belltest::MeasurementSetting;

use config::{parse_setting, Overrides, ProtocolChoice, RunConfig};
use report::{render, write_atomic, Format, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tribell_core::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use tribell_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::Config(_) | E::Usage(_)) => 2,
            CliError::Core(E::Numerical(_) | E::AttemptCap { .. }) => 3,
            CliError::Core(E::Internal(_)) | CliError::Io(_) | CliError::Internal(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "tribell", version, about = "Heralded GHZ and W state nonlocality simulator")]
struct Cli {
    /// Worker threads for shot sampling. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the results here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Herald one entangled pair of ensembles.
    Pair(Overrides),
    /// GHZ correlation battery.
    Ghz(Overrides),
    /// W-state property tests.
    W(Overrides),
    /// Mermin operator for a chosen setting pair.
    Mermin {
        #[command(flatten)]
        common: Overrides,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolChoice>,
        #[arg(long, value_parser = parse_setting)]
        a: Option<MeasurementSetting>,
        #[arg(long, value_parser = parse_setting)]
        b: Option<MeasurementSetting>,
    },
    /// Expected preparation time against simulated attempt counts.
    Timing {
        #[command(flatten)]
        common: Overrides,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolChoice>,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        t1: Option<f64>,
        #[arg(long)]
        attempt_cap: Option<u64>,
    },
}

fn load(o: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(o.config.as_deref())?;
    cfg.apply(o);
    Ok(cfg)
}

type Action = fn(&RunConfig) -> Result<Report, CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (cfg, action): (RunConfig, Action) = match &cli.command {
        Command::Pair(o) => {
            let mut cfg = load(o)?;
            cfg.protocol = ProtocolChoice::Pair;
            (cfg, commands::cmd_pair)
        }
        Command::Ghz(o) => {
            let mut cfg = load(o)?;
            cfg.protocol = ProtocolChoice::Ghz;
            (cfg, commands::cmd_ghz)
        }
        Command::W(o) => {
            let mut cfg = load(o)?;
            cfg.protocol = ProtocolChoice::W;
            (cfg, commands::cmd_w)
        }
        Command::Mermin { common, protocol, a, b } => {
            let mut cfg = load(common)?;
            if let Some(p) = protocol {
                cfg.protocol = *p;
            }
            if let Some(a) = a {
                cfg.mermin_a = *a;
            }
            if let Some(b) = b {
                cfg.mermin_b = *b;
            }
            (cfg, commands::cmd_mermin)
        }
        Command::Timing {
            common,
            protocol,
            t0,
            t1,
            attempt_cap,
        } => {
            let mut cfg = load(common)?;
            if let Some(p) = protocol {
                cfg.protocol = *p;
            }
            if let Some(t) = t0 {
                cfg.t0 = *t;
            }
            if let Some(t) = t1 {
                cfg.t1 = *t;
            }
            if let Some(c) = attempt_cap {
                cfg.attempt_cap = *c;
            }
            (cfg, commands::cmd_timing)
        }
    };
    cfg.validate()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Internal(e.to_string()))?;
    let report = pool.install(|| action(&cfg))?;

    for note in &report.notes {
        eprintln!("note: {note}");
    }
    let bytes = render(&report, &cfg, cli.format)?;
    match &cli.out {
        Some(path) => write_atomic(path, &bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
