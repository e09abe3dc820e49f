//! `qmemsim` command-line interface.
//!
//! Configuration precedence, lowest to highest: built-in defaults, the
//! `--config` file, `--set section.key=value` overrides, dedicated flags
//! such as `--seed`.

mod commands;
mod sink;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qmemsim::config::Config;

#[derive(Debug, Parser)]
#[command(name = "qmemsim", version, about = "Multiplexed quantum-repeater and chirped-pulse memory simulator")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed of the random subcommands; overrides `mc.seed` and `pulse.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Caps the number of worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides one configuration key, e.g. `--set mc.n_cycles=1000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Success probability versus distance, one CSV per spectral mode count.
    Analytic,
    /// Repeater-to-direct rate ratio over a (T2, eta_o) grid.
    Heatmap,
    /// Monte Carlo estimate of the success probability.
    Mc,
    /// Pulse-level simulation of a storage sequence.
    Pulse,
    /// Fits a decay model to `x,y[,sigma]` data.
    Fit(FitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitModelArg {
    Exp4,
    Mims,
    T1,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Data file; defaults to `fit.input`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Model; defaults to `fit.model`.
    #[arg(long, value_enum)]
    model: Option<FitModelArg>,
    /// Add a constant background to the T1 model.
    #[arg(long)]
    background: bool,
}

/// Exit status classes.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, configuration or input format (exit 2).
    Usage(String),
    /// The computation or I/O failed (exit 3).
    Runtime(String),
}

impl From<qmemsim::Error> for Failure {
    fn from(e: qmemsim::Error) -> Self {
        use qmemsim::Error as E;
        match e {
            E::Config(_) | E::InvalidParameter { .. } | E::Schedule(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load_config(global: &GlobalArgs) -> Result<Config, Failure> {
    let text = match &global.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = Config::with_overrides(&text, &global.overrides).map_err(|e| match (&global.config, e) {
        (Some(p), qmemsim::Error::Config(m)) => Failure::Usage(format!("{}: {m}", p.display())),
        (_, e) => e.into(),
    })?;
    if let Some(seed) = global.seed {
        cfg.mc.seed = Some(seed);
        cfg.pulse.seed = Some(seed);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(&cli.global)?;
    let out = &cli.global.out_dir;
    match cli.command {
        Command::Analytic => commands::analytic(cfg, out),
        Command::Heatmap => commands::heatmap(cfg, out),
        Command::Mc => commands::mc(cfg, out),
        Command::Pulse => commands::pulse(cfg, out),
        Command::Fit(args) => {
            let model = match args.model {
                Some(FitModelArg::Exp4) => Some("exp4".to_string()),
                Some(FitModelArg::Mims) => Some("mims".to_string()),
                Some(FitModelArg::T1) => Some("t1".to_string()),
                None => None,
            };
            commands::fit(cfg, out, args.input, model, args.background)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
