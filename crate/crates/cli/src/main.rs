use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use geoconn_cli::{execute, CliError, Command, Format, RunConfig, RunOptions, EXIT_CONFIG, EXIT_RUNTIME};

#[derive(Parser)]
#[command(name = "geoconn", version, about = "Connections over a vector bundle map: checks, transport, derivatives, curvature and torsion")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// RK4 steps per unit parameter length.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: FormatArg,
    /// Omit the timestamp so reruns are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the verification suite.
    Check,
    /// Parallel transport along a configured curve.
    Transport {
        #[arg(long, default_value_t = 0)]
        curve: usize,
        /// CSV file for the (t, x, y) samples of the lift.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Derivative operator over sections and points.
    Nabla,
    /// Curvature component table.
    Curvature,
    /// Torsion component table.
    Torsion,
    /// Dimensions, anchor rank and kernel.
    Describe,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("GEOCONN_THREADS") else {
        return Ok(());
    };
    let threads: usize =
        raw.trim().parse().map_err(|_| CliError::Config(format!("GEOCONN_THREADS: expected a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global().map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    let path = cli.config.ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let config = RunConfig::load(&path)?;
    let (command, curve, samples) = match cli.command {
        Sub::Check => (Command::Check, 0, None),
        Sub::Transport { curve, samples } => (Command::Transport, curve, samples),
        Sub::Nabla => (Command::Nabla, 0, None),
        Sub::Curvature => (Command::Curvature, 0, None),
        Sub::Torsion => (Command::Torsion, 0, None),
        Sub::Describe => (Command::Describe, 0, None),
    };
    let opts = RunOptions {
        seed: cli.seed,
        steps: cli.steps,
        format: match cli.format {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        },
        deterministic: cli.deterministic,
        curve,
        samples,
    };
    let output = execute(command, &config, &opts)?;
    match &cli.out {
        Some(out) => std::fs::write(out, &output.body).map_err(|e| CliError::Runtime(format!("writing {}: {e}", out.display())))?,
        None => print!("{}", output.body),
    }
    Ok(output.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("geoconn: {e}");
            let code = e.exit_code();
            debug_assert!(code == EXIT_CONFIG || code == EXIT_RUNTIME);
            ExitCode::from(code)
        }
    }
}
