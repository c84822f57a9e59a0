use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gridcascade::harness::commands::{
    cmd_bimodal_meanfield, cmd_dcrit, cmd_meanfield, cmd_simulate, cmd_sweep_bimodal, cmd_sweep_dcrit, CommandOutput,
};
use gridcascade::harness::config::{load_config, SimulateConfig};
use gridcascade::harness::{emit, with_threads, OutputFormat};
use gridcascade::Error;

/// Cascading-failure simulator and mean-field threshold solver.
#[derive(Debug, Parser)]
#[command(name = "gridcascade", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON, or TOML when the name ends in .toml).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo cascades on random graphs.
    Simulate,
    /// One-level mean-field traces over a d_m grid.
    Meanfield,
    /// Two-level mean-field traces over a d_m grid.
    BimodalMeanfield,
    /// Critical disturbance for one model.
    Dcrit,
    /// Critical disturbance against the initial load a0.
    SweepDcrit,
    /// Critical disturbance over (a0, b0) at a fixed mean load.
    SweepBimodal,
}

fn run(cli: &Cli) -> Result<CommandOutput, Error> {
    let cfg = cli.config.as_deref();
    with_threads(cli.threads, || match cli.command {
        Command::Simulate => {
            let mut c: SimulateConfig = load_config(cfg)?;
            if cli.seed.is_some() {
                c.seed = cli.seed;
            }
            cmd_simulate(&c)
        }
        Command::Meanfield => cmd_meanfield(&load_config(cfg)?),
        Command::BimodalMeanfield => cmd_bimodal_meanfield(&load_config(cfg)?),
        Command::Dcrit => cmd_dcrit(&load_config(cfg)?),
        Command::SweepDcrit => cmd_sweep_dcrit(&load_config(cfg)?),
        Command::SweepBimodal => cmd_sweep_bimodal(&load_config(cfg)?),
    })
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_validation() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let output = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    match emit(&output, &cli.out, cli.format) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
