use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kerrcat_cli::run::{plan, Overrides};
use kerrcat_cli::{run, CliError, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "kerrcat", version, about = "Run Kerr-cat experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory for CSV and JSON output (overrides the config).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Worker threads for sweeps, ensembles and Wigner grids.
    #[arg(long, global = true, env = "KERRCAT_WORKERS")]
    workers: Option<usize>,

    /// Replace the master seed of trajectory runs.
    #[arg(long, global = true)]
    seed_override: Option<u64>,

    /// Use this many Fock levels instead of the config's cutoff.
    #[arg(long, global = true)]
    cutoff_override: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write its tables.
    Run { config: PathBuf },
    /// Check a config and estimate its cutoff and memory without running it.
    Validate { config: PathBuf },
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let overrides =
        Overrides { output_dir: cli.output_dir.clone(), seed: cli.seed_override, cutoff: cli.cutoff_override };
    match &cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(config)?;
            for path in run(&cfg, &overrides)? {
                println!("{}", path.display());
            }
        }
        Command::Validate { config } => {
            let cfg = overrides.apply(&ExperimentConfig::load(config)?)?;
            let p = plan(&cfg)?;
            println!("ok: {}", config.display());
            println!("scenario: {}", p.scenario);
            println!("cutoff: {} (heuristic {})", p.cutoff, p.heuristic_cutoff);
            println!("estimated memory: {:.1} MiB", p.memory_bytes as f64 / (1024.0 * 1024.0));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
