use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hormander_lab_cli::{catalog, run, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "Run hormander-lab experiments from a config file")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a JSON or TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Report path; defaults to the config's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Exit with status 2 when an asserted check fails.
        #[arg(long)]
        assert: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the experiment catalog.
    List {
        #[arg(long)]
        json: bool,
    },
}

fn execute(config: PathBuf, out: Option<PathBuf>, seed: Option<u64>, assert: bool, threads: Option<usize>) -> Result<bool, CliError> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("threads: {e}")))?;
    }
    let mut config = ExperimentConfig::load(&config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let out = out.or_else(|| config.output.clone());
    let report = run(config, assert)?;
    match out {
        Some(path) => {
            let csv = report.write(&path)?;
            eprintln!("wrote {} and {}", path.display(), csv.display());
        }
        None => println!("{}", report.to_json()),
    }
    for c in &report.checks {
        let status = if c.passed { "pass" } else if c.asserted { "FAIL" } else { "info" };
        eprintln!("{status:>4}  {}: {:e} {} {:e}", c.name, c.value, c.comparison, c.threshold);
    }
    Ok(!assert || report.assertions_hold())
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List { json } => {
            if json {
                println!("{}", catalog::catalog_json());
            } else {
                print!("{}", catalog::catalog_text());
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, out, seed, assert, threads } => match execute(config, out, seed, assert, threads) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(CliError::ASSERTION_EXIT),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(CliError::INPUT_EXIT)
            }
        },
    }
}
