use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

mod config;
mod output;
mod run;
mod verify;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "dtc", version, about = "Driven Tavis-Cummings experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an oracle suite and report measured residuals.
    Verify {
        #[arg(value_enum)]
        suite: verify::Suite,
    },
    /// Print the JSON schema of the config format.
    Schema,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

fn init_threads(threads: Option<usize>) -> Result<usize, String> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(rayon::current_num_threads())
}

fn run_config(path: PathBuf, threads: Option<usize>, out: Option<PathBuf>) -> ExitCode {
    let mut cfg = match ExperimentConfig::from_path(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Some(dir) = out {
        cfg.output.directory = dir;
    }
    let threads = match init_threads(threads.or(cfg.numerics.threads)) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };
    let start = Instant::now();
    let outcome = match run::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("numerical failure in {:?}: {e}", cfg.experiment);
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    match output::write_all(&cfg.output.directory, &cfg, &outcome, threads, elapsed) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: writing results to {}: {e}", cfg.output.directory.display());
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}

fn run_verify(suite: verify::Suite) -> ExitCode {
    let checks = match verify::run(suite) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("suite {suite:?} aborted: {e}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        println!(
            "{}  {:<width$}  {:>11.3e}  (limit {:.0e})",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.limit
        );
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{} checks, {failed} failed", checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NUMERICAL)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, threads, out } => run_config(config, threads, out),
        Command::Verify { suite } => run_verify(suite),
        Command::Schema => {
            println!(
                "{}",
                serde_json::to_string_pretty(&config::schema()).expect("schema serializes")
            );
            ExitCode::SUCCESS
        }
    }
}
