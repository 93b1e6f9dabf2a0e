//! Command-line front end: reads a `key = value` run configuration, executes
//! one experiment, and writes a CSV plus a summary next to it. Exit codes:
//! 0 success, 1 assertion failure, 2 configuration error, 3 numerical error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod config;
mod runner;

/// Experiment runner for ERM lower-bound simulations on finite spaces.
#[derive(Parser)]
#[command(name = "ermlab", version)]
struct Args {
    /// Path to the run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config's `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path, overriding the config's `output` key. The summary
    /// lands next to it with the extension `summary.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread count. Changes speed only; output bytes never depend
    /// on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn fail(code: u8, message: &str) -> ExitCode {
    eprintln!("ermlab: {message}");
    ExitCode::from(code)
}

fn run_cli(args: Args) -> ExitCode {
    if let Some(threads) = args.threads {
        if threads == 0 {
            return fail(2, "--threads must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            return fail(2, &format!("cannot size the thread pool: {e}"));
        }
    }

    let text = match std::fs::read_to_string(&args.config) {
        Ok(text) => text,
        Err(e) => return fail(2, &format!("cannot read config {}: {e}", args.config.display())),
    };
    let mut config = match config::parse_config(&text) {
        Ok(config) => config,
        Err(message) => return fail(2, &message),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.output = Some(out);
    }
    let Some(csv_path) = config.output.clone() else {
        return fail(2, "no output path: set `output` in the config or pass --out");
    };

    let artifacts = match runner::run(&config) {
        Ok(artifacts) => artifacts,
        Err(error) => {
            let code = match &error {
                ermlab_core::Error::Numerical(_) => 3,
                _ => 2,
            };
            return fail(code, &error.to_string());
        }
    };

    if let Err(e) = std::fs::write(&csv_path, &artifacts.csv) {
        return fail(2, &format!("cannot write {}: {e}", csv_path.display()));
    }
    let summary_path = csv_path.with_extension("summary.txt");
    if let Err(e) = std::fs::write(&summary_path, &artifacts.summary) {
        return fail(2, &format!("cannot write {}: {e}", summary_path.display()));
    }
    print!("{}", artifacts.summary);
    println!("wrote {}", csv_path.display());
    println!("wrote {}", summary_path.display());

    if artifacts.assertion_failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for failure in &artifacts.assertion_failures {
            eprintln!("ermlab: assertion failed: {failure}");
        }
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    run_cli(Args::parse())
}
