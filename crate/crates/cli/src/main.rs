use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use matchsim_cli::{run, validate_config, Kind};

/// Run a matching-queue experiment.
#[derive(Parser, Debug)]
#[command(name = "matchsim", version = matchsim_cli::VERSION)]
struct Args {
    /// simulate-ctmc, simulate-limit, double-ended, generator-check,
    /// converge-sweep, compare-laws or oracle-validate.
    kind: Kind,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replications.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let raw = match std::fs::read_to_string(&args.config) {
        Ok(raw) => raw,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match validate_config(&raw, Some(args.kind)) {
        Ok(cfg) => cfg,
        Err(errors) => {
            eprintln!("error: invalid config {}:", args.config.display());
            for e in errors {
                eprintln!("  {e}");
            }
            return ExitCode::from(2);
        }
    };
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cfg) {
        Ok(done) => {
            println!("{}", serde_json::to_string_pretty(&done.summary["results"]).unwrap_or_default());
            println!("summary: {}", done.summary_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
