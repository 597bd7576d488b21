use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::config::ExperimentConfig;
use super::pipeline::{run_plan, summary, HarnessError, Plan};

#[derive(Debug, Parser)]
#[command(name = "cocycle-lab", version, about = "Seeded experiments with linear cocycles")]
struct Cli {
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full pipeline.
    Run { config: PathBuf },
    /// Exponent estimates only.
    Estimate { config: PathBuf },
    /// Exponents, periodic approximation and norm growth rates.
    Periodic { config: PathBuf },
    /// Joint spectral radius bounds.
    Jsr { config: PathBuf },
    /// Exponents and Lyapunov norm checks.
    Lyapnorm { config: PathBuf },
    /// Parse and validate a config without computing anything.
    Validate { config: PathBuf },
}

/// Entry point behind the binary; returns the process exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Cli::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let (path, plan) = match &args.command {
        Command::Run { config } => (config, Some(Plan::Full)),
        Command::Estimate { config } => (config, Some(Plan::Estimate)),
        Command::Periodic { config } => (config, Some(Plan::Periodic)),
        Command::Jsr { config } => (config, Some(Plan::Jsr)),
        Command::Lyapnorm { config } => (config, Some(Plan::LyapNorm)),
        Command::Validate { config } => (config, None),
    };
    let mut cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    let Some(plan) = plan else {
        return match cfg.build() {
            Ok(_) => {
                eprintln!("{}: ok", path.display());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        };
    };
    match run_with_env_threads(&cfg, plan) {
        Ok(bundle) => {
            eprint!("{}", summary(&bundle));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// `COCYCLE_LAB_THREADS` caps the worker pool.
fn run_with_env_threads(cfg: &ExperimentConfig, plan: Plan) -> Result<super::ResultBundle, HarnessError> {
    let threads = std::env::var("COCYCLE_LAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool");
            pool.install(|| run_plan(cfg, plan))
        }
        None => run_plan(cfg, plan),
    }
}
