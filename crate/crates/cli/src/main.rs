use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bdsde_lab_cli::{bench_kernel, parse_config, resolve_threads, run_experiment, ExperimentConfig, Mode};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "db-lab",
    version,
    about = "Monte Carlo laboratory for backward doubly stochastic equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `[paths] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `[output] dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; falls back to DB_LAB_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks listed in the config.
    Run(RunArgs),
    /// Run every check; inapplicable ones are skipped.
    Verify(RunArgs),
    /// Time path generation, the Q-factor and one LSMC sweep.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut config = parse_config(&text).map_err(|e| format!("{}:\n{e}", path.display()))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn run(args: RunArgs, mode: Mode) -> Result<ExitCode, String> {
    let config = load(&args.config, args.seed)?;
    let threads = resolve_threads(args.threads)?;
    let mut config = config;
    if let Some(dir) = args.out_dir {
        config.out_dir = dir;
    }
    let manifest = run_experiment(&config, &config.out_dir, mode, threads).map_err(|e| e.to_string())?;
    for c in &manifest.checks {
        let detail = c.error.as_deref().unwrap_or("");
        println!("{:<16} {:?} {detail}", c.name, c.status);
    }
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(a) = &manifest.aborted {
        eprintln!("aborted: {a}");
    }
    println!("reports in {}", config.out_dir.display());
    Ok(ExitCode::from(manifest.exit_code() as u8))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a, Mode::Run),
        Command::Verify(a) => run(a, Mode::Verify),
        Command::Bench { config, threads } => (|| {
            let config = load(&config, None)?;
            let threads = resolve_threads(threads)?;
            let report = bench_kernel(&config, threads).map_err(|e| e.to_string())?;
            print!("{}", report.to_csv());
            Ok(ExitCode::SUCCESS)
        })(),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
