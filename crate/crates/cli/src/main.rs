use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlflow_cli::config::{self, Overrides};
use nlflow_cli::presets::{self, Log};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "nlflow", version, about = "Minimizing-movements experiments for local and nonlocal curvature flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory for run artifacts, overriding `output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Random seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Level count for level-set runs, overriding `step.levels`.
    #[arg(long, global = true, value_name = "N")]
    levels: Option<usize>,

    /// Only print the final summary line.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured preset.
    Run { config: PathBuf },
    /// Check the configuration and print the effective settings.
    Validate { config: PathBuf },
}

fn threads() -> Result<(), String> {
    let Ok(v) = std::env::var("NLFLOW_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| format!("NLFLOW_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let overrides = Overrides { output_dir: cli.output_dir, seed: cli.seed, levels: cli.levels };
    let (path, execute) = match &cli.command {
        Command::Run { config } => (config, true),
        Command::Validate { config } => (config, false),
    };
    let cfg = match config::load(path, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if !execute {
        if let Err(e) = cfg.geometry() {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
        println!("OK");
        print!("{}", cfg.echo());
        return ExitCode::SUCCESS;
    }
    match presets::run(&cfg, &Log { quiet: cli.quiet }) {
        Ok(report) => {
            if !cli.quiet {
                for c in &report.checks {
                    println!("{c}");
                }
            }
            let verdict = if report.passed() { "PASS" } else { "FAIL" };
            println!("{verdict}: {} in {:.1} s, artifacts in {}", cfg.preset.name(), report.seconds, report.dir.display());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Err(e) => {
            eprintln!("error: {}: {e}", cfg.preset.name());
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
