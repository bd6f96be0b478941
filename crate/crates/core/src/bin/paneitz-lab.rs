use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use paneitz_lab::config::parse_config;
use paneitz_lab::scenario::{render_assertions, run_scenario};
use paneitz_lab::Error;

/// Run a Paneitz-energy experiment described by a config file.
#[derive(Parser, Debug)]
#[command(name = "paneitz-lab", version, about)]
struct Args {
    /// Scenario file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the nodes per axis of the coarsest grid.
    #[arg(long)]
    grid: Option<usize>,
    /// Override the number of refinement levels.
    #[arg(long)]
    refine: Option<usize>,
    /// Override the seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<i32, Error> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg = parse_config(&text)?.with_overrides(args.grid, args.refine, args.seed, args.out)?;
    let outcome = run_scenario(&cfg)?;
    print!("{}", render_assertions(&outcome.assertions));
    println!("summary: {}", outcome.summary_path.display());
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
