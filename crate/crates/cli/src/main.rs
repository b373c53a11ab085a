use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fracheat_cli::{parse_config, run, Command};

/// Fractional heat equation with memory: validation, simulation, sweeps.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides `threads` in the config.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(c) = cfg.command.filter(|c| *c != args.command) {
        eprintln!("error: config is for `{}`, not `{}`", c.name(), args.command.name());
        return ExitCode::from(2);
    }
    let Some(out) = args.out.or_else(|| cfg.output_dir.clone()) else {
        eprintln!("error: no output directory; pass --out or set output_dir");
        return ExitCode::from(2);
    };
    match args.threads.or(cfg.threads) {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        Some(k) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                eprintln!("error: thread pool: {e}");
                return ExitCode::from(1);
            }
        }
        None => {}
    }
    match run(args.command, &cfg, &out) {
        Ok(outcome) => {
            if outcome.exit_code() == 0 {
                println!("{}", outcome.message());
            } else {
                eprintln!("{}", outcome.message());
            }
            println!("artifacts: {}", out.display());
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
