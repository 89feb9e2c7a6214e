use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use kgsa_cli::checks::Context;
use kgsa_cli::commands::{self, Outcome};
use kgsa_cli::{CliError, RunConfig, EXIT_FAILED, EXIT_OK, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "kgsa", version, about = "Spike-potential plane wave spacetimes: geodesics, causality and reduced Klein-Gordon spectra")]
struct Cli {
    /// TOML run configuration; every key is optional
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for all sampling
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides every solver tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Spike table and summability of Σεₙn²
    Potential,
    /// Integrate one geodesic and report conserved-quantity drift
    Geodesic,
    /// Sample the cone comparison and the basis-vector catalog
    Cone,
    /// Bound the causal diamond between two points
    Diamond,
    /// Endpoint classification and deficiency indices for one reduced momentum
    Weyl,
    /// ‖ψ‖ over a parameter cube and its threshold
    Normmap,
    /// Run the full verification suite
    Verify,
}

fn configure(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.display().to_string();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(t) = cli.tol {
        cfg.override_tol(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let cfg = configure(cli)?;
    // a second initialization only fails if a pool already exists, which is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    let out = PathBuf::from(&cfg.out);
    let mut ctx = Context::new(cfg)?;
    let outcome: Outcome = match cli.command {
        Command::Potential => commands::potential(&ctx)?,
        Command::Geodesic => commands::geodesic(&ctx)?,
        Command::Cone => commands::cone(&mut ctx)?,
        Command::Diamond => commands::diamond(&ctx)?,
        Command::Weyl => commands::weyl(&ctx)?,
        Command::Normmap => commands::normmap(&ctx)?,
        Command::Verify => commands::verify(&mut ctx)?,
    };
    outcome.artifacts.write_all(&out)?;
    for l in &outcome.lines {
        println!("{l}");
    }
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let defaults = format!("Default configuration:\n\n{}", RunConfig::default().to_toml());
    let matches = match Cli::command().after_long_help(defaults).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::from(EXIT_OK as u8),
        Ok(false) => ExitCode::from(EXIT_FAILED as u8),
        Err(e) => {
            eprintln!("kgsa: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
