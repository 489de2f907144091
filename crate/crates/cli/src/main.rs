use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pension_dc_cli::{run, CliError, Command, RunConfig, THREADS_ENV};

#[derive(Parser)]
#[command(version, about = "Defined-contribution pension allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Configuration file of `key = value` lines; defaults apply otherwise
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing
    #[arg(long, global = true, default_value = "pension-dc-out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Risk-aversion parameter; repeat for several runs
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Vec<f64>,
    #[arg(long, global = true, value_enum)]
    variant: Option<Variant>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Optimal allocations, phi and varphi on the time grid
    Strategies,
    /// Terminal expected utility and the wealth fan chart
    Simulate,
    /// Verification suite; exits with 1 if an asserted check fails
    Verify,
    /// Paired comparison against rival rules on common random numbers
    Compare,
}

#[derive(ValueEnum, Clone, Copy)]
enum Variant {
    Foc,
    Paper,
}

fn threads() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config {
                line: None,
                key: THREADS_ENV.into(),
                message: format!("`{v}` is not a positive integer"),
            }),
        },
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(paths) = cli.paths {
        cfg.n_paths = paths;
    }
    if let Some(steps) = cli.steps {
        cfg.n_steps = steps;
    }
    if !cli.alpha.is_empty() {
        cfg.alphas = cli.alpha.clone();
    }
    if let Some(v) = cli.variant {
        cfg.override_key(
            "strategy.variant",
            if matches!(v, Variant::Foc) {
                "foc"
            } else {
                "paper"
            },
        )?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::Strategies => Command::Strategies,
        Sub::Simulate => Command::Simulate,
        Sub::Verify => Command::Verify,
        Sub::Compare => Command::Compare,
    };
    let outcome = resolve(&cli).and_then(|cfg| run(command, &cfg, &cli.out, threads()?));
    match outcome {
        Ok(outcome) => {
            for check in &outcome.checks {
                println!(
                    "{:<6} {} = {:.6e} {}",
                    check.status.label(),
                    check.name,
                    check.value,
                    check.tolerance
                );
            }
            for file in &outcome.manifest.outputs {
                println!("wrote {}", cli.out.join(&file.name).display());
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
