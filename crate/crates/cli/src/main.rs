use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multifrac_cli::commands::{self, Outcome};
use multifrac_cli::{CliError, Config};

#[derive(Parser)]
#[command(name = "multifrac", version, about = "Multi-term time-fractional diffusion experiments")]
struct Cli {
    /// Experiment configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides output.dir in the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel solvers
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for the random test banks; overrides seed in the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Mittag-Leffler tables and identity checks
    MlEval,
    /// Run the configured solver and write the field
    Solve,
    /// Compare the configured solver with the reference solver
    Crosscheck,
    /// Long-time decay report
    Asymptotics,
    /// Recover the orders from one interior observation
    Invert,
    /// Full acceptance suite
    Accept,
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = Config::load(path)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let outcome = match cli.command {
        Command::MlEval => commands::ml_eval(&cfg)?,
        Command::Solve => commands::solve(&cfg)?,
        Command::Crosscheck => commands::crosscheck(&cfg)?,
        Command::Asymptotics => commands::asymptotics(&cfg)?,
        Command::Invert => commands::invert(&cfg)?,
        Command::Accept => commands::accept(&cfg, cfg.seed(cli.seed))?,
    };
    let dir = cli.out.clone().or_else(|| cfg.raw.output.dir.as_ref().map(|d| cfg.base.join(d))).unwrap_or_else(|| PathBuf::from("out"));
    outcome.artifacts.write_to(&dir)?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            if outcome.failed > 0 {
                eprintln!("{}", CliError::Checks(outcome.failed));
                ExitCode::from(CliError::Checks(outcome.failed).exit_code() as u8)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
