use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use porodyn::commands::{self, Outcome};
use porodyn::{parse_config, Result};

#[derive(Parser)]
#[command(
    name = "porodyn",
    version,
    about = "Implicit solver and property checks for degenerate diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Base seed (overrides `[seeds] base`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `[outputs] directory`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write snapshots plus a manifest.
    Solve(Common),
    /// Run property suites; exits with status 1 when one fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Run only this suite.
        #[arg(long)]
        suite: Option<String>,
    },
    /// Scan fractional norms across refinements.
    Regularity(Common),
    /// Estimate the kinetic defect measure and residuals.
    Kinetic(Common),
    /// Solve every point of the `[sweep]` parameter grid.
    Sweep(Common),
}

fn run(cli: Cli) -> Result<Outcome> {
    let (common, suite) = match &cli.command {
        Command::Verify { common, suite } => (common, suite.as_deref()),
        Command::Solve(c) | Command::Regularity(c) | Command::Kinetic(c) | Command::Sweep(c) => {
            (c, None)
        }
    };
    let mut config = parse_config(&common.config)?;
    commands::apply_overrides(&mut config, common.seed, common.out.as_deref());
    match cli.command {
        Command::Solve(_) => commands::cmd_solve(&config),
        Command::Verify { .. } => {
            if let Some(s) = suite {
                if !porodyn::config::SUITES.contains(&s) {
                    return Err(porodyn::CliError::Validation(vec![format!(
                        "unknown suite {s:?}"
                    )]));
                }
            }
            commands::cmd_verify(&config, suite)
        }
        Command::Regularity(_) => commands::cmd_regularity(&config),
        Command::Kinetic(_) => commands::cmd_kinetic(&config),
        Command::Sweep(_) => commands::cmd_sweep(&config),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) if outcome.failed => {
            eprintln!(
                "porodyn: property check failed; see {}",
                outcome.out_dir.display()
            );
            ExitCode::from(1)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("porodyn: {e}");
            ExitCode::from(2)
        }
    }
}
