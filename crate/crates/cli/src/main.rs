use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::SweepCommand;
use error::CliError;

/// Spreading speeds of reaction-diffusion equations with shifting
/// environments and delayed nonlocal reactions.
#[derive(Parser, Debug)]
#[command(name = "spreadspeed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir` and SPREADSPEED_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override a configuration value, e.g. `--set scenario.c1=2.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Spreading speed from the closed-form case tables.
    Speed,
    /// Solve the ray equation and report its free boundary.
    Hj,
    /// Integrate the full equation and fit the front speed.
    Simulate,
    /// Compare the analytic, ray-equation and simulated speeds.
    Validate,
    /// Repeat a command over `sweep.values` of `sweep.key`.
    Sweep,
}

fn execute(cli: &Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let tree = config::load_tree(&config::read_text(cli.config.as_deref())?, &cli.overrides)?;
    let cfg = config::from_tree(tree.clone())?;
    let out = config::output_dir(cli.out.as_deref(), &cfg);
    let (outcome, code) = match cli.command {
        Command::Speed => (commands::run(SweepCommand::Speed, &cfg, &out)?, 0),
        Command::Hj => (commands::run(SweepCommand::Hj, &cfg, &out)?, 0),
        Command::Simulate => (commands::run(SweepCommand::Simulate, &cfg, &out)?, 0),
        Command::Validate => {
            let o = commands::run(SweepCommand::Validate, &cfg, &out)?;
            let code = if o.passed == Some(false) { 4 } else { 0 };
            (o, code)
        }
        Command::Sweep => commands::sweep(&tree, &cfg, &out)?,
    };
    println!("{}", outcome.summary);
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => {
            if matches!(cli.command, Command::Validate) {
                eprintln!("error: {}", CliError::Mismatch("at least one check is outside its tolerance".into()));
            }
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
