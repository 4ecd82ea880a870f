use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use taylor_hjb_cli::commands::{self, Command};
use taylor_hjb_cli::config::parse_config;
use taylor_hjb_cli::{output, CliError};

/// Taylor-series optimal stabilization of a controlled reaction–diffusion rod.
#[derive(Parser, Debug)]
#[command(name = "taylor-hjb", version)]
struct Cli {
    /// Pipeline stage to run.
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (`section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|source| CliError::ReadConfig { path: cli.config.clone(), source })?;
    let mut cfg = parse_config(&text)?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    let result = commands::run(cli.command, &cfg)?;
    output::write_all(&cfg.out_dir, &result.files)?;
    Ok(result.stdout)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(stdout) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
