//! Thin command-line front end over the library's runner actions.

use clap::Parser;
use dualporo::runner::{dispatch, Overrides, EXIT_USAGE};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "dualporo",
    about = "Dual-porosity two-phase flow toolkit",
    disable_help_subcommand = true
)]
struct Cli {
    /// One of: curves, homogenize, macro, micro, block-demo, convergence
    action: String,
    /// Scenario configuration file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config's output.directory)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Contrast exponent override
    #[arg(long)]
    theta: Option<f64>,
    /// Comma-separated cell-size list for micro/convergence actions
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // treat every argument problem as a usage error, including --help
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(EXIT_USAGE as u8),
            };
        }
    };
    let overrides = Overrides {
        theta: cli.theta,
        epsilons: cli.epsilon,
        out_dir: cli.out_dir,
    };
    let code = dispatch(&cli.action, &cli.config, &overrides);
    ExitCode::from(code as u8)
}
