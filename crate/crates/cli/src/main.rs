use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ntsim_cli::{parse_config, plot_csv, run, CliError, RunConfig};

/// Environment variable that overrides the configured output directory.
const OUTPUT_DIR_VAR: &str = "NTSIM_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "ntsim",
    version,
    about = "Run the positioning, rail, scheduler and QoS studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study and write CSVs, plots and a manifest.
    Run {
        config: PathBuf,
        /// Output directory; takes precedence over the config and the environment.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check a config and print it with defaults filled in.
    Validate { config: PathBuf },
    /// Render the SVG chart for a CSV written by `run`.
    Plot { csv: PathBuf },
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let mut cfg = load(&config)?;
            if let Some(dir) = output_dir.or_else(|| std::env::var_os(OUTPUT_DIR_VAR).map(PathBuf::from)) {
                cfg.output_dir = dir;
            }
            let manifest = run(&cfg)?;
            for o in &manifest.outputs {
                match o.rows {
                    Some(n) => println!("{}  {} rows  {}", o.sha256, n, cfg.output_dir.join(&o.path).display()),
                    None => println!("{}  {}", o.sha256, cfg.output_dir.join(&o.path).display()),
                }
            }
            eprintln!("{} finished in {:.1} s", manifest.study, manifest.wall_time_s);
        }
        Command::Validate { config } => {
            print!("{}", load(&config)?.to_toml()?);
        }
        Command::Plot { csv } => {
            println!("{}", plot_csv(&csv)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
