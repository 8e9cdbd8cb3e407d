use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evoconv_cli::{build_config, exit_code, list_text, output_dir, run, write_outputs, EXIT_USAGE};

/// Evolutionary equations and G-convergence experiments.
#[derive(Parser)]
#[command(name = "evoconv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write report.json, report.csv and summary.txt.
    Run {
        experiment: String,
        /// Flat `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: evoconv-out/<experiment>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config key, e.g. `--set n_values=4,8`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List the available experiments.
    List,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match cli.command {
        Command::List => {
            print!("{}", list_text());
            ExitCode::SUCCESS
        }
        Command::Run {
            experiment,
            config,
            out,
            overrides,
        } => {
            let cfg = match build_config(&experiment, config.as_deref(), out.as_deref(), &overrides) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("evoconv: {e:#}");
                    return ExitCode::from(EXIT_USAGE as u8);
                }
            };
            let report = match run(&cfg) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("evoconv: {e:#}");
                    return ExitCode::from(EXIT_USAGE as u8);
                }
            };
            let dir = output_dir(&cfg);
            if let Err(e) = write_outputs(&dir, &cfg, &report) {
                eprintln!("evoconv: {e:#}");
                return ExitCode::from(EXIT_USAGE as u8);
            }
            print!("{}", report.summary());
            println!("reports written to {}", dir.display());
            ExitCode::from(exit_code(&report) as u8)
        }
    }
}
