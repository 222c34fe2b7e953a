use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dams_cli::commands::{cmd_eval, cmd_gen_data, cmd_report, cmd_sweep, cmd_train};
use dams_cli::error::exit;
use dams_cli::run::METRICS_FILE;
use dams_cli::{CliError, Result};
use dams_core::data::SyntheticSpec;

#[derive(Debug, Parser)]
#[command(name = "dams", version, about = "Margin-scheduled triplet training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-cluster dataset as CSV.
    GenData {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        center_scale: f64,
        #[arg(long, default_value_t = 0.1)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one training job described by a TOML config.
    Train { config: PathBuf },
    /// Run a DAMS grid sweep described by a TOML config.
    Sweep {
        config: PathBuf,
        /// Run grid points one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Evaluate a saved model on a CSV dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        ks: Vec<usize>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract plot-ready curves from a run directory.
    Report {
        run: PathBuf,
        /// Defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            classes,
            per_class,
            dim,
            center_scale,
            spread,
            seed,
            out,
        } => {
            let spec = SyntheticSpec {
                num_classes: classes,
                samples_per_class: per_class,
                feature_dim: dim,
                center_scale,
                spread,
            };
            let ds = cmd_gen_data(&spec, seed, &out)?;
            println!("wrote {} rows, {} classes to {}", ds.len(), ds.num_classes(), out.display());
        }
        Command::Train { config } => {
            let (cfg, outcome) = cmd_train(&config)?;
            let last = outcome.history.last().expect("at least one epoch");
            println!(
                "trained {} epochs ({}), final margin {}, last easy proportion {:.4}",
                outcome.history.len(),
                cfg.train.scheduler.kind,
                outcome.final_margin(),
                last.easy_proportion
            );
            if let Some(report) = outcome.final_report() {
                print!("{}", report.to_kv_text());
            }
            println!("outputs in {}", cfg.output_dir.display());
            if outcome.final_report().is_none() {
                println!("no evaluation set; {METRICS_FILE} not written");
            }
        }
        Command::Sweep { config, sequential } => {
            let rows = cmd_sweep(&config, !sequential)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!("{} runs, {} failed", rows.len(), failed);
        }
        Command::Eval {
            model,
            data,
            seed,
            ks,
            out,
        } => {
            let report = cmd_eval(&model, &data, seed, &ks)?;
            let text = report.to_kv_text();
            print!("{text}");
            if let Some(path) = out {
                write(&path, &text)?;
            }
        }
        Command::Report { run, out } => {
            let out = out.unwrap_or_else(|| run.clone());
            let rows = cmd_report(&run, &out)?;
            println!("wrote 3 curves with {rows} epochs to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
