use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcc_harness::checks::{run_or_fail, CRITERIA};
use mcc_harness::config::keys_help;
use mcc_harness::datasets::Generator;
use mcc_harness::{emit_intervals, emit_report, run_experiment, run_interval_comparison, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(
    name = "calibrate",
    version,
    about = "Recalibrate regression models into calibrated distribution predictors",
    after_long_help = long_help()
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid and write report.csv, report.json and pit_histograms.csv
    #[command(after_long_help = long_help())]
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare conformal intervals with credible intervals of recalibrated predictors
    #[command(after_long_help = long_help())]
    Intervals {
        #[arg(long)]
        config: PathBuf,
        /// Target coverage in (0, 1)
        #[arg(long, default_value_t = 0.9)]
        level: f64,
    },
    /// Run the acceptance suite, one line per criterion
    #[command(after_long_help = long_help())]
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated criterion ids (default: all)
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
    /// Built-in datasets
    Datasets {
        #[command(subcommand)]
        action: DatasetsAction,
    },
}

#[derive(Subcommand)]
enum DatasetsAction {
    /// List the synthetic generators
    List,
}

fn long_help() -> String {
    format!("{}\nEnvironment:\n  CALIB_THREADS          cap on worker threads\n", keys_help())
}

fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    ExperimentConfig::from_path(path)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let report = run_experiment(&cfg)?;
            for path in emit_report(&report, &cfg.output_dir)? {
                println!("wrote {}", path.display());
            }
            let failed = report.failed_cells();
            if failed > 0 {
                return Err(HarnessError::CellsFailed {
                    failed,
                    total: report.rows.len(),
                });
            }
        }
        Command::Intervals { config, level } => {
            let cfg = load(&config)?;
            let report = run_interval_comparison(&cfg, level)?;
            for s in report.summary() {
                println!(
                    "{:<14} {:<14} {:<10} width {:>8} coverage {:>8}",
                    s.dataset,
                    s.base,
                    s.method,
                    fmt(s.width.mean),
                    fmt(s.coverage.mean)
                );
            }
            for path in emit_intervals(&report, &cfg.output_dir)? {
                println!("wrote {}", path.display());
            }
            let failed = report.failed_cells();
            if failed > 0 {
                return Err(HarnessError::CellsFailed {
                    failed,
                    total: report.rows.len(),
                });
            }
        }
        Command::Check { config, only } => {
            let cfg = load(&config)?;
            let ids: Vec<usize> = if only.is_empty() { (1..=CRITERIA).collect() } else { only };
            if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > CRITERIA) {
                return Err(HarnessError::Config(format!("no criterion {bad}")));
            }
            let mut failed = 0;
            for id in &ids {
                let out = run_or_fail(*id, &cfg);
                println!("{out}");
                failed += usize::from(!out.pass);
            }
            if failed > 0 {
                return Err(HarnessError::ChecksFailed {
                    failed,
                    total: ids.len(),
                });
            }
        }
        Command::Datasets {
            action: DatasetsAction::List,
        } => {
            for g in Generator::ALL {
                println!("{:<14} d={} {}", g.name(), g.dim(), g.describe());
            }
        }
    }
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
