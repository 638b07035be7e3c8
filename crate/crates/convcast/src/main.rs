//! Thin command-line front end; all logic lives in the library's `cli`
//! module.

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use convcast::cli;
use convcast::config::RunConfig;
use convcast::experiments::SpecId;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "convcast",
    about = "Next-day stock-index direction forecasting: data ingestion, training, and the 8-architecture benchmark",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every data-touching command; they override the config
/// file.
#[derive(Args)]
struct Overrides {
    /// TOML run configuration (defaults apply when omitted)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// OHLCV CSV input path
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Inclusive start date filter (YYYY-MM-DD)
    #[arg(long, global = true)]
    start: Option<NaiveDate>,
    /// Inclusive end date filter (YYYY-MM-DD)
    #[arg(long, global = true)]
    end: Option<NaiveDate>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the input CSV and print an ingest summary
    Ingest {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Two-stage train one model and write weights, curves, and metrics
    Train {
        /// Architecture id (fc1, fc2, rnn1, rnn1fc, rnn2, lstm1, conv1, conv1fc)
        #[arg(long)]
        model: String,
        /// Training seed (default: the config's train.seed)
        #[arg(long)]
        seed: Option<u64>,
        /// Cap on stage-1 epochs
        #[arg(long)]
        max_epochs: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train and evaluate every configured model across all seeds
    Benchmark {
        /// Comma-separated architecture ids (default: all eight)
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        /// Comma-separated seeds (default: 1,2,3)
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads (default: 1, fully deterministic either way)
        #[arg(long)]
        jobs: Option<usize>,
        /// Cap on stage-1 epochs
        #[arg(long)]
        max_epochs: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score saved weights on the test split
    Evaluate {
        /// weights.json produced by `train`
        #[arg(long)]
        weights: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Merge per-run curve CSVs into one long-format table
    ExportCurves {
        /// Benchmark output directory (containing curves/)
        #[arg(long)]
        runs: PathBuf,
        /// Merged CSV destination
        #[arg(long, default_value = "curves_all.csv")]
        output: PathBuf,
    },
    /// Write the per-sample audit CSV (split, anchor, target, label)
    DumpDataset {
        /// Destination CSV
        #[arg(long, default_value = "dataset_dump.csv")]
        output: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn build_config(overrides: &Overrides) -> convcast::Result<RunConfig> {
    let mut config = match &overrides.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(data) = &overrides.data {
        config.data_path = data.clone();
    }
    if let Some(out) = &overrides.out {
        config.output_dir = out.clone();
    }
    if let Some(start) = overrides.start {
        config.start_date = Some(start);
    }
    if let Some(end) = overrides.end {
        config.end_date = Some(end);
    }
    Ok(config)
}

fn parse_models(names: &[String]) -> convcast::Result<Vec<SpecId>> {
    names.iter().map(|n| n.parse()).collect()
}

fn run() -> convcast::Result<()> {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    match cli.command {
        Command::Ingest { overrides } => {
            let config = build_config(&overrides)?;
            cli::cmd_ingest(&config, &mut stdout)
        }
        Command::Train {
            model,
            seed,
            max_epochs,
            overrides,
        } => {
            let mut config = build_config(&overrides)?;
            if let Some(cap) = max_epochs {
                config.train.max_epochs = cap;
            }
            let id = cli::parse_model_id(&model)?;
            let seed = seed.unwrap_or(config.train.seed);
            cli::cmd_train(&config, id, seed, &mut stdout).map(|_| ())
        }
        Command::Benchmark {
            models,
            seeds,
            jobs,
            max_epochs,
            overrides,
        } => {
            let mut config = build_config(&overrides)?;
            if let Some(names) = models {
                config.models = parse_models(&names)?;
            }
            if let Some(seeds) = seeds {
                config.seeds = seeds;
            }
            if let Some(jobs) = jobs {
                config.jobs = jobs;
            }
            if let Some(cap) = max_epochs {
                config.train.max_epochs = cap;
            }
            cli::cmd_benchmark(&config, &mut stdout).map(|_| ())
        }
        Command::Evaluate { weights, overrides } => {
            let config = build_config(&overrides)?;
            cli::cmd_evaluate(&config, &weights, &mut stdout).map(|_| ())
        }
        Command::ExportCurves { runs, output } => {
            cli::cmd_export_curves(&runs, &output, &mut stdout).map(|_| ())
        }
        Command::DumpDataset { output, overrides } => {
            let config = build_config(&overrides)?;
            cli::cmd_dump_dataset(&config, &output, &mut stdout)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(cli::exit_code_for(&err) as u8)
        }
    }
}
