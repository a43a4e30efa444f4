//! `leaf` command line: synthesize drift scenarios, run scheme comparisons,
//! emit explanation artifacts, and mitigate a drifted model.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "leaf", version, about = "Detect, explain, and mitigate concept drift in KPI forecasting models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-station KPI dataset with drift ground truth
    Synth {
        /// Named preset scenario
        #[arg(long, conflicts_with = "spec")]
        preset: Option<String>,
        /// Scenario spec json file
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
    },
    /// Run mitigation schemes over a dataset and compare them
    Run {
        /// Dataset csv (station,date,features...,target)
        #[arg(long)]
        data: Option<PathBuf>,
        /// Target column name
        #[arg(long)]
        target: Option<String>,
        /// Comma-separated schemes: static, periodic:N, triggered, leaf:K
        #[arg(long)]
        schemes: Option<String>,
        #[arg(long)]
        horizon: Option<u32>,
        #[arg(long)]
        window: Option<u32>,
        /// Model family: tree or knn
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Config json supplying any unset option (flags take precedence)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Re-run exactly from a manifest written by a previous run
        #[arg(long, conflicts_with_all = ["data", "target", "schemes", "config"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank features, group them, and emit binned error decompositions
    Explain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        /// Trained model json (e.g. static_model.json from a run)
        #[arg(long)]
        model: PathBuf,
        /// Named target-date range, e.g. during=2020-03-15..2020-11-01; repeatable
        #[arg(long = "split")]
        splits: Vec<String>,
        /// Feature to decompose; defaults to the top group representative
        #[arg(long)]
        feature: Option<String>,
        #[arg(long, default_value_t = 1000)]
        bins: usize,
        #[arg(long, default_value_t = 30)]
        horizon: u32,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0.7)]
        tau: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Also render svg figures
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restructure a training window against the latest drifting samples and retrain
    Mitigate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        model: PathBuf,
        /// Target-date range the model was trained on, e.g. 2018-01-31..2018-02-13
        #[arg(long)]
        train: String,
        /// Target-date range of the latest drifting samples
        #[arg(long)]
        latest: String,
        #[arg(long, default_value_t = 1)]
        groups: usize,
        #[arg(long, default_value_t = 30)]
        horizon: u32,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild a comparison table from per-scheme report jsons
    Report {
        /// Report json files from previous runs
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            preset,
            spec,
            seed,
            out,
        } => commands::synth(preset, spec, seed, &out),
        Command::Run {
            data,
            target,
            schemes,
            horizon,
            window,
            model,
            seed,
            config,
            manifest,
            out,
        } => commands::run(
            commands::RunArgs {
                data,
                target,
                schemes,
                horizon,
                window,
                model,
                seed,
                config,
                manifest,
            },
            &out,
        ),
        Command::Explain {
            data,
            target,
            model,
            splits,
            feature,
            bins,
            horizon,
            repeats,
            tau,
            seed,
            svg,
            out,
        } => commands::explain(
            commands::ExplainArgs {
                data,
                target,
                model,
                splits,
                feature,
                bins,
                horizon,
                repeats,
                tau,
                seed,
                svg,
            },
            &out,
        ),
        Command::Mitigate {
            data,
            target,
            model,
            train,
            latest,
            groups,
            horizon,
            seed,
            out,
        } => commands::mitigate(
            commands::MitigateArgs {
                data,
                target,
                model,
                train,
                latest,
                groups,
                horizon,
                seed,
            },
            &out,
        ),
        Command::Report { inputs, out } => commands::report(&inputs, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
