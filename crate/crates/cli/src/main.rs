//! `osteovox`: synthetic bone-like microstructure generation, microgravity
//! degradation simulation, dataset curation, TransVNet training/evaluation
//! and export, as one pipeline of subcommands.

mod commands;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Pipeline error classified by exit code: 2 for data problems, 3 for
/// runtime failures.
#[derive(Debug)]
pub enum CliError {
    Data(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Data(_) => EXIT_DATA,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

pub type CliResult = Result<(), CliError>;

pub fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

pub fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "osteovox",
    version,
    about = "Bone-like microstructure generation, degradation and TransVNet prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum StubArg {
    Copy,
    Invert,
    Identity,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum ExportMode {
    Slices,
    Mesh,
}

#[derive(Subcommand)]
enum Command {
    /// Generate initial microstructures from a growth-parameter CSV.
    Generate {
        /// CSV with one growth-parameter record per line.
        #[arg(long)]
        params: PathBuf,
        /// Output directory for the per-row evolution files.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cubic grid side length.
        #[arg(long, default_value_t = 150)]
        dims: usize,
        /// Worker threads (overridden by OSTEOVOX_THREADS).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Iteration budget; 0 derives 10x the side length.
        #[arg(long, default_value_t = 0)]
        max_iterations: u32,
    },
    /// Extend single-frame files with simulated monthly degradation.
    Degrade {
        /// Directory of evolution files to extend in place.
        #[arg(long = "in")]
        input: PathBuf,
        /// Months to simulate (at most 36).
        #[arg(long, default_value_t = 36)]
        months: u32,
        /// First-month mineral loss fraction.
        #[arg(long, default_value_t = 0.02)]
        r0: f64,
        /// Total 36-month loss the rate decay is calibrated to.
        #[arg(long, default_value_t = 0.35)]
        target_loss: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads (overridden by OSTEOVOX_THREADS).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Quality-filter evolution files and write a split manifest.
    BuildDataset {
        /// Directory of evolution files.
        #[arg(long = "in")]
        input: PathBuf,
        /// Manifest path to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Volume-fraction bin width.
        #[arg(long, default_value_t = 0.05)]
        bin_width: f64,
    },
    /// Train TransVNet on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Model architecture TOML.
        #[arg(long)]
        model_config: PathBuf,
        /// Output directory (checkpoints, loss.csv, final model).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        epochs: usize,
        /// Steps per epoch; 0 derives one pass over the training pairs.
        #[arg(long, default_value_t = 0)]
        steps: usize,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
        #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
        optimizer: OptimizerArg,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        #[arg(long, default_value_t = 0.0)]
        weight_decay: f64,
        #[arg(long, default_value_t = 1)]
        horizon: u32,
        /// Disable rotation/flip augmentation.
        #[arg(long)]
        no_augment: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Steps between checkpoints; 0 saves only the final model.
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
    },
    /// Evaluate a checkpoint (or a harness stub) on one split.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long, default_value_t = 1)]
        horizon: u32,
        /// Evaluate a stub instead of a model: copy, invert or identity.
        #[arg(long, value_enum)]
        stub: Option<StubArg>,
        /// Method label for the report row.
        #[arg(long)]
        label: Option<String>,
        /// Optional path for a structured metrics report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll the model forward autoregressively from one stored frame.
    Predict {
        /// Input evolution file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Frame (month) index to start from.
        #[arg(long, default_value_t = 0)]
        frame: u32,
        /// Autoregressive steps to take.
        #[arg(long, default_value_t = 1)]
        steps: usize,
        /// Months advanced per step.
        #[arg(long, default_value_t = 1)]
        horizon: u32,
        #[arg(long)]
        model_config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output evolution file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export one frame as PNG slices or a surface mesh.
    Export {
        /// Input evolution file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Frame index to export.
        #[arg(long, default_value_t = 0)]
        frame: u32,
        #[arg(long, value_enum)]
        mode: ExportMode,
        /// Output directory (slices) or file (mesh).
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate {
            params,
            out,
            seed,
            dims,
            jobs,
            max_iterations,
        } => commands::generate(&params, &out, seed, dims, jobs, max_iterations),
        Command::Degrade {
            input,
            months,
            r0,
            target_loss,
            seed,
            jobs,
        } => commands::degrade(&input, months, r0, target_loss, seed, jobs),
        Command::BuildDataset {
            input,
            out,
            seed,
            bin_width,
        } => commands::build_dataset(&input, &out, seed, bin_width),
        Command::Train {
            manifest,
            model_config,
            out,
            epochs,
            steps,
            batch_size,
            optimizer,
            lr,
            momentum,
            weight_decay,
            horizon,
            no_augment,
            seed,
            checkpoint_every,
        } => commands::train(commands::TrainArgs {
            manifest,
            model_config,
            out,
            epochs,
            steps,
            batch_size,
            optimizer,
            lr,
            momentum,
            weight_decay,
            horizon,
            augment: !no_augment,
            seed,
            checkpoint_every,
        }),
        Command::Eval {
            manifest,
            model_config,
            checkpoint,
            split,
            horizon,
            stub,
            label,
            out,
        } => commands::eval(
            &manifest,
            model_config.as_deref(),
            checkpoint.as_deref(),
            split,
            horizon,
            stub,
            label,
            out.as_deref(),
        ),
        Command::Predict {
            input,
            frame,
            steps,
            horizon,
            model_config,
            checkpoint,
            out,
        } => commands::predict(&input, frame, steps, horizon, &model_config, &checkpoint, &out),
        Command::Export {
            input,
            frame,
            mode,
            out,
        } => commands::export(&input, frame, mode, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

