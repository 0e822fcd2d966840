//! Training and evaluation for the volumetric next-frame predictor:
//! balanced-sampled SGD/Adam optimization of the combined CE + Dice loss,
//! DSC/HD evaluation over manifest splits, named-tensor checkpoints and
//! low-to-high-resolution weight transfer.

mod checkpoint;
mod eval;
mod optimizer;
mod trainer;
mod transfer;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use eval::{evaluate, EvalModel, MetricsReport};
pub use optimizer::{Optimizer, OptimizerKind};
pub use trainer::{train, train_from, write_loss_csv, LossPoint, TrainConfig};
pub use transfer::{resample_position_table, transfer_weights, TransferReport};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error("training diverged (non-finite loss) at step {step}{}",
        .last_checkpoint.as_ref().map(|p| format!("; last good checkpoint: {}", p.display())).unwrap_or_default())]
    Diverged {
        step: usize,
        last_checkpoint: Option<PathBuf>,
    },
    #[error("incompatible transfer: {0}")]
    IncompatibleTransfer(String),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] transvnet::TransVNetError),
    #[error(transparent)]
    Nn(#[from] nn_core::NnError),
    #[error(transparent)]
    Voxel(#[from] voxel_core::VoxelError),
    #[error(transparent)]
    Checkpoint(#[from] nn_core::checkpoint::CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainingError>;
