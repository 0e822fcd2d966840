//! TransVNet: a hybrid 3D-CNN + vision-transformer autoencoder that maps a
//! segmented voxel volume at month `t` to the predicted volume at `t + h`.
//!
//! The encoder stacks double-convolution blocks (conv → ReLU → BatchNorm,
//! twice) with 1x1x1 stride-2 downsamplers, tokenizes the feature volume
//! into flattened 3D patches, adds learnable position embeddings and a
//! linear time embedding, and runs pre-norm transformer layers. The decoder
//! upsamples trilinearly by 2 per block, aggregating matched-resolution
//! encoder skips (max-pooled deepest features when the decoder sits below
//! the smallest skip) before double convolutions and a 1x1x1 segmentation
//! head. A ViT-only ablation mode tokenizes the raw input and decodes
//! without skips.

mod config;
mod loss;
mod model;
mod params;
mod predict;

pub use config::{InputEncoding, ModelConfig};
pub use loss::{combined_loss, LossOutput};
pub use model::{forward, grids_to_input, Bound, ForwardOutput, Mode};
pub use params::{apply_stat_updates, init_params, ParamEntry, ParamStore};
pub use predict::{hard_dice, predict, rollout};

#[derive(Debug, thiserror::Error)]
pub enum TransVNetError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] nn_core::NnError),
    #[error(transparent)]
    Voxel(#[from] voxel_core::VoxelError),
    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    ConfigSerialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TransVNetError>;

pub(crate) fn config_err(message: impl Into<String>) -> TransVNetError {
    TransVNetError::Config(message.into())
}
