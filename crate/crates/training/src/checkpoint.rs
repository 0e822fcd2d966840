use std::path::Path;

use nn_core::checkpoint::{load_named_tensors, save_named_tensors};
use transvnet::{ModelConfig, ParamStore};

use crate::Result;

/// Writes all named tensors (weights and running statistics) in the
/// checkpoint format.
pub fn save_checkpoint(params: &ParamStore, path: &Path) -> Result<()> {
    save_named_tensors(path, &params.to_named_tensors())?;
    Ok(())
}

/// Loads a checkpoint and validates every tensor name and shape against
/// the given config.
pub fn load_checkpoint(path: &Path, config: &ModelConfig) -> Result<ParamStore> {
    let tensors = load_named_tensors(path)?;
    Ok(ParamStore::from_named_tensors(config, tensors)?)
}
