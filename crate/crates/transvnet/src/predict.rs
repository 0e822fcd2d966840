use voxel_core::VoxelGrid;

use crate::{forward, grids_to_input, Bound, Mode, ModelConfig, ParamStore, Result};

/// Per-voxel argmax of the class logits; ties go to the lower class index.
pub fn predict(
    config: &ModelConfig,
    store: &ParamStore,
    grid: &VoxelGrid,
    month: u32,
) -> Result<VoxelGrid> {
    let bound = Bound::<f32>::from_store(store);
    predict_bound(config, &bound, grid, month)
}

fn predict_bound(
    config: &ModelConfig,
    bound: &Bound<f32>,
    grid: &VoxelGrid,
    month: u32,
) -> Result<VoxelGrid> {
    let input = grids_to_input::<f32>(config, &[grid])?;
    let out = forward(config, bound, &input, &[month], Mode::Eval)?;
    let logits = out.logits;
    let classes = config.n_classes;
    let spatial: usize = logits.shape()[2..].iter().product();
    let data = logits.data();
    let mut labels = vec![0u8; spatial];
    for (r, label) in labels.iter_mut().enumerate() {
        let mut best_class = 0usize;
        let mut best = data[r];
        for c in 1..classes {
            let v = data[c * spatial + r];
            if v > best {
                best = v;
                best_class = c;
            }
        }
        *label = best_class as u8;
    }
    let h = config.input_resolution;
    Ok(VoxelGrid::from_data((h, h, h), classes as u8, labels)?)
}

/// Autoregressive multi-step prediction: each output feeds back as the
/// next input with the month advanced by `horizon`. Returns `steps + 1`
/// frames starting with the input.
pub fn rollout(
    config: &ModelConfig,
    store: &ParamStore,
    grid: &VoxelGrid,
    t0: u32,
    steps: usize,
    horizon: u32,
) -> Result<Vec<VoxelGrid>> {
    let bound = Bound::<f32>::from_store(store);
    let mut frames = Vec::with_capacity(steps + 1);
    frames.push(grid.clone());
    let mut current = grid.clone();
    let mut month = t0;
    for _ in 0..steps {
        current = predict_bound(config, &bound, &current, month)?;
        month += horizon;
        frames.push(current.clone());
    }
    Ok(frames)
}

/// Hard Dice of a prediction against a target, via the voxel metric.
pub fn hard_dice(prediction: &VoxelGrid, target: &VoxelGrid, phase: u8) -> Result<f64> {
    Ok(voxel_core::dice(prediction, target, phase)?)
}
