use std::path::PathBuf;

use dataset::{sample_batch, DatasetManifest, SequenceStore, Split};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use transvnet::{
    apply_stat_updates, combined_loss, forward, grids_to_input, init_params, Bound, Mode,
    ModelConfig, ParamStore,
};
use voxel_core::VoxelGrid;

use crate::{save_checkpoint, Optimizer, OptimizerKind, Result, TrainingError};

/// Optimization-loop controls.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Steps per epoch; `None` derives one pass over all training pairs.
    pub steps_per_epoch: Option<usize>,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Months between input and target (1 next-month, 4 for the harder task).
    pub horizon: u32,
    pub augment: bool,
    pub seed: u64,
    /// Steps between checkpoints; 0 disables. Requires `out_dir`.
    pub checkpoint_every: usize,
    pub weight_decay: f64,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            steps_per_epoch: None,
            batch_size: 2,
            optimizer: OptimizerKind::default(),
            horizon: 1,
            augment: true,
            seed: 0,
            checkpoint_every: 0,
            weight_decay: 0.0,
            out_dir: None,
        }
    }
}

/// One loss-curve sample: the combined training signal and the CE term
/// alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub step: usize,
    pub combined: f64,
    pub ce: f64,
}

/// Initializes parameters from the training seed and runs the loop.
pub fn train(
    manifest: &DatasetManifest,
    store: &SequenceStore,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ParamStore, Vec<LossPoint>)> {
    let params = init_params(model_config, train_config.seed);
    train_from(params, manifest, store, model_config, train_config)
}

/// Runs the loop from existing parameters (fine-tuning, transfer).
///
/// Balanced sampling and augmentation are active here only; a NaN loss
/// aborts with the last checkpoint path. Deterministic given the seed.
pub fn train_from(
    mut params: ParamStore,
    manifest: &DatasetManifest,
    store: &SequenceStore,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ParamStore, Vec<LossPoint>)> {
    model_config.validate()?;
    let cfg = train_config;

    let train_pairs: usize = manifest
        .split_entries(Split::Train)
        .map(|e| (e.timesteps.saturating_sub(cfg.horizon)) as usize)
        .sum();
    let steps_per_epoch = cfg
        .steps_per_epoch
        .unwrap_or_else(|| train_pairs.div_ceil(cfg.batch_size.max(1)).max(1));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.weight_decay);
    let mut curve = Vec::with_capacity(cfg.epochs * steps_per_epoch);
    let mut last_checkpoint: Option<PathBuf> = None;

    let mut global_step = 0usize;
    for _epoch in 0..cfg.epochs {
        for _ in 0..steps_per_epoch {
            let batch = sample_batch(
                manifest,
                store,
                Split::Train,
                cfg.batch_size,
                cfg.horizon,
                &mut rng,
                cfg.augment,
            )?;
            let grids: Vec<&VoxelGrid> = batch.iter().map(|s| &s.input).collect();
            let months: Vec<u32> = batch.iter().map(|s| s.month).collect();
            let mut targets = Vec::with_capacity(
                batch.len() * model_config.input_resolution.pow(3),
            );
            for s in &batch {
                targets.extend_from_slice(s.target.data());
            }

            let bound = Bound::<f32>::from_store(&params);
            let input = grids_to_input::<f32>(model_config, &grids)?;
            let out = forward(model_config, &bound, &input, &months, Mode::Train)?;
            let loss = combined_loss(&out.logits, &targets)?;
            let combined = f64::from(loss.total.item());
            let ce = f64::from(loss.ce.item());
            if !combined.is_finite() {
                return Err(TrainingError::Diverged {
                    step: global_step,
                    last_checkpoint,
                });
            }
            loss.total.backward()?;
            optimizer.step(&mut params, &bound);
            apply_stat_updates(&mut params, &out.stat_updates);
            curve.push(LossPoint {
                step: global_step,
                combined,
                ce,
            });
            global_step += 1;

            if cfg.checkpoint_every > 0 && global_step % cfg.checkpoint_every == 0 {
                if let Some(dir) = &cfg.out_dir {
                    let path = dir.join(format!("ckpt_{global_step:06}.ovxw"));
                    save_checkpoint(&params, &path)?;
                    last_checkpoint = Some(path);
                }
            }
        }
    }

    Ok((params, curve))
}

/// Writes the loss curve as CSV with the two Fig.-style signals.
pub fn write_loss_csv(points: &[LossPoint], path: &std::path::Path) -> Result<()> {
    let mut text = String::from("step,combined_loss,ce_loss\n");
    for p in points {
        text.push_str(&format!("{},{:.6},{:.6}\n", p.step, p.combined, p.ce));
    }
    std::fs::write(path, text)?;
    Ok(())
}
