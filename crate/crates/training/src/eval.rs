use std::time::Instant;

use dataset::{DatasetManifest, SequenceStore, Split};
use transvnet::{predict, ModelConfig, ParamStore};
use voxel_core::{dice, hausdorff, HausdorffMode, VoxelGrid, MINERAL};

use crate::Result;

/// What produces predictions during evaluation: the network, or harness
/// stubs with known metrics.
pub enum EvalModel<'a> {
    TransVNet {
        config: &'a ModelConfig,
        params: &'a ParamStore,
    },
    /// Emits the target itself (perfect oracle).
    CopyTarget,
    /// Emits the label-inverted target (worst case for binary grids).
    InvertTarget,
    /// Emits the input unchanged (persistence baseline).
    Identity,
}

/// Split-level evaluation results. HD means skip pairs where either
/// mineral set is empty (`hd_pairs` counts the rest).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricsReport {
    pub split: Split,
    pub horizon: u32,
    pub mean_dsc: f64,
    pub mean_hd_max: f64,
    pub mean_hd_avg: f64,
    pub n_pairs: usize,
    pub hd_pairs: usize,
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    /// Structured-text form of the report.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

fn invert(grid: &VoxelGrid) -> VoxelGrid {
    let n = grid.n_phases();
    let data = grid.data().iter().map(|&l| n - 1 - l).collect();
    VoxelGrid::from_data(grid.dims(), n, data).expect("inverted labels stay in range")
}

/// Mean hard DSC and Hausdorff distances over all (entry, month) pairs of
/// a split at the given horizon. No augmentation; deterministic.
pub fn evaluate(
    model: &EvalModel<'_>,
    manifest: &DatasetManifest,
    store: &SequenceStore,
    split: Split,
    horizon: u32,
) -> Result<MetricsReport> {
    let started = Instant::now();
    let mut dsc_sum = 0.0f64;
    let mut hd_max_sum = 0.0f64;
    let mut hd_avg_sum = 0.0f64;
    let mut n_pairs = 0usize;
    let mut hd_pairs = 0usize;

    for entry in manifest.split_entries(split) {
        if entry.timesteps <= horizon {
            continue;
        }
        let seq = store.get(entry)?;
        for t in 0..entry.timesteps - horizon {
            let input = &seq.frames[t as usize];
            let target = &seq.frames[(t + horizon) as usize];
            let prediction = match model {
                EvalModel::TransVNet { config, params } => predict(config, params, input, t)?,
                EvalModel::CopyTarget => target.clone(),
                EvalModel::InvertTarget => invert(target),
                EvalModel::Identity => input.clone(),
            };
            dsc_sum += dice(&prediction, target, MINERAL)?;
            n_pairs += 1;
            if prediction.count_phase(MINERAL) > 0 && target.count_phase(MINERAL) > 0 {
                hd_max_sum += hausdorff(&prediction, target, MINERAL, HausdorffMode::Max)?;
                hd_avg_sum += hausdorff(&prediction, target, MINERAL, HausdorffMode::Average)?;
                hd_pairs += 1;
            }
        }
    }

    Ok(MetricsReport {
        split,
        horizon,
        mean_dsc: if n_pairs > 0 { dsc_sum / n_pairs as f64 } else { f64::NAN },
        mean_hd_max: if hd_pairs > 0 {
            hd_max_sum / hd_pairs as f64
        } else {
            f64::NAN
        },
        mean_hd_avg: if hd_pairs > 0 {
            hd_avg_sum / hd_pairs as f64
        } else {
            f64::NAN
        },
        n_pairs,
        hd_pairs,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}
