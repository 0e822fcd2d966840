use transvnet::{init_params, ModelConfig, ParamStore};

use crate::{Result, TrainingError};

/// What happened to each tensor during a transfer.
#[derive(Debug, Clone, Default)]
pub struct TransferReport {
    pub copied: Vec<String>,
    pub resampled: Vec<String>,
    pub fresh: Vec<String>,
}

/// Trilinearly resamples a position-embedding table between cubic token
/// lattices (`g_low`^3 x dim -> `g_high`^3 x dim rows).
pub fn resample_position_table(
    values: &[f32],
    g_low: usize,
    g_high: usize,
    dim: usize,
) -> Vec<f32> {
    assert_eq!(values.len(), g_low.pow(3) * dim);
    let taps = |o: usize| -> (usize, usize, f32) {
        let src = (o as f64 + 0.5) * g_low as f64 / g_high as f64 - 0.5;
        let i0 = src.floor();
        let w1 = (src - i0) as f32;
        let i0c = (i0.max(0.0) as usize).min(g_low - 1);
        let i1c = ((i0 + 1.0).max(0.0) as usize).min(g_low - 1);
        (i0c, i1c, w1)
    };
    let token = |z: usize, y: usize, x: usize| ((z * g_low + y) * g_low + x) * dim;
    let mut out = Vec::with_capacity(g_high.pow(3) * dim);
    for zo in 0..g_high {
        let (z0, z1, wz) = taps(zo);
        for yo in 0..g_high {
            let (y0, y1, wy) = taps(yo);
            for xo in 0..g_high {
                let (x0, x1, wx) = taps(xo);
                for d in 0..dim {
                    let mut acc = 0.0f32;
                    for (zi, zw) in [(z0, 1.0 - wz), (z1, wz)] {
                        for (yi, yw) in [(y0, 1.0 - wy), (y1, wy)] {
                            let zy = zw * yw;
                            acc += zy * (1.0 - wx) * values[token(zi, yi, x0) + d];
                            acc += zy * wx * values[token(zi, yi, x1) + d];
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Builds parameters for `high_config` from a trained lower-resolution
/// store: shape-compatible tensors are copied, the position table is
/// resampled over the token lattice, and the rest are freshly initialized
/// from `seed`.
pub fn transfer_weights(
    low_params: &ParamStore,
    low_config: &ModelConfig,
    high_config: &ModelConfig,
    seed: u64,
) -> Result<(ParamStore, TransferReport)> {
    low_config.validate()?;
    high_config.validate()?;
    let mut mismatches = Vec::new();
    let core = [
        ("cnn_channels", low_config.cnn_channels, high_config.cnn_channels),
        ("hidden_dim", low_config.hidden_dim, high_config.hidden_dim),
        ("n_layers", low_config.n_layers, high_config.n_layers),
        ("n_heads", low_config.n_heads, high_config.n_heads),
        ("patch_dim", low_config.patch_dim(), high_config.patch_dim()),
        ("n_classes", low_config.n_classes, high_config.n_classes),
        ("in_channels", low_config.in_channels, high_config.in_channels),
    ];
    for (name, lo, hi) in core {
        if lo != hi {
            mismatches.push(format!("{name}: {lo} != {hi}"));
        }
    }
    if low_config.vit_only != high_config.vit_only {
        mismatches.push("vit_only differs".into());
    }
    if !mismatches.is_empty() {
        return Err(TrainingError::IncompatibleTransfer(mismatches.join("; ")));
    }

    let mut target = init_params(high_config, seed);
    let mut report = TransferReport::default();
    let names: Vec<String> = target.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let dst_shape = target.get(&name).expect("just listed").shape.clone();
        match low_params.get(&name) {
            Some(src) if src.shape == dst_shape => {
                target.get_mut(&name).expect("exists").values = src.values.clone();
                report.copied.push(name);
            }
            Some(src) if name == "pos_embed" => {
                let resampled = resample_position_table(
                    &src.values,
                    low_config.token_grid(),
                    high_config.token_grid(),
                    high_config.hidden_dim,
                );
                target.get_mut(&name).expect("exists").values = resampled;
                report.resampled.push(name);
            }
            _ => report.fresh.push(name),
        }
    }
    Ok((target, report))
}
