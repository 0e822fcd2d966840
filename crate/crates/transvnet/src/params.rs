use std::collections::HashMap;

use nn_core::checkpoint::NamedTensor;
use nn_core::ops::BatchNormUpdate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::{config_err, ModelConfig, Result};

/// One named parameter tensor. Running statistics are stored here too but
/// flagged non-learnable so optimizers skip them.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
    pub learnable: bool,
}

/// Ordered, named collection of all model tensors. Construction order is
/// deterministic for a given config, which keeps checkpoints and training
/// runs bit-reproducible.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<(String, ParamEntry)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn insert(&mut self, name: impl Into<String>, entry: ParamEntry) {
        let name = name.into();
        debug_assert_eq!(
            entry.shape.iter().product::<usize>(),
            entry.values.len(),
            "{name}: shape/value mismatch"
        );
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter {name}"
        );
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, entry));
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry> {
        match self.index.get(name) {
            Some(&i) => Some(&mut self.entries[i].1),
            None => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(n, e)| (n.as_str(), e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total learnable scalar count.
    pub fn param_count(&self) -> usize {
        self.iter()
            .filter(|(_, e)| e.learnable)
            .map(|(_, e)| e.values.len())
            .sum()
    }

    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        self.iter()
            .map(|(name, e)| NamedTensor {
                name: name.to_string(),
                dims: e.shape.clone(),
                values: e.values.clone(),
            })
            .collect()
    }

    /// Rebuilds a store from loaded tensors, validating names and shapes
    /// against the config's freshly initialized skeleton. Errors list every
    /// offending tensor.
    pub fn from_named_tensors(config: &ModelConfig, tensors: Vec<NamedTensor>) -> Result<Self> {
        let mut skeleton = init_params(config, 0);
        let mut seen: HashMap<String, NamedTensor> =
            tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
        let mut offenders = Vec::new();
        for (name, entry) in skeleton.entries.iter_mut() {
            match seen.remove(name.as_str()) {
                Some(t) if t.dims == entry.shape => {
                    entry.values = t.values;
                }
                Some(t) => offenders.push(format!(
                    "{name}: shape {:?} != expected {:?}",
                    t.dims, entry.shape
                )),
                None => offenders.push(format!("{name}: missing")),
            }
        }
        for name in seen.keys() {
            offenders.push(format!("{name}: unexpected"));
        }
        if !offenders.is_empty() {
            return Err(config_err(format!(
                "checkpoint does not match config: {}",
                offenders.join("; ")
            )));
        }
        Ok(skeleton)
    }
}

fn he_normal(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f32> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid std");
    (0..n).map(|_| dist.sample(rng) as f32).collect()
}

fn xavier_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f32> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("valid range");
    (0..n).map(|_| dist.sample(rng) as f32).collect()
}

fn normal(rng: &mut ChaCha8Rng, std: f64, n: usize) -> Vec<f32> {
    let dist = Normal::new(0.0, std).expect("valid std");
    (0..n).map(|_| dist.sample(rng) as f32).collect()
}

/// Initializes every named tensor of the architecture for `config`.
/// Deterministic given `seed`.
pub fn init_params(config: &ModelConfig, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::default();

    let learnable = |shape: Vec<usize>, values: Vec<f32>| ParamEntry {
        shape,
        values,
        learnable: true,
    };
    let frozen = |shape: Vec<usize>, values: Vec<f32>| ParamEntry {
        shape,
        values,
        learnable: false,
    };

    let conv_unit = |store: &mut ParamStore,
                         rng: &mut ChaCha8Rng,
                         prefix: &str,
                         unit: usize,
                         c_in: usize,
                         c_out: usize,
                         k: usize| {
        let fan_in = c_in * k * k * k;
        store.insert(
            format!("{prefix}.conv{unit}.kernel"),
            learnable(
                vec![c_out, c_in, k, k, k],
                he_normal(rng, fan_in, c_out * fan_in),
            ),
        );
        store.insert(
            format!("{prefix}.conv{unit}.bias"),
            learnable(vec![c_out], vec![0.0; c_out]),
        );
        store.insert(
            format!("{prefix}.bn{unit}.gamma"),
            learnable(vec![c_out], vec![1.0; c_out]),
        );
        store.insert(
            format!("{prefix}.bn{unit}.beta"),
            learnable(vec![c_out], vec![0.0; c_out]),
        );
        store.insert(
            format!("{prefix}.bn{unit}.running_mean"),
            frozen(vec![c_out], vec![0.0; c_out]),
        );
        store.insert(
            format!("{prefix}.bn{unit}.running_var"),
            frozen(vec![c_out], vec![1.0; c_out]),
        );
    };

    if !config.vit_only {
        let widths = config.encoder_widths();
        for i in 0..config.cnn_downscalings {
            let prefix = format!("enc{i}");
            let c_in = config.encoder_in_width(i);
            let w = widths[i];
            conv_unit(&mut store, &mut rng, &prefix, 1, c_in, w, 3);
            conv_unit(&mut store, &mut rng, &prefix, 2, w, w, 3);
            let next = if i + 1 < widths.len() {
                widths[i + 1]
            } else {
                config.cnn_channels
            };
            store.insert(
                format!("{prefix}.down.kernel"),
                learnable(vec![next, w, 1, 1, 1], he_normal(&mut rng, w, next * w)),
            );
            store.insert(
                format!("{prefix}.down.bias"),
                learnable(vec![next], vec![0.0; next]),
            );
        }
    }

    let d = config.hidden_dim;
    let pd = config.patch_dim();
    store.insert(
        "patch_embed.weight",
        learnable(vec![pd, d], xavier_uniform(&mut rng, pd, d, pd * d)),
    );
    store.insert(
        "pos_embed",
        learnable(vec![config.n_tokens(), d], normal(&mut rng, 0.02, config.n_tokens() * d)),
    );
    // Zero-initialized: month 0 starts with no time contribution and the
    // map learns its scale.
    store.insert("time_embed.weight", learnable(vec![1, d], vec![0.0; d]));

    for l in 0..config.n_layers {
        let p = format!("layer{l}");
        for ln in ["ln1", "ln2"] {
            store.insert(
                format!("{p}.{ln}.gamma"),
                learnable(vec![d], vec![1.0; d]),
            );
            store.insert(format!("{p}.{ln}.beta"), learnable(vec![d], vec![0.0; d]));
        }
        for w in ["wq", "wk", "wv", "wo"] {
            store.insert(
                format!("{p}.msa.{w}"),
                learnable(vec![d, d], xavier_uniform(&mut rng, d, d, d * d)),
            );
        }
        for b in ["bq", "bv", "bo"] {
            store.insert(format!("{p}.msa.{b}"), learnable(vec![d], vec![0.0; d]));
        }
        store.insert(
            format!("{p}.mlp.w1"),
            learnable(
                vec![d, config.mlp_dim],
                xavier_uniform(&mut rng, d, config.mlp_dim, d * config.mlp_dim),
            ),
        );
        store.insert(
            format!("{p}.mlp.b1"),
            learnable(vec![config.mlp_dim], vec![0.0; config.mlp_dim]),
        );
        store.insert(
            format!("{p}.mlp.w2"),
            learnable(
                vec![config.mlp_dim, d],
                xavier_uniform(&mut rng, config.mlp_dim, d, config.mlp_dim * d),
            ),
        );
        store.insert(format!("{p}.mlp.b2"), learnable(vec![d], vec![0.0; d]));
    }

    let dec_widths = config.decoder_widths();
    let skip_widths = if config.vit_only {
        Vec::new()
    } else {
        config.encoder_widths()
    };
    let mut prev = d;
    for (j, &w) in dec_widths.iter().enumerate() {
        let prefix = format!("dec{j}");
        let res = config.token_grid() << (j + 1);
        let skip_ch = if config.vit_only {
            0
        } else {
            // Matched-resolution skip, or the deepest one max-pooled down.
            let smallest = config.input_resolution >> (config.cnn_downscalings - 1);
            if res <= smallest {
                *skip_widths.last().unwrap()
            } else {
                let level = (config.input_resolution / res).trailing_zeros() as usize;
                skip_widths[level]
            }
        };
        conv_unit(&mut store, &mut rng, &prefix, 1, prev + skip_ch, w, 3);
        conv_unit(&mut store, &mut rng, &prefix, 2, w, w, 3);
        prev = w;
    }

    store.insert(
        "head.kernel",
        learnable(
            vec![config.n_classes, prev, 1, 1, 1],
            xavier_uniform(&mut rng, prev, config.n_classes, config.n_classes * prev),
        ),
    );
    store.insert(
        "head.bias",
        learnable(vec![config.n_classes], vec![0.0; config.n_classes]),
    );

    store
}

/// Writes momentum-blended running statistics back after a training step.
pub fn apply_stat_updates(store: &mut ParamStore, updates: &[(String, BatchNormUpdate<f32>)]) {
    for (prefix, update) in updates {
        let mean_name = format!("{prefix}.running_mean");
        let var_name = format!("{prefix}.running_var");
        store
            .get_mut(&mean_name)
            .unwrap_or_else(|| panic!("unknown stat {mean_name}"))
            .values
            .copy_from_slice(&update.running_mean);
        store
            .get_mut(&var_name)
            .unwrap_or_else(|| panic!("unknown stat {var_name}"))
            .values
            .copy_from_slice(&update.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::InputEncoding;

    fn toy() -> ModelConfig {
        ModelConfig {
            input_resolution: 16,
            in_channels: 3,
            n_classes: 2,
            cnn_downscalings: 2,
            cnn_channels: 4,
            patch_size: 2,
            hidden_dim: 16,
            n_layers: 1,
            n_heads: 2,
            mlp_dim: 32,
            decoder_channels: vec![],
            t_max: 36,
            vit_only: false,
            input_encoding: InputEncoding::Replicate,
        }
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let cfg = toy();
        let a = init_params(&cfg, 7);
        let b = init_params(&cfg, 7);
        assert_eq!(a, b);
        let c = init_params(&cfg, 8);
        assert_ne!(a, c);

        assert_eq!(
            a.get("enc0.conv1.kernel").unwrap().shape,
            vec![2, 3, 3, 3, 3]
        );
        assert_eq!(a.get("patch_embed.weight").unwrap().shape, vec![32, 16]);
        assert_eq!(a.get("pos_embed").unwrap().shape, vec![8, 16]);
        assert!(!a.get("enc0.bn1.running_mean").unwrap().learnable);
        assert!(a.param_count() > 0);
    }

    #[test]
    fn named_tensor_round_trip_validates() {
        let cfg = toy();
        let store = init_params(&cfg, 3);
        let tensors = store.to_named_tensors();
        let back = ParamStore::from_named_tensors(&cfg, tensors).unwrap();
        assert_eq!(back, store);

        let mut broken = store.to_named_tensors();
        broken[0].dims = vec![1];
        broken[0].values = vec![0.0];
        let err = ParamStore::from_named_tensors(&cfg, broken).unwrap_err();
        assert!(err.to_string().contains("shape"));
    }
}
