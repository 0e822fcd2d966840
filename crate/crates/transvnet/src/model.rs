use std::collections::HashMap;

use nn_core::ops::{
    add_broadcast_rows, add_broadcast_tokens, batch_norm, concat_channels,
    conv3d, extract_patches, layer_norm, linear, matmul, max_pool3d, multi_head_self_attention,
    tokens_to_volume, trilinear_upsample, AttentionParams, BatchNormMode, BatchNormUpdate,
};
use nn_core::{Element, Tensor};
use voxel_core::VoxelGrid;

use crate::{config_err, InputEncoding, ModelConfig, ParamStore, Result};

const BN_MOMENTUM: f64 = 0.1;
const BN_EPS: f64 = 1e-5;
const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Parameter tensors bound into an autodiff graph for one forward pass.
/// Learnable entries are gradient leaves; running statistics are constants.
pub struct Bound<E: Element> {
    tensors: HashMap<String, Tensor<E>>,
}

impl<E: Element> Bound<E> {
    pub fn from_store(store: &ParamStore) -> Self {
        let tensors = store
            .iter()
            .map(|(name, entry)| {
                let data: Vec<E> = entry.values.iter().map(|&v| E::from_f64(f64::from(v))).collect();
                let t = if entry.learnable {
                    Tensor::param(entry.shape.clone(), data)
                } else {
                    Tensor::from_vec(entry.shape.clone(), data)
                };
                (name.to_string(), t)
            })
            .collect();
        Self { tensors }
    }

    /// Binds pre-built tensors directly (verification harnesses).
    pub fn from_tensors(tensors: impl IntoIterator<Item = (String, Tensor<E>)>) -> Self {
        Self {
            tensors: tensors.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> &Tensor<E> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// Learnable tensors with their accumulated gradients.
    pub fn gradients(&self) -> impl Iterator<Item = (&str, Option<Vec<E>>)> {
        self.tensors
            .iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(n, t)| (n.as_str(), t.grad()))
    }

    pub fn zero_grads(&self) {
        for t in self.tensors.values() {
            t.zero_grad();
        }
    }
}

pub struct ForwardOutput<E: Element> {
    /// Per-voxel class logits `[B, n_classes, H, H, H]`.
    pub logits: Tensor<E>,
    /// Batch-norm running-stat updates gathered in train mode, keyed by
    /// `"<prefix>.bn<k>"`.
    pub stat_updates: Vec<(String, BatchNormUpdate<E>)>,
}

/// Encodes segmented grids as the network's input tensor.
pub fn grids_to_input<E: Element>(
    config: &ModelConfig,
    grids: &[&VoxelGrid],
) -> Result<Tensor<E>> {
    let h = config.input_resolution;
    let c = config.in_channels;
    let mut data = Vec::with_capacity(grids.len() * c * h * h * h);
    for g in grids {
        if g.dims() != (h, h, h) {
            return Err(config_err(format!(
                "grid dims {:?} do not match configured resolution {h}",
                g.dims()
            )));
        }
        match config.input_encoding {
            InputEncoding::Replicate => {
                for _ in 0..c {
                    data.extend(g.data().iter().map(|&l| E::from_f64(f64::from(l))));
                }
            }
            InputEncoding::OneHot => {
                for class in 0..c {
                    data.extend(
                        g.data()
                            .iter()
                            .map(|&l| if usize::from(l) == class { E::ONE } else { E::ZERO }),
                    );
                }
            }
        }
    }
    Ok(Tensor::from_vec(vec![grids.len(), c, h, h, h], data))
}

struct Ctx<'a, E: Element> {
    config: &'a ModelConfig,
    bound: &'a Bound<E>,
    mode: Mode,
    updates: Vec<(String, BatchNormUpdate<E>)>,
}

impl<E: Element> Ctx<'_, E> {
    /// conv(3x3x3, pad 1) -> ReLU -> BatchNorm, the paper's unit order.
    fn conv_unit(&mut self, x: &Tensor<E>, prefix: &str, unit: usize) -> Result<Tensor<E>> {
        let b = self.bound;
        let y = conv3d(
            x,
            b.get(&format!("{prefix}.conv{unit}.kernel")),
            Some(b.get(&format!("{prefix}.conv{unit}.bias"))),
            1,
            1,
        )?;
        let y = y.relu();
        let bn = format!("{prefix}.bn{unit}");
        let mode = match self.mode {
            Mode::Train => BatchNormMode::Train,
            Mode::Eval => BatchNormMode::Eval,
        };
        let (y, update) = batch_norm(
            &y,
            b.get(&format!("{bn}.gamma")),
            b.get(&format!("{bn}.beta")),
            b.get(&format!("{bn}.running_mean")).data(),
            b.get(&format!("{bn}.running_var")).data(),
            mode,
            BN_MOMENTUM,
            BN_EPS,
        )?;
        if let Some(u) = update {
            self.updates.push((bn, u));
        }
        Ok(y)
    }

    fn double_conv(&mut self, x: &Tensor<E>, prefix: &str) -> Result<Tensor<E>> {
        let y = self.conv_unit(x, prefix, 1)?;
        self.conv_unit(&y, prefix, 2)
    }

    /// CNN feature extractor: per block a double conv (whose output is the
    /// skip) followed by the 1x1x1 stride-2 downsampler.
    fn cnn_encode(&mut self, input: &Tensor<E>) -> Result<(Tensor<E>, Vec<Tensor<E>>)> {
        let mut x = input.clone();
        let mut skips = Vec::with_capacity(self.config.cnn_downscalings);
        for i in 0..self.config.cnn_downscalings {
            let prefix = format!("enc{i}");
            let pre = self.double_conv(&x, &prefix)?;
            skips.push(pre.clone());
            x = conv3d(
                &pre,
                self.bound.get(&format!("{prefix}.down.kernel")),
                Some(self.bound.get(&format!("{prefix}.down.bias"))),
                2,
                0,
            )?;
        }
        Ok((x, skips))
    }

    /// Flattened-patch tokens, embedded and augmented with position and
    /// time embeddings.
    fn tokenize_and_embed(&mut self, features: &Tensor<E>, months: &[u32]) -> Result<Tensor<E>> {
        let cfg = self.config;
        let patches = extract_patches(features, cfg.patch_size)?;
        let tokens = linear(&patches, self.bound.get("patch_embed.weight"), None)?;
        let z = add_broadcast_rows(&tokens, self.bound.get("pos_embed"))?;

        let t_norm: Vec<E> = months
            .iter()
            .map(|&t| E::from_f64(f64::from(t) / f64::from(cfg.t_max)))
            .collect();
        let t_col = Tensor::from_vec(vec![months.len(), 1], t_norm);
        let time_vecs = matmul(&t_col, self.bound.get("time_embed.weight"))?;
        Ok(add_broadcast_tokens(&z, &time_vecs)?)
    }

    /// Pre-norm residual transformer stack.
    fn transformer_encode(&mut self, z0: Tensor<E>) -> Result<Tensor<E>> {
        let b = self.bound;
        let mut z = z0;
        for l in 0..self.config.n_layers {
            let p = format!("layer{l}");
            let normed = layer_norm(
                &z,
                b.get(&format!("{p}.ln1.gamma")),
                b.get(&format!("{p}.ln1.beta")),
                LN_EPS,
            )?;
            let attn = multi_head_self_attention(
                &normed,
                &AttentionParams {
                    wq: b.get(&format!("{p}.msa.wq")),
                    bq: b.get(&format!("{p}.msa.bq")),
                    wk: b.get(&format!("{p}.msa.wk")),
                    wv: b.get(&format!("{p}.msa.wv")),
                    bv: b.get(&format!("{p}.msa.bv")),
                    wo: b.get(&format!("{p}.msa.wo")),
                    bo: b.get(&format!("{p}.msa.bo")),
                    n_heads: self.config.n_heads,
                },
            )?;
            let z_mid = attn.add(&z)?;
            let normed = layer_norm(
                &z_mid,
                b.get(&format!("{p}.ln2.gamma")),
                b.get(&format!("{p}.ln2.beta")),
                LN_EPS,
            )?;
            let h = linear(
                &normed,
                b.get(&format!("{p}.mlp.w1")),
                Some(b.get(&format!("{p}.mlp.b1"))),
            )?
            .gelu();
            let h = linear(
                &h,
                b.get(&format!("{p}.mlp.w2")),
                Some(b.get(&format!("{p}.mlp.b2"))),
            )?;
            z = h.add(&z_mid)?;
        }
        Ok(z)
    }

    /// Upsampling decoder with skip aggregation and the segmentation head.
    fn decode(&mut self, z: Tensor<E>, skips: &[Tensor<E>]) -> Result<Tensor<E>> {
        let cfg = self.config;
        let g = cfg.token_grid();
        let mut x = tokens_to_volume(&z, g)?;
        for j in 0..cfg.n_upsample_blocks() {
            x = trilinear_upsample(&x, 2)?;
            let prefix = format!("dec{j}");
            if !cfg.vit_only {
                let res = g << (j + 1);
                let smallest = cfg.input_resolution >> (cfg.cnn_downscalings - 1);
                let skip = if res <= smallest {
                    let deepest = skips.last().expect("hybrid mode has skips");
                    if res == smallest {
                        deepest.clone()
                    } else {
                        max_pool3d(deepest, smallest / res)?
                    }
                } else {
                    let level = (cfg.input_resolution / res).trailing_zeros() as usize;
                    skips[level].clone()
                };
                x = concat_channels(&x, &skip)?;
            }
            x = self.double_conv(&x, &prefix)?;
        }
        let logits = conv3d(
            &x,
            self.bound.get("head.kernel"),
            Some(self.bound.get("head.bias")),
            1,
            0,
        )?;
        Ok(logits)
    }
}

/// Full forward pass over a batch: grids encoded in `input` with their
/// month indices in `months` (one per batch row).
pub fn forward<E: Element>(
    config: &ModelConfig,
    bound: &Bound<E>,
    input: &Tensor<E>,
    months: &[u32],
    mode: Mode,
) -> Result<ForwardOutput<E>> {
    config.validate()?;
    let h = config.input_resolution;
    let expect = [months.len(), config.in_channels, h, h, h];
    if input.shape() != expect {
        return Err(config_err(format!(
            "input shape {:?} does not match expected {:?}",
            input.shape(),
            expect
        )));
    }
    let mut ctx = Ctx {
        config,
        bound,
        mode,
        updates: Vec::new(),
    };
    let (features, skips) = if config.vit_only {
        (input.clone(), Vec::new())
    } else {
        ctx.cnn_encode(input)?
    };
    let z0 = ctx.tokenize_and_embed(&features, months)?;
    let z = ctx.transformer_encode(z0)?;
    let logits = ctx.decode(z, &skips)?;
    Ok(ForwardOutput {
        logits,
        stat_updates: ctx.updates,
    })
}
