use serde::{Deserialize, Serialize};

use crate::{config_err, Result};

/// How a segmented grid becomes network input channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEncoding {
    /// The label value replicated across all input channels (RGB-style).
    #[default]
    Replicate,
    /// One channel per class, 1.0 at the voxel's class.
    OneHot,
}

/// Architecture hyperparameters. Defaults follow the full-scale network
/// (160-cube input, 3 downscalings, 32 feature channels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Cubic input resolution H (= W = T).
    pub input_resolution: usize,
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    #[serde(default = "default_n_classes")]
    pub n_classes: usize,
    #[serde(default = "default_downscalings")]
    pub cnn_downscalings: usize,
    /// Feature channels C' after the CNN encoder.
    #[serde(default = "default_cnn_channels")]
    pub cnn_channels: usize,
    pub patch_size: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_dim: usize,
    /// Output channels per decoder block; empty derives a schedule halving
    /// from the hidden dim down to a floor of 16.
    #[serde(default)]
    pub decoder_channels: Vec<usize>,
    #[serde(default = "default_t_max")]
    pub t_max: u32,
    /// Ablation mode: tokenize the raw input, no CNN encoder, no skips.
    #[serde(default)]
    pub vit_only: bool,
    #[serde(default)]
    pub input_encoding: InputEncoding,
}

fn default_in_channels() -> usize {
    3
}
fn default_n_classes() -> usize {
    2
}
fn default_downscalings() -> usize {
    3
}
fn default_cnn_channels() -> usize {
    32
}
fn default_t_max() -> u32 {
    36
}

impl ModelConfig {
    /// Feature-volume resolution H' entering tokenization.
    pub fn feature_resolution(&self) -> usize {
        if self.vit_only {
            self.input_resolution
        } else {
            self.input_resolution >> self.cnn_downscalings
        }
    }

    /// Token lattice side G = H' / P.
    pub fn token_grid(&self) -> usize {
        self.feature_resolution() / self.patch_size
    }

    pub fn n_tokens(&self) -> usize {
        self.token_grid().pow(3)
    }

    /// Channels of the volume being tokenized.
    pub fn token_channels(&self) -> usize {
        if self.vit_only {
            self.in_channels
        } else {
            self.cnn_channels
        }
    }

    /// Flattened patch width P^3 * C fed to the embedding map.
    pub fn patch_dim(&self) -> usize {
        self.patch_size.pow(3) * self.token_channels()
    }

    /// Number of x2 upsampling blocks from the token lattice back to H.
    pub fn n_upsample_blocks(&self) -> usize {
        (self.input_resolution / self.token_grid()).trailing_zeros() as usize
    }

    /// Double-conv widths of the encoder blocks, ramping to C'.
    pub fn encoder_widths(&self) -> Vec<usize> {
        (0..self.cnn_downscalings)
            .map(|i| (self.cnn_channels >> (self.cnn_downscalings - 1 - i)).max(1))
            .collect()
    }

    /// Channel width entering block `i` of the encoder.
    pub fn encoder_in_width(&self, i: usize) -> usize {
        if i == 0 {
            self.in_channels
        } else {
            self.encoder_widths()[i]
        }
    }

    /// Output widths of the decoder blocks.
    pub fn decoder_widths(&self) -> Vec<usize> {
        if !self.decoder_channels.is_empty() {
            return self.decoder_channels.clone();
        }
        (0..self.n_upsample_blocks())
            .map(|j| (self.hidden_dim >> (j + 1)).max(16))
            .collect()
    }

    /// Encoder skip resolutions, outermost first: H, H/2, ...
    pub fn skip_resolutions(&self) -> Vec<usize> {
        (0..self.cnn_downscalings)
            .map(|i| self.input_resolution >> i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.input_resolution;
        if h == 0 {
            return Err(config_err("input_resolution must be positive"));
        }
        if self.in_channels == 0 || self.n_classes < 2 {
            return Err(config_err("need input channels and at least 2 classes"));
        }
        if self.patch_size == 0 || self.hidden_dim == 0 || self.n_heads == 0 {
            return Err(config_err("patch_size, hidden_dim, n_heads must be positive"));
        }
        if !self.vit_only {
            if self.cnn_downscalings == 0 {
                return Err(config_err("hybrid mode needs at least one downscaling"));
            }
            if h % (1 << self.cnn_downscalings) != 0 {
                return Err(config_err(format!(
                    "resolution {h} not divisible by 2^{}",
                    self.cnn_downscalings
                )));
            }
        }
        let hp = self.feature_resolution();
        if hp == 0 || hp % self.patch_size != 0 {
            return Err(config_err(format!(
                "feature resolution {hp} not divisible by patch size {}",
                self.patch_size
            )));
        }
        let g = self.token_grid();
        if g == 0 || h % g != 0 || !(h / g).is_power_of_two() {
            return Err(config_err(format!(
                "resolution {h} not reachable from token lattice {g} by doubling"
            )));
        }
        if self.hidden_dim % self.n_heads != 0 {
            return Err(config_err(format!(
                "hidden_dim {} not divisible by {} heads",
                self.hidden_dim, self.n_heads
            )));
        }
        if self.mlp_dim == 0 {
            return Err(config_err("mlp_dim must be positive"));
        }
        if !self.decoder_channels.is_empty()
            && self.decoder_channels.len() != self.n_upsample_blocks()
        {
            return Err(config_err(format!(
                "decoder_channels has {} entries, need {}",
                self.decoder_channels.len(),
                self.n_upsample_blocks()
            )));
        }
        if self.t_max == 0 {
            return Err(config_err("t_max must be positive"));
        }
        if self.input_encoding == InputEncoding::OneHot && self.in_channels != self.n_classes {
            return Err(config_err(
                "one-hot encoding needs in_channels == n_classes",
            ));
        }
        Ok(())
    }

    /// Method label for reports, e.g. "Hybrid-patch2-res32".
    pub fn label(&self) -> String {
        let kind = if self.vit_only { "ViTOnly" } else { "Hybrid" };
        format!(
            "{kind}-patch{}-res{}",
            self.patch_size, self.input_resolution
        )
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelConfig {
        ModelConfig {
            input_resolution: 32,
            in_channels: 3,
            n_classes: 2,
            cnn_downscalings: 2,
            cnn_channels: 16,
            patch_size: 2,
            hidden_dim: 64,
            n_layers: 2,
            n_heads: 4,
            mlp_dim: 128,
            decoder_channels: vec![],
            t_max: 36,
            vit_only: false,
            input_encoding: InputEncoding::Replicate,
        }
    }

    #[test]
    fn paper_scale_dimensions() {
        let cfg = ModelConfig {
            input_resolution: 160,
            cnn_downscalings: 3,
            cnn_channels: 32,
            patch_size: 2,
            hidden_dim: 256,
            n_layers: 4,
            n_heads: 8,
            mlp_dim: 512,
            ..toy()
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.feature_resolution(), 20);
        assert_eq!(cfg.token_grid(), 10);
        assert_eq!(cfg.n_tokens(), 1000);
        assert_eq!(cfg.n_upsample_blocks(), 4);
        assert_eq!(cfg.encoder_widths(), vec![8, 16, 32]);
    }

    #[test]
    fn vit_only_64_patch16_has_64_tokens() {
        let cfg = ModelConfig {
            input_resolution: 64,
            patch_size: 16,
            vit_only: true,
            hidden_dim: 64,
            n_heads: 4,
            ..toy()
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.n_tokens(), 64);
        assert_eq!(cfg.n_upsample_blocks(), 4);
        assert_eq!(cfg.label(), "ViTOnly-patch16-res64");
    }

    #[test]
    fn toy_dimensions_and_round_trip() {
        let cfg = toy();
        cfg.validate().unwrap();
        assert_eq!(cfg.feature_resolution(), 8);
        assert_eq!(cfg.token_grid(), 4);
        assert_eq!(cfg.n_upsample_blocks(), 3);
        assert_eq!(cfg.decoder_widths(), vec![32, 16, 16]);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ModelConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut bad = toy();
        bad.input_resolution = 30; // not divisible by 2^2
        assert!(bad.validate().is_err());

        let mut bad = toy();
        bad.patch_size = 3; // 8 % 3 != 0
        assert!(bad.validate().is_err());

        let mut bad = toy();
        bad.n_heads = 5; // 64 % 5 != 0
        assert!(bad.validate().is_err());

        let mut bad = toy();
        bad.decoder_channels = vec![32, 16]; // needs 3
        assert!(bad.validate().is_err());

        let mut bad = toy();
        bad.input_encoding = InputEncoding::OneHot; // needs in_channels == 2
        assert!(bad.validate().is_err());
    }
}
