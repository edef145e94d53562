//! Model configuration: encoder hyperparameters, attention strategies,
//! decoder choice, and the named presets exposed on the CLI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attention strategy applied across the transformer blocks.
///
/// `Interleaved` runs full attention in every layer whose 1-based index is a
/// multiple of `depth / interleave_period` and plain window attention
/// elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    Full,
    Window,
    WindowShift,
    WindowPool,
    WindowShiftPool,
    Interleaved,
}

impl AttentionMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AttentionMode::Full),
            "window" => Ok(AttentionMode::Window),
            "window_shift" => Ok(AttentionMode::WindowShift),
            "window_pool" => Ok(AttentionMode::WindowPool),
            "window_shift_pool" => Ok(AttentionMode::WindowShiftPool),
            "interleaved" | "full_window" => Ok(AttentionMode::Interleaved),
            other => Err(Error::InvalidConfig {
                detail: format!("unknown attention mode: {other}"),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttentionMode::Full => "full",
            AttentionMode::Window => "window",
            AttentionMode::WindowShift => "window_shift",
            AttentionMode::WindowPool => "window_pool",
            AttentionMode::WindowShiftPool => "window_shift_pool",
            AttentionMode::Interleaved => "interleaved",
        }
    }
}

/// What a given layer actually runs after resolving the mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerAttention {
    Full,
    Windowed { shifted: bool, pooled: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Classic,
    Simple,
}

/// Norm inside the classic decoder blocks: true batch norm, or a per-channel
/// affine for tiny-batch training (recorded in the checkpoint).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadNorm {
    BatchNorm,
    Affine,
}

fn default_mlp_ratio() -> f64 {
    4.0
}
fn default_patch() -> usize {
    16
}
fn default_period() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub depth: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: f64,
    /// Patch side in pixels; kept at 16 even when the stride drops to 8.
    #[serde(default = "default_patch")]
    pub patch_size: usize,
    /// Downsampling ratio d of the patch embedding.
    #[serde(default = "default_patch")]
    pub patch_stride: usize,
    /// Input resolution (height, width) in pixels.
    pub input_hw: (usize, usize),
    #[serde(default)]
    pub drop_path_rate: f64,
    pub attention: AttentionMode,
    /// Window size (wh, ww) for windowed attention modes.
    pub window_hw: (usize, usize),
    #[serde(default = "default_period")]
    pub interleave_period: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigWarning(pub String);

impl EncoderConfig {
    /// Token grid (rows, cols) after the patch embedding.
    pub fn grid_hw(&self) -> (usize, usize) {
        (
            self.input_hw.0 / self.patch_stride,
            self.input_hw.1 / self.patch_stride,
        )
    }

    /// Symmetric padding that keeps grid = input / stride for overlapping
    /// patches (stride < patch size).
    pub fn patch_pad(&self) -> usize {
        (self.patch_size - self.patch_stride) / 2
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn ffn_hidden(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }

    /// Window clamped to the grid; modes that need windows warn when the
    /// configured window exceeds the grid.
    pub fn effective_window(&self) -> (usize, usize) {
        let (gh, gw) = self.grid_hw();
        (self.window_hw.0.min(gh), self.window_hw.1.min(gw))
    }

    /// Layers with full attention under `Interleaved`: 1-based indices that
    /// are multiples of depth / period.
    pub fn interleave_interval(&self) -> usize {
        (self.depth / self.interleave_period).max(1)
    }

    pub fn layer_attention(&self, layer_idx: usize) -> LayerAttention {
        match self.attention {
            AttentionMode::Full => LayerAttention::Full,
            AttentionMode::Window => LayerAttention::Windowed {
                shifted: false,
                pooled: false,
            },
            AttentionMode::WindowShift => LayerAttention::Windowed {
                shifted: layer_idx % 2 == 1,
                pooled: false,
            },
            AttentionMode::WindowPool => LayerAttention::Windowed {
                shifted: false,
                pooled: true,
            },
            AttentionMode::WindowShiftPool => LayerAttention::Windowed {
                shifted: layer_idx % 2 == 1,
                pooled: true,
            },
            AttentionMode::Interleaved => {
                if (layer_idx + 1) % self.interleave_interval() == 0 {
                    LayerAttention::Full
                } else {
                    LayerAttention::Windowed {
                        shifted: false,
                        pooled: false,
                    }
                }
            }
        }
    }

    /// Stochastic-depth drop probability for a layer, scaled linearly from 0
    /// at the first block to `drop_path_rate` at the last.
    pub fn drop_path_prob(&self, layer_idx: usize) -> f64 {
        if self.depth <= 1 {
            return 0.0;
        }
        self.drop_path_rate * layer_idx as f64 / (self.depth - 1) as f64
    }

    pub fn validate(&self) -> Result<Vec<ConfigWarning>> {
        let mut warnings = Vec::new();
        let fail = |detail: String| Err(Error::InvalidConfig { detail });
        if self.depth == 0 || self.embed_dim == 0 || self.num_heads == 0 {
            return fail("depth, embed_dim and num_heads must be positive".into());
        }
        if self.embed_dim % self.num_heads != 0 {
            return fail(format!(
                "embed_dim {} not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.patch_stride == 0 || self.patch_size < self.patch_stride {
            return fail(format!(
                "patch size {} must be >= stride {}",
                self.patch_size, self.patch_stride
            ));
        }
        if (self.patch_size - self.patch_stride) % 2 != 0 {
            return fail(format!(
                "patch size {} minus stride {} must be even for symmetric padding",
                self.patch_size, self.patch_stride
            ));
        }
        if self.input_hw.0 % self.patch_stride != 0 || self.input_hw.1 % self.patch_stride != 0 {
            return fail(format!(
                "input {:?} not divisible by stride {}",
                self.input_hw, self.patch_stride
            ));
        }
        if !(0.0..1.0).contains(&self.drop_path_rate) {
            return fail(format!(
                "drop_path_rate {} outside [0, 1)",
                self.drop_path_rate
            ));
        }
        if self.mlp_ratio <= 0.0 {
            return fail(format!("mlp_ratio {} must be positive", self.mlp_ratio));
        }
        if self.interleave_period == 0 {
            return fail("interleave_period must be >= 1".into());
        }
        if self.window_hw.0 == 0 || self.window_hw.1 == 0 {
            return fail(format!("window {:?} must be positive", self.window_hw));
        }
        let needs_windows = !matches!(self.attention, AttentionMode::Full);
        let (gh, gw) = self.grid_hw();
        if needs_windows && (self.window_hw.0 > gh || self.window_hw.1 > gw) {
            warnings.push(ConfigWarning(format!(
                "window {:?} exceeds grid ({gh}, {gw}); clamped",
                self.window_hw
            )));
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderKind,
    #[serde(default = "default_head_norm")]
    pub head_norm: HeadNorm,
    /// Dataset schema names, one decoder head each.
    pub datasets: Vec<String>,
}

fn default_head_norm() -> HeadNorm {
    HeadNorm::BatchNorm
}

impl ModelConfig {
    pub fn validate(&self) -> Result<Vec<ConfigWarning>> {
        if self.datasets.is_empty() {
            return Err(Error::InvalidConfig {
                detail: "at least one dataset head required".into(),
            });
        }
        self.encoder.validate()
    }
}

/// Named presets. The `vitpose-*` trio mirrors the published ViT-B/L/H
/// geometries at 256x192; `toy-*` are desk-scale models for tests and the
/// synthetic-data pipeline.
pub fn preset(name: &str) -> Result<ModelConfig> {
    let vit = |depth, dim, heads, dp| ModelConfig {
        encoder: EncoderConfig {
            depth,
            embed_dim: dim,
            num_heads: heads,
            mlp_ratio: 4.0,
            patch_size: 16,
            patch_stride: 16,
            input_hw: (256, 192),
            drop_path_rate: dp,
            attention: AttentionMode::Full,
            window_hw: (8, 8),
            interleave_period: 4,
        },
        decoder: DecoderKind::Classic,
        head_norm: HeadNorm::BatchNorm,
        datasets: vec!["coco".into()],
    };
    match name {
        "vitpose-b" => Ok(vit(12, 768, 12, 0.30)),
        "vitpose-l" => Ok(vit(24, 1024, 16, 0.50)),
        "vitpose-h" => Ok(vit(32, 1280, 16, 0.55)),
        "toy-s" => Ok(ModelConfig {
            encoder: EncoderConfig {
                depth: 2,
                embed_dim: 16,
                num_heads: 2,
                mlp_ratio: 4.0,
                patch_size: 16,
                patch_stride: 16,
                input_hw: (64, 48),
                drop_path_rate: 0.0,
                attention: AttentionMode::Full,
                window_hw: (4, 4),
                interleave_period: 4,
            },
            decoder: DecoderKind::Simple,
            head_norm: HeadNorm::Affine,
            datasets: vec!["synthetic".into()],
        }),
        // stride 8 with patch 16: overlapping patches, 8x6 grid on 64x48
        "toy-m" => Ok(ModelConfig {
            encoder: EncoderConfig {
                depth: 4,
                embed_dim: 64,
                num_heads: 4,
                mlp_ratio: 4.0,
                patch_size: 16,
                patch_stride: 8,
                input_hw: (64, 48),
                drop_path_rate: 0.0,
                attention: AttentionMode::Full,
                window_hw: (4, 4),
                interleave_period: 4,
            },
            decoder: DecoderKind::Simple,
            head_norm: HeadNorm::Affine,
            datasets: vec!["synthetic".into()],
        }),
        other => Err(Error::InvalidConfig {
            detail: format!("unknown preset: {other}"),
        }),
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["vitpose-b", "vitpose-l", "vitpose-h", "toy-s", "toy-m"]
}

/// Parse "256x192" (height x width).
pub fn parse_hw(s: &str) -> Result<(usize, usize)> {
    let mut it = s.split('x');
    let bad = || Error::InvalidConfig {
        detail: format!("expected HxW, got {s}"),
    };
    let h = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
    let w = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
    if it.next().is_some() {
        return Err(bad());
    }
    Ok((h, w))
}
