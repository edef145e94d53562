//! TOML run configuration: a model section (preset plus overrides), the
//! training recipe, and the data source.

use std::path::Path;

use serde::Deserialize;

use plainpose::config::{preset, AttentionMode, DecoderKind, HeadNorm, ModelConfig};
use plainpose::error::{Error, Result};
use plainpose::train::TrainConfig;

#[derive(Debug, Clone, Deserialize, Default)]
pub struct ModelSection {
    pub preset: Option<String>,
    pub depth: Option<usize>,
    pub embed_dim: Option<usize>,
    pub num_heads: Option<usize>,
    pub mlp_ratio: Option<f64>,
    pub patch_size: Option<usize>,
    pub patch_stride: Option<usize>,
    /// (height, width) pixels.
    pub input: Option<[usize; 2]>,
    pub drop_path_rate: Option<f64>,
    pub attention: Option<String>,
    pub window: Option<[usize; 2]>,
    pub interleave_period: Option<usize>,
    pub decoder: Option<String>,
    pub head_norm: Option<String>,
    pub datasets: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DataSection {
    /// "synthetic" or a directory produced by `plainpose synth`.
    pub source: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_holdout")]
    pub holdout: usize,
    #[serde(default)]
    pub seed: u64,
    /// Image size for generated data; defaults to the model input.
    pub hw: Option<[usize; 2]>,
    pub schema: Option<String>,
}

fn default_n() -> usize {
    256
}
fn default_holdout() -> usize {
    48
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: "synthetic".into(),
            n: default_n(),
            holdout: default_holdout(),
            seed: 0,
            hw: None,
            schema: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelSection,
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub data: Option<DataSection>,
}

pub fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Preset (default toy-s) with the section's overrides applied.
pub fn resolve_model(section: &ModelSection) -> Result<ModelConfig> {
    let mut cfg = preset(section.preset.as_deref().unwrap_or("toy-s"))?;
    let enc = &mut cfg.encoder;
    if let Some(v) = section.depth {
        enc.depth = v;
    }
    if let Some(v) = section.embed_dim {
        enc.embed_dim = v;
    }
    if let Some(v) = section.num_heads {
        enc.num_heads = v;
    }
    if let Some(v) = section.mlp_ratio {
        enc.mlp_ratio = v;
    }
    if let Some(v) = section.patch_size {
        enc.patch_size = v;
    }
    if let Some(v) = section.patch_stride {
        enc.patch_stride = v;
    }
    if let Some([h, w]) = section.input {
        enc.input_hw = (h, w);
    }
    if let Some(v) = section.drop_path_rate {
        enc.drop_path_rate = v;
    }
    if let Some(s) = &section.attention {
        enc.attention = AttentionMode::parse(s)?;
    }
    if let Some([h, w]) = section.window {
        enc.window_hw = (h, w);
    }
    if let Some(v) = section.interleave_period {
        enc.interleave_period = v;
    }
    if let Some(s) = &section.decoder {
        cfg.decoder = match s.as_str() {
            "classic" => DecoderKind::Classic,
            "simple" => DecoderKind::Simple,
            other => {
                return Err(Error::InvalidConfig {
                    detail: format!("unknown decoder: {other}"),
                });
            }
        };
    }
    if let Some(s) = &section.head_norm {
        cfg.head_norm = match s.as_str() {
            "batch_norm" => HeadNorm::BatchNorm,
            "affine" => HeadNorm::Affine,
            other => {
                return Err(Error::InvalidConfig {
                    detail: format!("unknown head norm: {other}"),
                });
            }
        };
    }
    if let Some(d) = &section.datasets {
        cfg.datasets = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}
