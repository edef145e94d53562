//! Analytic parameter / FLOP / activation-memory model.
//!
//! FLOPs are multiply-accumulate counts (1 MAC = 1 reported FLOP), the
//! convention under which the ViT-B backbone at 256x192 with stride 16 comes
//! out at about 17.1 G. Headline `params` and `flops` cover the encoder
//! (patch embed, position embedding, blocks, final norm); decoder heads are
//! reported separately so both readings of published totals can be compared.
//! Norms, softmax, activations, pooling and bilinear resizes are
//! order-of-magnitude estimated on a separate "minor ops" line.

use serde::Serialize;

use crate::config::{DecoderKind, EncoderConfig, LayerAttention, ModelConfig};
use crate::decoder::head_param_count;
use crate::schema::Schema;

#[derive(Debug, Clone, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub params: u64,
    pub flops: u64,
    pub activation_elems: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    /// Backbone parameters (headline number).
    pub params: u64,
    pub decoder_params: u64,
    pub total_params: u64,
    /// Backbone MACs per forward (headline number).
    pub flops: u64,
    pub decoder_flops: u64,
    pub total_flops: u64,
    /// Non-MAC elementwise work (norms, softmax, activations, resizes).
    pub minor_flops: u64,
    /// Stored activations per instance under the retention model.
    pub activation_elems: u64,
    /// f32 bytes for `batch` instances.
    pub activation_bytes: u64,
    pub batch: usize,
    pub per_layer: Vec<LayerCost>,
}

/// Per-block parameter count: qkv + proj + two-layer FFN + two norms.
pub fn block_params(cfg: &EncoderConfig) -> u64 {
    let c = cfg.embed_dim as u64;
    let h = cfg.ffn_hidden() as u64;
    let qkv = c * 3 * c + 3 * c;
    let proj = c * c + c;
    let ffn = c * h + h + h * c + c;
    let norms = 4 * c;
    qkv + proj + ffn + norms
}

pub fn patch_embed_params(cfg: &EncoderConfig) -> u64 {
    let c = cfg.embed_dim as u64;
    let p = cfg.patch_size as u64;
    p * p * 3 * c + c
}

pub fn pos_embed_params(cfg: &EncoderConfig) -> u64 {
    let (gh, gw) = cfg.grid_hw();
    (gh * gw * cfg.embed_dim) as u64
}

pub fn encoder_params(cfg: &EncoderConfig) -> u64 {
    patch_embed_params(cfg)
        + pos_embed_params(cfg)
        + cfg.depth as u64 * block_params(cfg)
        + 2 * cfg.embed_dim as u64
}

/// Window geometry used by the cost formulas: token count per window, number
/// of windows, and key/value count per window.
struct WindowCost {
    n_tokens: u64,
    n_kv: u64,
    n_q_groups: u64,
}

fn layer_geometry(cfg: &EncoderConfig, layer_idx: usize) -> WindowCost {
    let (gh, gw) = cfg.grid_hw();
    match cfg.layer_attention(layer_idx) {
        LayerAttention::Full => {
            let n = (gh * gw) as u64;
            WindowCost {
                n_tokens: n,
                n_kv: n,
                n_q_groups: 1,
            }
        }
        LayerAttention::Windowed { pooled, .. } => {
            let (wh, ww) = cfg.effective_window();
            let n_w = (gh.div_ceil(wh) * gw.div_ceil(ww)) as u64;
            let wa = (wh * ww) as u64;
            let n_kv = if pooled { wa + n_w } else { wa };
            WindowCost {
                n_tokens: n_w * wa,
                n_kv,
                n_q_groups: n_w,
            }
        }
    }
}

/// MACs for one block: qkv 3nC^2, scores n*n_kv*C, weighted sum n*n_kv*C,
/// proj nC^2, FFN 2*n*C*hidden.
pub fn block_flops(cfg: &EncoderConfig, layer_idx: usize) -> u64 {
    let c = cfg.embed_dim as u64;
    let hid = cfg.ffn_hidden() as u64;
    let g = layer_geometry(cfg, layer_idx);
    let n = g.n_tokens;
    let qkv = 3 * n * c * c;
    let attn = 2 * g.n_q_groups * (g.n_tokens / g.n_q_groups) * g.n_kv * c;
    let proj = n * c * c;
    let ffn = 2 * n * c * hid;
    qkv + attn + proj + ffn
}

pub fn patch_embed_flops(cfg: &EncoderConfig) -> u64 {
    let (gh, gw) = cfg.grid_hw();
    let c = cfg.embed_dim as u64;
    let p = cfg.patch_size as u64;
    (gh * gw) as u64 * c * (p * p * 3)
}

/// Stored activations for one block under the retention model: inputs of
/// every matmul plus the attention probability maps.
fn block_activation_elems(cfg: &EncoderConfig, layer_idx: usize) -> u64 {
    let c = cfg.embed_dim as u64;
    let hid = cfg.ffn_hidden() as u64;
    let heads = cfg.num_heads as u64;
    let g = layer_geometry(cfg, layer_idx);
    let n = g.n_tokens;
    // ln1 out (qkv input) + qkv out + attn out (proj input) + ln2 out (fc1
    // input) + ffn hidden (fc2 input)
    let linear = n * c + 3 * n * c + n * c + n * c + n * hid;
    let probs = heads * g.n_q_groups * (g.n_tokens / g.n_q_groups) * g.n_kv;
    let pooled_extra = match cfg.layer_attention(layer_idx) {
        LayerAttention::Windowed { pooled: true, .. } => g.n_q_groups * c,
        _ => 0,
    };
    linear + probs + pooled_extra
}

struct DecoderCost {
    params: u64,
    flops: u64,
    minor: u64,
    activation_elems: u64,
}

fn decoder_cost(cfg: &ModelConfig, num_keypoints: usize) -> DecoderCost {
    let (gh, gw) = cfg.encoder.grid_hw();
    let (gh, gw) = (gh as u64, gw as u64);
    let c = cfg.encoder.embed_dim as u64;
    let k = num_keypoints as u64;
    let w = crate::decoder::DECONV_WIDTH as u64;
    match cfg.decoder {
        DecoderKind::Classic => {
            // transposed convs counted by input-cells x kernel volume
            let d1 = gh * gw * 16 * c * w;
            let d2 = (2 * gh) * (2 * gw) * 16 * w * w;
            let out = (4 * gh) * (4 * gw) * w * k;
            let act = (2 * gh) * (2 * gw) * w + (4 * gh) * (4 * gw) * w;
            DecoderCost {
                params: head_param_count(DecoderKind::Classic, c as usize, k as usize),
                flops: d1 + d2 + out,
                minor: 4 * act, // norms + relus
                activation_elems: act + (4 * gh) * (4 * gw) * k,
            }
        }
        DecoderKind::Simple => {
            let up = (4 * gh) * (4 * gw) * c;
            let conv = (4 * gh) * (4 * gw) * 9 * c * k;
            DecoderCost {
                params: head_param_count(DecoderKind::Simple, c as usize, k as usize),
                flops: conv,
                minor: gh * gw * c + 4 * up, // relu + bilinear taps
                activation_elems: up + (4 * gh) * (4 * gw) * k,
            }
        }
    }
}

/// Rough elementwise-op estimate per block (not MACs): two layer norms,
/// softmax over the score maps, GELU over the FFN hidden.
fn block_minor_flops(cfg: &EncoderConfig, layer_idx: usize) -> u64 {
    let c = cfg.embed_dim as u64;
    let hid = cfg.ffn_hidden() as u64;
    let heads = cfg.num_heads as u64;
    let g = layer_geometry(cfg, layer_idx);
    let n = g.n_tokens;
    8 * n * c + 4 * heads * n * g.n_kv + 6 * n * hid
}

/// Full analytic report for a model config at its configured input size.
pub fn cost_report(cfg: &ModelConfig, batch: usize) -> CostReport {
    let enc = &cfg.encoder;
    let mut per_layer = Vec::new();
    per_layer.push(LayerCost {
        name: "patch_embed".into(),
        params: patch_embed_params(enc) + pos_embed_params(enc),
        flops: patch_embed_flops(enc),
        activation_elems: (enc.grid_hw().0 * enc.grid_hw().1 * enc.embed_dim) as u64,
    });
    let mut minor = 0u64;
    for i in 0..enc.depth {
        let kind = match enc.layer_attention(i) {
            LayerAttention::Full => "full",
            LayerAttention::Windowed { shifted: false, pooled: false } => "window",
            LayerAttention::Windowed { shifted: true, pooled: false } => "window+shift",
            LayerAttention::Windowed { shifted: false, pooled: true } => "window+pool",
            LayerAttention::Windowed { shifted: true, pooled: true } => "window+shift+pool",
        };
        per_layer.push(LayerCost {
            name: format!("block{i} ({kind})"),
            params: block_params(enc),
            flops: block_flops(enc, i),
            activation_elems: block_activation_elems(enc, i),
        });
        minor += block_minor_flops(enc, i);
    }
    let (gh, gw) = enc.grid_hw();
    per_layer.push(LayerCost {
        name: "final_norm".into(),
        params: 2 * enc.embed_dim as u64,
        flops: 0,
        activation_elems: (gh * gw * enc.embed_dim) as u64,
    });
    let enc_params: u64 = encoder_params(enc);
    let enc_flops: u64 = patch_embed_flops(enc) + (0..enc.depth).map(|i| block_flops(enc, i)).sum::<u64>();
    let enc_act: u64 = per_layer.iter().map(|l| l.activation_elems).sum();

    let mut dec_params = 0;
    let mut dec_flops = 0;
    let mut dec_act = 0;
    for dataset in &cfg.datasets {
        let n_k = Schema::by_name(dataset)
            .or_else(|_| Schema::resolve(dataset))
            .map(|s| s.num_keypoints)
            .unwrap_or(17);
        let d = decoder_cost(cfg, n_k);
        dec_params += d.params;
        dec_flops += d.flops;
        dec_act += d.activation_elems;
        minor += d.minor;
        per_layer.push(LayerCost {
            name: format!("head.{dataset} ({:?})", cfg.decoder).to_lowercase(),
            params: d.params,
            flops: d.flops,
            activation_elems: d.activation_elems,
        });
    }

    let activation_elems = enc_act + dec_act;
    CostReport {
        params: enc_params,
        decoder_params: dec_params,
        total_params: enc_params + dec_params,
        flops: enc_flops,
        decoder_flops: dec_flops,
        total_flops: enc_flops + dec_flops,
        minor_flops: minor,
        activation_elems,
        activation_bytes: activation_elems * 4 * batch as u64,
        batch,
        per_layer,
    }
}
