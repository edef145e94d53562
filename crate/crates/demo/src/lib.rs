//! Browser demo bindings: the analytic cost model, the synthetic data
//! generator, and the heatmap codec, exposed through wasm-bindgen for the
//! static page in `www/`. Everything also compiles natively so the bindings
//! are testable with plain `cargo test`.

use wasm_bindgen::prelude::wasm_bindgen;

use plainpose::config::{preset, AttentionMode};
use plainpose::cost::cost_report;
use plainpose::heatmap::{
    decode_keypoints, encode_targets, Heatmap, Keypoint, KeypointSet, V_VISIBLE,
};
use plainpose::schema::Schema;
use plainpose::train::synth::{joint_color, synth_sample, SynthConfig};

fn err_json(detail: &str) -> String {
    serde_json::json!({ "error": detail }).to_string()
}

/// Cost report for a preset with overrides, as a JSON string.
#[wasm_bindgen]
pub fn demo_cost_report(
    preset_name: &str,
    attention: &str,
    window_h: usize,
    window_w: usize,
    stride: usize,
    input_h: usize,
    input_w: usize,
    batch: usize,
) -> String {
    let mut cfg = match preset(preset_name) {
        Ok(c) => c,
        Err(e) => return err_json(&e.to_string()),
    };
    cfg.encoder.attention = match AttentionMode::parse(attention) {
        Ok(a) => a,
        Err(e) => return err_json(&e.to_string()),
    };
    cfg.encoder.window_hw = (window_h, window_w);
    cfg.encoder.patch_stride = stride;
    cfg.encoder.input_hw = (input_h, input_w);
    if let Err(e) = cfg.validate() {
        return err_json(&e.to_string());
    }
    let report = cost_report(&cfg, batch.max(1));
    serde_json::to_string(&report).unwrap_or_else(|e| err_json(&e.to_string()))
}

/// The preset names the cost explorer offers.
#[wasm_bindgen]
pub fn demo_presets() -> String {
    serde_json::to_string(plainpose::config::preset_names()).expect("static list")
}

fn synth_config(h: usize, w: usize) -> SynthConfig {
    SynthConfig::for_schema(
        Schema::by_name("synthetic").expect("built-in schema"),
        (h, w),
    )
}

/// One synthetic sample as RGBA pixels (row-major, h*w*4).
#[wasm_bindgen]
pub fn demo_synth_rgba(seed: u64, h: usize, w: usize) -> Vec<u8> {
    let sample = synth_sample::<f32>(&synth_config(h, w), seed, 0);
    let data = sample.image.data();
    let mut out = Vec::with_capacity(h * w * 4);
    for px in 0..h * w {
        for ch in 0..3 {
            out.push((data[px * 3 + ch].clamp(0.0, 1.0) * 255.0) as u8);
        }
        out.push(255);
    }
    out
}

/// The keypoints of the same synthetic sample, with the palette color of
/// each joint, as JSON.
#[wasm_bindgen]
pub fn demo_synth_keypoints(seed: u64, h: usize, w: usize) -> String {
    let cfg = synth_config(h, w);
    let n = cfg.schema.num_keypoints;
    let sample = synth_sample::<f32>(&cfg, seed, 0);
    let points: Vec<serde_json::Value> = sample
        .kps
        .points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let c = joint_color(k, n);
            serde_json::json!({
                "name": cfg.schema.keypoints[k],
                "x": p.x,
                "y": p.y,
                "v": p.v,
                "color": [
                    (c[0] * 255.0) as u8,
                    (c[1] * 255.0) as u8,
                    (c[2] * 255.0) as u8
                ],
            })
        })
        .collect();
    let (bx, by, bw, bh) = sample.kps.bbox;
    serde_json::json!({ "points": points, "bbox": [bx, by, bw, bh] }).to_string()
}

fn render_target(
    x: f64,
    y: f64,
    sigma: f64,
    hm_h: usize,
    hm_w: usize,
    stride: usize,
) -> Option<Heatmap> {
    let kps = KeypointSet {
        points: vec![Keypoint { x, y, v: V_VISIBLE }],
        bbox: (0.0, 0.0, (hm_w * stride) as f64, (hm_h * stride) as f64),
        dataset: "synthetic".into(),
    };
    encode_targets(&kps, (hm_h, hm_w), stride, sigma)
        .ok()
        .map(|(hm, _)| hm)
}

/// Encode a keypoint at input pixel (x, y) into a Gaussian target, decode it
/// back, and report the roundtrip as JSON.
#[wasm_bindgen]
pub fn demo_heatmap_roundtrip(
    x: f64,
    y: f64,
    sigma: f64,
    hm_h: usize,
    hm_w: usize,
    stride: usize,
) -> String {
    let Some(hm) = render_target(x, y, sigma, hm_h, hm_w, stride) else {
        return err_json("bad codec parameters");
    };
    match decode_keypoints(&hm) {
        Ok(points) => {
            let p = &points[0];
            let err = ((p.x - x).powi(2) + (p.y - y).powi(2)).sqrt();
            serde_json::json!({
                "decoded_x": p.x,
                "decoded_y": p.y,
                "score": p.score,
                "error_px": err,
            })
            .to_string()
        }
        Err(e) => err_json(&e.to_string()),
    }
}

/// The rendered Gaussian channel as false-color RGBA at heatmap resolution.
#[wasm_bindgen]
pub fn demo_heatmap_rgba(
    x: f64,
    y: f64,
    sigma: f64,
    hm_h: usize,
    hm_w: usize,
    stride: usize,
) -> Vec<u8> {
    let Some(hm) = render_target(x, y, sigma, hm_h, hm_w, stride) else {
        return Vec::new();
    };
    let ch = hm.channel(0);
    let mut out = Vec::with_capacity(hm_h * hm_w * 4);
    for v in ch {
        let g = (v.clamp(0.0, 1.0) * 255.0) as u8;
        out.push(g);
        out.push((g as f64 * 0.6) as u8);
        out.push(255 - g);
        out.push(255);
    }
    out
}

/// Grid and heatmap geometry of a preset, for the page header.
#[wasm_bindgen]
pub fn demo_geometry(preset_name: &str, stride: usize, input_h: usize, input_w: usize) -> String {
    let mut cfg = match preset(preset_name) {
        Ok(c) => c,
        Err(e) => return err_json(&e.to_string()),
    };
    cfg.encoder.patch_stride = stride;
    cfg.encoder.input_hw = (input_h, input_w);
    if let Err(e) = cfg.validate() {
        return err_json(&e.to_string());
    }
    let (gh, gw) = cfg.encoder.grid_hw();
    serde_json::json!({
        "grid": [gh, gw],
        "tokens": gh * gw,
        "heatmap": [4 * gh, 4 * gw],
    })
    .to_string()
}
