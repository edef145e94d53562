//! Gaussian target rendering and sub-pixel keypoint decoding.
//!
//! Coordinates follow the half-pixel convention throughout: heatmap cell `c`
//! covers input pixels around `(c + 0.5) * stride - 0.5`, and the inverse map
//! `(px + 0.5) / stride - 0.5` places a pixel in heatmap space.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Keypoint visibility in COCO convention.
pub const V_UNLABELED: u8 = 0;
pub const V_INVISIBLE: u8 = 1;
pub const V_VISIBLE: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Pixel coordinates in the input image, x right, y down.
    pub x: f64,
    pub y: f64,
    pub v: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    pub points: Vec<Keypoint>,
    /// (x, y, w, h) in pixels.
    pub bbox: (f64, f64, f64, f64),
    pub dataset: String,
}

/// Per-keypoint heatmap stack [h, w, k] with its stride in input pixels.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub values: Tensor<f64>,
    pub stride: usize,
}

impl Heatmap {
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.values.shape();
        (s[0], s[1], s[2])
    }

    pub fn channel(&self, k: usize) -> Vec<f64> {
        let (h, w, c) = self.dims();
        let mut out = Vec::with_capacity(h * w);
        for cell in 0..h * w {
            out.push(self.values.data()[cell * c + k]);
        }
        out
    }
}

pub fn pixel_to_cell(px: f64, stride: usize) -> f64 {
    (px + 0.5) / stride as f64 - 0.5
}

pub fn cell_to_pixel(cell: f64, stride: usize) -> f64 {
    (cell + 0.5) * stride as f64 - 0.5
}

/// Render peak-normalized Gaussian targets, one channel per keypoint, with a
/// per-channel weight mask (0 for unlabeled joints).
pub fn encode_targets(
    kps: &KeypointSet,
    heatmap_hw: (usize, usize),
    stride: usize,
    sigma: f64,
) -> Result<(Heatmap, Vec<f64>)> {
    if stride == 0 || sigma <= 0.0 {
        return Err(Error::InvalidConfig {
            detail: format!("stride {stride} sigma {sigma}"),
        });
    }
    let (h, w) = heatmap_hw;
    let k = kps.points.len();
    let mut values = vec![0.0f64; h * w * k];
    let mut weights = vec![0.0f64; k];
    let denom = 2.0 * sigma * sigma;
    for (ki, kp) in kps.points.iter().enumerate() {
        if kp.v == V_UNLABELED {
            continue;
        }
        weights[ki] = 1.0;
        let cx = pixel_to_cell(kp.x, stride);
        let cy = pixel_to_cell(kp.y, stride);
        for r in 0..h {
            let dy = r as f64 - cy;
            for c in 0..w {
                let dx = c as f64 - cx;
                values[(r * w + c) * k + ki] = (-(dx * dx + dy * dy) / denom).exp();
            }
        }
    }
    Ok((
        Heatmap {
            values: Tensor::new(&[h, w, k], values)?,
            stride,
        },
        weights,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedPoint {
    pub x: f64,
    pub y: f64,
    /// Peak value at the refined sub-pixel location.
    pub score: f64,
}

/// One axis of the sub-pixel refinement: quarter-offset toward the larger
/// neighbor, upgraded to the exact log-parabolic vertex when the local
/// 3-point neighborhood supports it (Gaussian targets decode exactly).
fn axis_offset(left: Option<f64>, mid: f64, right: Option<f64>) -> (f64, f64) {
    let (l, r) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        // border peak: stay at the cell center
        _ => return (0.0, 0.0),
    };
    const TINY: f64 = 1e-12;
    if l > TINY && r > TINY && mid > TINY {
        let (ll, lm, lr) = (l.ln(), mid.ln(), r.ln());
        let den = ll - 2.0 * lm + lr;
        if den < -TINY {
            let delta = (0.5 * (ll - lr) / den).clamp(-0.5, 0.5);
            // vertex value offset of the fitted parabola, in log space
            let b = 0.5 * (lr - ll);
            let log_gain = -b * b / (4.0 * (den / 2.0));
            return (delta, log_gain);
        }
    }
    let delta = match r.partial_cmp(&l) {
        Some(std::cmp::Ordering::Greater) => 0.25,
        Some(std::cmp::Ordering::Less) => -0.25,
        _ => 0.0,
    };
    (delta, 0.0)
}

/// Decode per-channel peaks to input-pixel coordinates with confidences.
/// Ties resolve to the lowest row-major index; flat neighborhoods stay at
/// the cell center.
pub fn decode_keypoints(hm: &Heatmap) -> Result<Vec<DecodedPoint>> {
    let (h, w, k) = hm.dims();
    if h < 3 || w < 3 {
        return Err(Error::InvalidGeometry {
            op: "decode_keypoints",
            detail: format!("heatmap {h}x{w} must be at least 3x3"),
        });
    }
    let data = hm.values.data();
    let at = |r: usize, c: usize, ki: usize| data[(r * w + c) * k + ki];
    let mut out = Vec::with_capacity(k);
    for ki in 0..k {
        let (mut pr, mut pc, mut peak) = (0usize, 0usize, at(0, 0, ki));
        for r in 0..h {
            for c in 0..w {
                let v = at(r, c, ki);
                if v > peak {
                    peak = v;
                    pr = r;
                    pc = c;
                }
            }
        }
        let (dx, gain_x) = axis_offset(
            (pc > 0).then(|| at(pr, pc - 1, ki)),
            peak,
            (pc + 1 < w).then(|| at(pr, pc + 1, ki)),
        );
        let (dy, gain_y) = axis_offset(
            (pr > 0).then(|| at(pr - 1, pc, ki)),
            peak,
            (pr + 1 < h).then(|| at(pr + 1, pc, ki)),
        );
        let score = if peak > 0.0 {
            (peak.ln() + gain_x + gain_y).exp()
        } else {
            peak
        };
        out.push(DecodedPoint {
            x: cell_to_pixel(pc as f64 + dx, hm.stride),
            y: cell_to_pixel(pr as f64 + dy, hm.stride),
            score,
        });
    }
    Ok(out)
}
