//! Object keypoint similarity.
//!
//! OKS = sum_i exp(-d_i^2 / (2 s^2 k_i^2)) [v_i > 0] / sum_i [v_i > 0],
//! with s^2 the annotated instance area and k_i = 2 * sigma_i.

use crate::eval::coco::{Annotation, Prediction};

/// OKS between a prediction and a ground-truth annotation. `None` when the
/// annotation has no labeled keypoints (the instance is skipped).
pub fn oks(pred: &Prediction, gt: &Annotation, sigmas: &[f64]) -> Option<f64> {
    let s2 = gt.area;
    let mut num = 0.0;
    let mut count = 0usize;
    for (i, g) in gt.keypoints.chunks(3).enumerate() {
        if g[2] <= 0.0 {
            continue;
        }
        let p = &pred.keypoints[3 * i..3 * i + 2];
        let d2 = (p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2);
        let k = 2.0 * sigmas[i];
        num += (-d2 / (2.0 * s2 * k * k)).exp();
        count += 1;
    }
    if count == 0 {
        None
    } else {
        Some(num / count as f64)
    }
}
