//! PCKh: fraction of joints within alpha * head size of the ground truth.
//!
//! Head size comes from the annotated head box diagonal when present, else
//! from the schema's head-segment joints. Instances with a degenerate head
//! segment are skipped. Predictions pair with annotations in order within
//! each image (top-down, one prediction per instance).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::coco::{Annotation, Prediction};
use crate::schema::Schema;

#[derive(Debug, Clone, Serialize)]
pub struct PckhReport {
    /// (joint name, fraction correct) for joints with at least one label.
    pub per_joint: Vec<(String, f64)>,
    pub mean: f64,
    pub evaluated_instances: usize,
    pub skipped_instances: usize,
}

fn head_size(gt: &Annotation, schema: &Schema) -> Option<f64> {
    if let Some([x1, y1, x2, y2]) = gt.head_box {
        let d = ((x2 - x1).powi(2) + (y2 - y1).powi(2)).sqrt();
        return (d > 0.0).then_some(d);
    }
    let (a, b) = schema.pckh_head_joints?;
    let ka = &gt.keypoints[3 * a..3 * a + 3];
    let kb = &gt.keypoints[3 * b..3 * b + 3];
    if ka[2] <= 0.0 || kb[2] <= 0.0 {
        return None;
    }
    let d = ((ka[0] - kb[0]).powi(2) + (ka[1] - kb[1]).powi(2)).sqrt();
    (d > 0.0).then_some(d)
}

pub fn pckh(
    predictions: &[Prediction],
    annotations: &[Annotation],
    schema: &Schema,
    alpha: f64,
) -> Result<PckhReport> {
    if schema.pckh_head_joints.is_none() {
        // head boxes may still carry the scale, but the schema should say so
        let any_head_box = annotations.iter().any(|a| a.head_box.is_some());
        if !any_head_box {
            return Err(Error::InvalidConfig {
                detail: format!("schema {} defines no PCKh head segment", schema.name),
            });
        }
    }
    let n_k = schema.num_keypoints;
    let mut correct = vec![0usize; n_k];
    let mut labeled = vec![0usize; n_k];
    let mut evaluated = 0usize;
    let mut skipped = 0usize;

    let mut image_ids: Vec<i64> = annotations.iter().map(|a| a.image_id).collect();
    image_ids.sort_unstable();
    image_ids.dedup();
    for id in image_ids {
        let gts: Vec<&Annotation> = annotations.iter().filter(|a| a.image_id == id).collect();
        let preds: Vec<&Prediction> = predictions.iter().filter(|p| p.image_id == id).collect();
        for (slot, gt) in gts.iter().enumerate() {
            let Some(pred) = preds.get(slot) else {
                skipped += 1;
                continue;
            };
            let Some(h) = head_size(gt, schema) else {
                skipped += 1;
                continue;
            };
            evaluated += 1;
            let tol = alpha * h;
            for j in 0..n_k {
                let g = &gt.keypoints[3 * j..3 * j + 3];
                if g[2] <= 0.0 {
                    continue;
                }
                labeled[j] += 1;
                let p = &pred.keypoints[3 * j..3 * j + 2];
                let d = ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt();
                if d <= tol {
                    correct[j] += 1;
                }
            }
        }
    }

    let per_joint: Vec<(String, f64)> = (0..n_k)
        .filter(|&j| labeled[j] > 0)
        .map(|j| {
            (
                schema.keypoints[j].clone(),
                correct[j] as f64 / labeled[j] as f64,
            )
        })
        .collect();
    if per_joint.is_empty() {
        return Err(Error::EmptyInput { op: "pckh" });
    }
    let mean = per_joint.iter().map(|(_, v)| v).sum::<f64>() / per_joint.len() as f64;
    Ok(PckhReport {
        per_joint,
        mean,
        evaluated_instances: evaluated,
        skipped_instances: skipped,
    })
}
