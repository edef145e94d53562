//! COCO-keypoint JSON ingestion: ground-truth datasets and result lists.
//!
//! Unknown fields are ignored; structural problems surface as parse errors
//! carrying the file path, and keypoint-arity violations name the offending
//! annotation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{Keypoint, KeypointSet};
use crate::schema::Schema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRec {
    pub id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: i64,
    pub image_id: i64,
    /// Flat x, y, v triples, 3 * N_k entries.
    pub keypoints: Vec<f64>,
    /// (x, y, w, h) in pixels.
    pub bbox: [f64; 4],
    pub area: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_keypoints: Option<usize>,
    /// MPII-style head box [x1, y1, x2, y2] for PCKh scaling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_box: Option<[f64; 4]>,
}

impl Annotation {
    pub fn labeled_count(&self) -> usize {
        self.keypoints.chunks(3).filter(|t| t[2] > 0.0).count()
    }

    pub fn to_keypoint_set(&self, dataset: &str) -> KeypointSet {
        KeypointSet {
            points: self
                .keypoints
                .chunks(3)
                .map(|t| Keypoint {
                    x: t[0],
                    y: t[1],
                    v: t[2] as u8,
                })
                .collect(),
            bbox: (self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3]),
            dataset: dataset.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtDataset {
    pub images: Vec<ImageRec>,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: i64,
    /// Flat x, y, score triples, 3 * N_k entries.
    pub keypoints: Vec<f64>,
    pub score: f64,
}

impl Prediction {
    /// Keypoint-extent area, the stand-in pycocotools computes for results.
    pub fn extent_area(&self) -> f64 {
        let xs: Vec<f64> = self.keypoints.chunks(3).map(|t| t[0]).collect();
        let ys: Vec<f64> = self.keypoints.chunks(3).map(|t| t[1]).collect();
        let span = |v: &[f64]| {
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - v.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        span(&xs) * span(&ys)
    }
}

fn check_arity(id: i64, len: usize, schema: &Schema) -> Result<()> {
    if len != 3 * schema.num_keypoints {
        return Err(Error::KeypointArity {
            annotation_id: id,
            expected: 3 * schema.num_keypoints,
            got: len,
        });
    }
    Ok(())
}

pub fn parse_gt_json(text: &str, origin: &str, schema: &Schema) -> Result<GtDataset> {
    let gt: GtDataset = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.into(),
        detail: e.to_string(),
    })?;
    for ann in &gt.annotations {
        check_arity(ann.id, ann.keypoints.len(), schema)?;
        if !gt.images.iter().any(|im| im.id == ann.image_id) {
            return Err(Error::Parse {
                path: origin.into(),
                detail: format!("annotation {} references missing image {}", ann.id, ann.image_id),
            });
        }
    }
    Ok(gt)
}

pub fn parse_predictions_json(text: &str, origin: &str, schema: &Schema) -> Result<Vec<Prediction>> {
    let preds: Vec<Prediction> = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.into(),
        detail: e.to_string(),
    })?;
    for (i, p) in preds.iter().enumerate() {
        check_arity(i as i64, p.keypoints.len(), schema)?;
    }
    Ok(preds)
}

pub fn load_gt(path: &Path, schema: &Schema) -> Result<GtDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_gt_json(&text, &path.display().to_string(), schema)
}

pub fn load_predictions(path: &Path, schema: &Schema) -> Result<Vec<Prediction>> {
    let text = std::fs::read_to_string(path)?;
    parse_predictions_json(&text, &path.display().to_string(), schema)
}
