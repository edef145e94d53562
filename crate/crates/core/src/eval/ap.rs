//! OKS-based average precision / average recall.
//!
//! Protocol: per image, predictions sorted by score (ties by input order)
//! and truncated to 20 detections match greedily against unmatched ground
//! truths, preferring unignored ones; a ground truth is ignored when its
//! area falls outside the range under evaluation or it has no labeled
//! keypoints. Matched-to-ignored and unmatched-out-of-range detections are
//! ignored, the rest count as TP/FP. AP averages a 101-point interpolated
//! precision-recall curve; AR is the final recall. Both are then averaged
//! over OKS thresholds 0.50:0.05:0.95. Undefined values (no ground truth in
//! range) are reported as -1.

use serde::Serialize;

use crate::eval::coco::{Annotation, Prediction};
use crate::eval::oks::oks;

pub const MAX_DETS: usize = 20;
pub const AREA_ALL: (f64, f64) = (0.0, f64::INFINITY);
pub const AREA_MEDIUM: (f64, f64) = (32.0 * 32.0, 96.0 * 96.0);
pub const AREA_LARGE: (f64, f64) = (96.0 * 96.0, f64::INFINITY);

pub fn thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OksApReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ap_m: f64,
    pub ap_l: f64,
    pub ar: f64,
    pub ar50: f64,
    pub ar75: f64,
    /// AP at each OKS threshold over the full area range.
    pub ap_per_threshold: Vec<f64>,
}

struct RankedDet {
    score: f64,
    seq: usize,
    matched: bool,
    ignored: bool,
}

/// Match one image at one threshold/area range. `gt_rank` orders unignored
/// ground truths first; detections take the best still-unmatched candidate.
fn match_image(
    oks_matrix: &[Vec<f64>],
    gt_ignored: &[bool],
    det_in_range: &[bool],
    threshold: f64,
) -> Vec<(Option<usize>, bool)> {
    let n_gt = gt_ignored.len();
    let mut order: Vec<usize> = (0..n_gt).collect();
    order.sort_by_key(|&g| gt_ignored[g]); // stable: unignored first
    let mut gt_taken = vec![false; n_gt];
    let mut out = Vec::with_capacity(oks_matrix.len());
    for (d, row) in oks_matrix.iter().enumerate() {
        let mut best = threshold - 1e-10;
        let mut m: Option<usize> = None;
        for &g in &order {
            if gt_taken[g] {
                continue;
            }
            if let Some(prev) = m {
                if !gt_ignored[prev] && gt_ignored[g] {
                    break;
                }
            }
            if row[g] > best {
                best = row[g];
                m = Some(g);
            }
        }
        match m {
            Some(g) => {
                gt_taken[g] = true;
                out.push((Some(g), gt_ignored[g]));
            }
            None => out.push((None, !det_in_range[d])),
        }
    }
    out
}

fn interpolated_ap_101(ranked: &[RankedDet], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return -1.0;
    }
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for det in ranked {
        if det.ignored {
            continue;
        }
        if det.matched {
            tp += 1;
        } else {
            fp += 1;
        }
        precisions.push(tp as f64 / (tp + fp) as f64);
        recalls.push(tp as f64 / n_gt as f64);
    }
    // monotone envelope from the right
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        if precisions[i] < precisions[i + 1] {
            precisions[i] = precisions[i + 1];
        }
    }
    let mut total = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let p = recalls
            .iter()
            .position(|&rec| rec >= r - 1e-12)
            .map_or(0.0, |idx| precisions[idx]);
        total += p;
    }
    total / 101.0
}

struct RangeEval {
    ap_per_t: Vec<f64>,
    ar_per_t: Vec<f64>,
}

fn evaluate_range(
    images: &[(Vec<&Prediction>, Vec<&Annotation>, Vec<Vec<f64>>)],
    range: (f64, f64),
    ts: &[f64],
) -> RangeEval {
    let mut ap_per_t = Vec::with_capacity(ts.len());
    let mut ar_per_t = Vec::with_capacity(ts.len());
    for &t in ts {
        let mut ranked: Vec<RankedDet> = Vec::new();
        let mut n_gt = 0usize;
        let mut seq = 0usize;
        for (dets, gts, oks_matrix) in images {
            let gt_ignored: Vec<bool> = gts
                .iter()
                .map(|g| g.labeled_count() == 0 || g.area < range.0 || g.area >= range.1)
                .collect();
            n_gt += gt_ignored.iter().filter(|&&ig| !ig).count();
            let det_in_range: Vec<bool> = dets
                .iter()
                .map(|d| {
                    let a = d.extent_area();
                    a >= range.0 && a < range.1
                })
                .collect();
            let matches = match_image(oks_matrix, &gt_ignored, &det_in_range, t);
            for (d, (m, ignored)) in matches.iter().enumerate() {
                ranked.push(RankedDet {
                    score: dets[d].score,
                    seq,
                    matched: m.is_some() && !ignored,
                    ignored: *ignored,
                });
                seq += 1;
            }
        }
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.seq.cmp(&b.seq)));
        ap_per_t.push(interpolated_ap_101(&ranked, n_gt));
        if n_gt == 0 {
            ar_per_t.push(-1.0);
        } else {
            let tp = ranked.iter().filter(|d| d.matched).count();
            ar_per_t.push(tp as f64 / n_gt as f64);
        }
    }
    RangeEval { ap_per_t, ar_per_t }
}

fn mean_defined(values: &[f64]) -> f64 {
    let defined: Vec<f64> = values.iter().cloned().filter(|&v| v >= 0.0).collect();
    if defined.is_empty() {
        -1.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

/// Full AP/AR evaluation of a prediction list against annotations.
pub fn ap_ar(predictions: &[Prediction], annotations: &[Annotation], sigmas: &[f64]) -> OksApReport {
    let ts = thresholds();
    // group per image in ascending image-id order (fixed reduction order)
    let mut image_ids: Vec<i64> = annotations.iter().map(|a| a.image_id).collect();
    image_ids.extend(predictions.iter().map(|p| p.image_id));
    image_ids.sort_unstable();
    image_ids.dedup();

    let images: Vec<(Vec<&Prediction>, Vec<&Annotation>, Vec<Vec<f64>>)> = image_ids
        .iter()
        .map(|&id| {
            let gts: Vec<&Annotation> =
                annotations.iter().filter(|a| a.image_id == id).collect();
            let mut dets: Vec<&Prediction> =
                predictions.iter().filter(|p| p.image_id == id).collect();
            dets.sort_by(|a, b| b.score.total_cmp(&a.score));
            dets.truncate(MAX_DETS);
            let matrix: Vec<Vec<f64>> = dets
                .iter()
                .map(|d| {
                    gts.iter()
                        .map(|g| oks(d, g, sigmas).unwrap_or(0.0))
                        .collect()
                })
                .collect();
            (dets, gts, matrix)
        })
        .collect();

    let all = evaluate_range(&images, AREA_ALL, &ts);
    let medium = evaluate_range(&images, AREA_MEDIUM, &ts);
    let large = evaluate_range(&images, AREA_LARGE, &ts);

    OksApReport {
        ap: mean_defined(&all.ap_per_t),
        ap50: all.ap_per_t[0],
        ap75: all.ap_per_t[5],
        ap_m: mean_defined(&medium.ap_per_t),
        ap_l: mean_defined(&large.ap_per_t),
        ar: mean_defined(&all.ar_per_t),
        ar50: all.ar_per_t[0],
        ar75: all.ar_per_t[5],
        ap_per_threshold: all.ap_per_t.clone(),
    }
}
