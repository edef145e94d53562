//! Evaluation: COCO-keypoint ingestion, OKS-based AP/AR, and PCKh.

pub mod ap;
pub mod coco;
pub mod oks;
pub mod pckh;

pub use ap::{ap_ar, OksApReport};
pub use coco::{Annotation, GtDataset, Prediction};
pub use oks::oks;
pub use pckh::{pckh, PckhReport};
