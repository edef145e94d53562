//! Training-data loading shared by the train and distill commands.

use std::path::Path;

use plainpose::error::{Error, Result};
use plainpose::eval::coco::load_gt;
use plainpose::heatmap::KeypointSet;
use plainpose::io;
use plainpose::schema::Schema;
use plainpose::tensor::Tensor;
use plainpose::train::synth::{synth_generate, SynthConfig};

use crate::fileconfig::DataSection;

pub struct LoadedData {
    pub dataset_id: String,
    pub train: Vec<(Tensor<f32>, KeypointSet)>,
    pub holdout: Vec<(Tensor<f32>, KeypointSet)>,
}

/// "synthetic" generates data in memory; anything else is a directory
/// produced by `plainpose synth` (annotations.json + images/*.vtpt).
pub fn load_data(section: &DataSection, model_input: (usize, usize)) -> Result<LoadedData> {
    let schema_name = section.schema.as_deref().unwrap_or("synthetic");
    let schema = Schema::resolve(schema_name)?;
    if section.source == "synthetic" {
        let hw = section.hw.map(|[h, w]| (h, w)).unwrap_or(model_input);
        let cfg = SynthConfig::for_schema(schema.clone(), hw);
        let train = synth_generate::<f32>(&cfg, section.n, section.seed)
            .into_iter()
            .map(|s| (s.image, s.kps))
            .collect();
        // a disjoint seed stream keeps the holdout independent of n
        let holdout = synth_generate::<f32>(&cfg, section.holdout, section.seed ^ 0x5eed_0ff5)
            .into_iter()
            .map(|s| (s.image, s.kps))
            .collect();
        return Ok(LoadedData {
            dataset_id: schema.name,
            train,
            holdout,
        });
    }
    let dir = Path::new(&section.source);
    let gt = load_gt(&dir.join("annotations.json"), &schema)?;
    let mut samples = Vec::with_capacity(gt.annotations.len());
    for ann in &gt.annotations {
        let image_rec = gt
            .images
            .iter()
            .find(|im| im.id == ann.image_id)
            .expect("validated by the parser");
        let file = image_rec.file_name.clone().ok_or_else(|| Error::Parse {
            path: dir.display().to_string(),
            detail: format!("image {} has no file_name", ann.image_id),
        })?;
        let image: Tensor<f32> = io::load_tensor(&dir.join(&file))?;
        samples.push((image, ann.to_keypoint_set(&schema.name)));
    }
    let holdout_len = section.holdout.min(samples.len().saturating_sub(1));
    let holdout = samples.split_off(samples.len() - holdout_len);
    Ok(LoadedData {
        dataset_id: schema.name,
        train: samples,
        holdout,
    })
}
