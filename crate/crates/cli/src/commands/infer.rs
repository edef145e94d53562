use std::path::PathBuf;

use clap::Args;

use plainpose::error::Result;
use plainpose::eval::coco::Prediction;
use plainpose::heatmap::decode_keypoints;
use plainpose::io;
use plainpose::model::PoseModel;
use plainpose::tensor::Tensor;

use crate::fileconfig::{load_file_config, resolve_model};

#[derive(Args)]
pub struct InferArgs {
    /// Model config (same file used for training).
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint (.ckpt) path.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Input image as a VTPT tensor [H, W, 3], f32.
    #[arg(long)]
    pub image: PathBuf,
    /// Dataset head to run; defaults to the first configured head.
    #[arg(long)]
    pub dataset: Option<String>,
    /// image_id recorded in the emitted predictions.
    #[arg(long, default_value_t = 0)]
    pub image_id: i64,
    /// Write predictions JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also dump the raw heatmap (VTPT + one PGM per channel) into this dir.
    #[arg(long)]
    pub dump_heatmaps: Option<PathBuf>,
}

pub fn run(args: InferArgs) -> Result<()> {
    let file = load_file_config(&args.config)?;
    let model_cfg = resolve_model(&file.model)?;
    let dataset = args
        .dataset
        .clone()
        .unwrap_or_else(|| model_cfg.datasets[0].clone());
    let params = io::load_checkpoint::<f32>(&args.ckpt)?;
    let model = PoseModel::from_store(model_cfg, params)?;
    let image: Tensor<f32> = io::load_tensor(&args.image)?;
    let heatmap = model.infer(&image, &dataset)?;
    let decoded = decode_keypoints(&heatmap)?;

    if let Some(dir) = &args.dump_heatmaps {
        std::fs::create_dir_all(dir)?;
        io::save_tensor(&dir.join("heatmap.vtpt"), &heatmap.values.cast::<f32>())?;
        let (h, w, k) = heatmap.dims();
        for ch in 0..k {
            let mut f = std::fs::File::create(dir.join(format!("ch{ch}.pgm")))?;
            io::write_pgm(&mut f, &heatmap.channel(ch), h, w)?;
        }
    }

    let keypoints: Vec<f64> = decoded.iter().flat_map(|p| [p.x, p.y, p.score]).collect();
    let score = decoded.iter().map(|p| p.score).sum::<f64>() / decoded.len().max(1) as f64;
    let predictions = vec![Prediction {
        image_id: args.image_id,
        keypoints,
        score,
    }];
    let text = serde_json::to_string_pretty(&predictions).expect("predictions serialize");
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}
