use std::path::PathBuf;

use clap::Args;

use plainpose::config::parse_hw;
use plainpose::error::Result;
use plainpose::eval::coco::{Annotation, GtDataset, ImageRec};
use plainpose::io;
use plainpose::schema::Schema;
use plainpose::train::synth::{synth_generate, SynthConfig};

#[derive(Args)]
pub struct SynthArgs {
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    /// Image size HxW.
    #[arg(long, default_value = "64x48")]
    pub hw: String,
    #[arg(long, default_value = "synthetic")]
    pub schema: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (annotations.json + images/*.vtpt).
    #[arg(long)]
    pub out: PathBuf,
    /// Probability of dropping a joint to the unlabeled state.
    #[arg(long, default_value_t = 0.0)]
    pub occlusion: f64,
}

pub fn run(args: SynthArgs) -> Result<()> {
    let (h, w) = parse_hw(&args.hw)?;
    let schema = Schema::resolve(&args.schema)?;
    let mut cfg = SynthConfig::for_schema(schema, (h, w));
    cfg.occlusion_prob = args.occlusion;
    let samples = synth_generate::<f32>(&cfg, args.n, args.seed);

    std::fs::create_dir_all(args.out.join("images"))?;
    let mut images = Vec::with_capacity(args.n);
    let mut annotations = Vec::with_capacity(args.n);
    for (i, s) in samples.iter().enumerate() {
        let file = format!("images/im_{i:06}.vtpt");
        io::save_tensor(&args.out.join(&file), &s.image)?;
        images.push(ImageRec {
            id: i as i64,
            width: Some(w as u32),
            height: Some(h as u32),
            file_name: Some(file),
        });
        let keypoints: Vec<f64> = s
            .kps
            .points
            .iter()
            .flat_map(|p| [p.x, p.y, p.v as f64])
            .collect();
        let (bx, by, bw, bh) = s.kps.bbox;
        annotations.push(Annotation {
            id: i as i64,
            image_id: i as i64,
            keypoints,
            bbox: [bx, by, bw, bh],
            area: bw * bh,
            num_keypoints: Some(s.kps.points.iter().filter(|p| p.v > 0).count()),
            head_box: None,
        });
    }
    let gt = GtDataset { images, annotations };
    std::fs::write(
        args.out.join("annotations.json"),
        serde_json::to_string_pretty(&gt).expect("dataset serializes"),
    )?;
    println!(
        "wrote {} samples ({h}x{w}, schema {}) to {}",
        args.n,
        args.schema,
        args.out.display()
    );
    Ok(())
}
