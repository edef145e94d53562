use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;

use plainpose::error::{Error, Result};
use plainpose::model::PoseModel;
use plainpose::train::freeze::FreezeMode;
use plainpose::train::{load_train_state, pck_at, save_train_state, train_loop, Dataset};

use super::data::load_data;
use crate::fileconfig::{load_file_config, resolve_model};

#[derive(Args)]
pub struct TrainArgs {
    /// Run configuration ([model], [train], optional [data] sections).
    #[arg(long)]
    pub config: PathBuf,
    /// Data source override: "synthetic" or a synth output directory.
    #[arg(long)]
    pub data: Option<String>,
    /// Freeze override: none | mhsa | ffn.
    #[arg(long)]
    pub freeze: Option<String>,
    /// Attention-mode override.
    #[arg(long)]
    pub attention: Option<String>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output prefix: writes <out>.ckpt, <out>.opt, <out>.state.json,
    /// <out>.log.jsonl, <out>.summary.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Resume from a previous output prefix.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let file = load_file_config(&args.config)?;
    let mut section = file.model.clone();
    if let Some(a) = &args.attention {
        section.attention = Some(a.clone());
    }
    let model_cfg = resolve_model(&section)?;
    let mut train_cfg = file.train.clone().ok_or_else(|| Error::InvalidConfig {
        detail: "config file needs a [train] section".into(),
    })?;
    if let Some(f) = &args.freeze {
        train_cfg.freeze = FreezeMode::parse(f)?;
    }
    if let Some(s) = args.seed {
        train_cfg.seed = s;
    }
    let mut data_section = file.data.clone().unwrap_or_default();
    if let Some(d) = &args.data {
        data_section.source = d.clone();
    }
    let loaded = load_data(&data_section, model_cfg.encoder.input_hw)?;

    let (mut model, resume_state) = match &args.resume {
        Some(prefix) => {
            let (params, state) = load_train_state::<f32>(prefix)?;
            (PoseModel::from_store(model_cfg, params)?, Some(state))
        }
        None => (PoseModel::<f32>::new(model_cfg, train_cfg.seed)?, None),
    };

    let datasets = vec![Dataset {
        id: loaded.dataset_id.clone(),
        samples: loaded.train,
    }];
    let mut log = BufWriter::new(File::create(args.out.with_extension("log.jsonl"))?);
    let (report, state) = train_loop(
        &mut model,
        &datasets,
        &train_cfg,
        resume_state,
        Some(&mut log),
    )?;
    drop(log);
    save_train_state(&args.out, &model.params, &state)?;

    let pck = if loaded.holdout.is_empty() {
        None
    } else {
        Some(pck_at(&model, &loaded.holdout, &loaded.dataset_id, 0.1)?)
    };
    let summary = serde_json::json!({
        "steps": report.steps,
        "final_loss": report.final_loss,
        "epoch_mean_loss": report.epoch_mean_loss,
        "holdout_pck_at_0.1": pck,
    });
    std::fs::write(
        args.out.with_extension("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    println!(
        "trained {} steps, final loss {:.6}{}",
        report.steps,
        report.final_loss,
        match pck {
            Some(p) => format!(", holdout PCK@0.1 {p:.4}"),
            None => String::new(),
        }
    );
    println!("checkpoint: {}", args.out.with_extension("ckpt").display());
    Ok(())
}
