use std::path::PathBuf;

use clap::Args;

use plainpose::distill::{
    init_token_projection, learn_token, train_student, DistillMode, LearnTokenConfig,
    StudentTrainConfig,
};
use plainpose::error::Result;
use plainpose::io;
use plainpose::model::PoseModel;
use plainpose::rng::Rng;
use plainpose::tensor::Tensor;

use super::data::load_data;
use crate::fileconfig::{load_file_config, resolve_model, DataSection};

#[derive(Args)]
pub struct DistillArgs {
    /// Teacher model config.
    #[arg(long)]
    pub teacher_config: PathBuf,
    /// Teacher checkpoint (.ckpt).
    #[arg(long)]
    pub teacher_ckpt: PathBuf,
    /// Student model config.
    #[arg(long)]
    pub student_config: PathBuf,
    /// td (token only) | tod (token + output distillation).
    #[arg(long, default_value = "td")]
    pub mode: String,
    /// Data source: "synthetic" or a synth output directory.
    #[arg(long, default_value = "synthetic")]
    pub data: String,
    #[arg(long, default_value_t = 150)]
    pub token_steps: usize,
    #[arg(long, default_value_t = 400)]
    pub student_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix: writes <out>.ckpt (student, with the token) and
    /// <out>.distill.json.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: DistillArgs) -> Result<()> {
    let mode = DistillMode::parse(&args.mode)?;
    let teacher_cfg = resolve_model(&load_file_config(&args.teacher_config)?.model)?;
    let student_file = load_file_config(&args.student_config)?;
    let student_cfg = resolve_model(&student_file.model)?;
    let dataset = teacher_cfg.datasets[0].clone();

    let params = io::load_checkpoint::<f32>(&args.teacher_ckpt)?;
    let mut teacher = PoseModel::from_store(teacher_cfg, params)?;
    for name in teacher.params.names() {
        teacher.params.set_trainable(&name, false)?;
    }

    let section = DataSection {
        source: args.data.clone(),
        seed: args.seed,
        schema: Some(dataset.clone()),
        ..Default::default()
    };
    let loaded = load_data(&section, teacher.config.encoder.input_hw)?;

    println!("learning knowledge token ({} steps)...", args.token_steps);
    let token = learn_token(
        &teacher,
        &dataset,
        &loaded.train,
        &LearnTokenConfig {
            steps: args.token_steps,
            seed: args.seed,
            ..Default::default()
        },
    )?;

    let mut student = PoseModel::<f32>::new(student_cfg, args.seed)?;
    let (c_t, c_s) = (
        teacher.config.encoder.embed_dim,
        student.config.encoder.embed_dim,
    );
    if c_t != c_s {
        init_token_projection(&mut student.params, c_t, c_s, &mut Rng::new(args.seed ^ 0xbeef))?;
    }

    println!("training student ({} steps, mode {})...", args.student_steps, args.mode);
    let report = train_student(
        &mut student,
        Some(&token),
        Some(&teacher),
        &dataset,
        &loaded.train,
        &loaded.holdout,
        &StudentTrainConfig {
            steps: args.student_steps,
            seed: args.seed,
            mode,
            ..Default::default()
        },
    )?;


    // the token rides along in the student checkpoint
    let token_tensor: Tensor<f32> = token.values.clone();
    student
        .params
        .insert_with("distill.token", token_tensor, false)?;
    io::save_checkpoint(&args.out.with_extension("ckpt"), &student.params)?;
    let summary = serde_json::json!({
        "mode": args.mode,
        "teacher_id": token.teacher_id,
        "token_steps": args.token_steps,
        "student_steps": args.student_steps,
        "final_train_loss": report.final_train_loss,
        "holdout_mse": report.holdout_mse,
    });
    std::fs::write(
        args.out.with_extension("distill.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    println!(
        "student final train loss {:.6}, holdout MSE {:.6}",
        report.final_train_loss, report.holdout_mse
    );
    println!("checkpoint: {}", args.out.with_extension("ckpt").display());
    Ok(())
}
