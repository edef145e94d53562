//! Knowledge transfer between models: output distillation and the learnable
//! knowledge token.
//!
//! The token is learned by freezing a trained teacher, prepending the token
//! to its visual tokens, and tuning only the token against the ground-truth
//! heatmaps. The frozen token is then fed to a student (through a learned
//! linear projection when the widths differ) alongside either the ground
//! truth alone (`td`) or the ground truth plus the teacher's output (`tod`).

use crate::encoder::ForwardOpts;
use crate::error::{Error, Result};
use crate::graph::Var;
use crate::heatmap::{encode_targets, KeypointSet};
use crate::model::PoseModel;
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::session::Session;
use crate::tensor::{Elem, Tensor};
use crate::train::adamw::{adamw_step, AdamParams, AdamState};

/// A learned knowledge token paired with the teacher that produced it.
#[derive(Debug, Clone)]
pub struct KnowledgeToken<E: Elem> {
    /// [1, C_teacher]
    pub values: Tensor<E>,
    pub learned: bool,
    pub teacher_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistillMode {
    /// Token distillation: MSE(S({t*; X}), K_gt).
    Td,
    /// Token + output distillation: MSE(S, K_t) + MSE(S, K_gt).
    Tod,
}

impl DistillMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "td" => Ok(DistillMode::Td),
            "tod" => Ok(DistillMode::Tod),
            other => Err(Error::InvalidConfig {
                detail: format!("unknown distillation mode: {other}"),
            }),
        }
    }
}

/// Output distillation loss: MSE between student and teacher heatmaps.
pub fn output_distill_loss<E: Elem>(sess: &mut Session<E>, k_s: Var, k_t: Var) -> Result<Var> {
    if sess.graph.shape(k_s) != sess.graph.shape(k_t) {
        return Err(Error::ShapeMismatch {
            op: "output_distill_loss",
            expected: format!("{:?}", sess.graph.shape(k_s)),
            got: format!("{:?}", sess.graph.shape(k_t)),
        });
    }
    sess.graph.mse(k_s, k_t)
}

/// Plain-data MSE, used by tests and reporting.
pub fn mse_value(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "mse_value",
            expected: format!("{:?}", a.shape()),
            got: format!("{:?}", b.shape()),
        });
    }
    let n = a.numel() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

#[derive(Debug, Clone)]
pub struct LearnTokenConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Target Gaussian radius, matching the teacher's training.
    pub sigma: f64,
    /// Diagnostic switch: when false the teacher's attention cannot see the
    /// token, so the loss is independent of it.
    pub token_visible: bool,
}

impl Default for LearnTokenConfig {
    fn default() -> Self {
        LearnTokenConfig {
            steps: 100,
            batch_size: 4,
            lr: 1e-2,
            seed: 0,
            sigma: 2.0,
            token_visible: true,
        }
    }
}

fn plain_heatmap_mse<E: Elem>(
    sess: &mut Session<E>,
    pred: Var,
    kps: &KeypointSet,
    stride: usize,
    sigma: f64,
) -> Result<Var> {
    let shape = sess.graph.shape(pred).to_vec();
    let (h, w, k) = (shape[0], shape[1], shape[2]);
    let (target, _) = encode_targets(kps, (h, w), stride, sigma)?;
    let tvals: Vec<E> = target.values.data().iter().map(|&v| E::from_f64(v)).collect();
    let target = sess.graph.constant_from(&[h, w, k], tvals)?;
    sess.graph.mse(pred, target)
}

/// Learn a knowledge token on a frozen teacher: only the token receives
/// updates, and the best-loss token over the run is returned. Weight decay
/// is zero so a zero-gradient token stays exactly at its initialization.
pub fn learn_token<E: Elem>(
    teacher: &PoseModel<E>,
    dataset: &str,
    data: &[(Tensor<E>, KeypointSet)],
    cfg: &LearnTokenConfig,
) -> Result<KnowledgeToken<E>> {
    for (name, _, trainable) in teacher.params.iter() {
        if trainable {
            return Err(Error::TeacherNotFrozen { name: name.into() });
        }
    }
    if data.is_empty() {
        return Err(Error::EmptyInput { op: "learn_token" });
    }
    let c = teacher.config.encoder.embed_dim;
    let mut rng = Rng::new(cfg.seed);
    let mut token_store: ParamStore<E> = ParamStore::new();
    token_store.insert(
        "distill.token",
        Tensor::from_fn(&[1, c], |_| E::from_f64(rng.normal(0.0, 0.02))),
    )?;
    let mut adam = AdamState::new();
    let hp = AdamParams {
        weight_decay: 0.0,
        ..Default::default()
    };
    let stride = teacher.heatmap_stride();
    let mut best: Option<(f64, Tensor<E>)> = None;
    for step in 0..cfg.steps {
        let mut sess = Session::new();
        let token = sess.param(&token_store, "distill.token")?;
        let mut total: Option<Var> = None;
        for i in 0..cfg.batch_size {
            let (image, kps) = &data[(step * cfg.batch_size + i) % data.len()];
            let mut opts = ForwardOpts {
                extra_tokens: Some(token),
                extra_kv_visible: cfg.token_visible,
                ..Default::default()
            };
            let fwd = teacher.forward_on(&mut sess, image, dataset, &mut opts)?;
            let loss = plain_heatmap_mse(&mut sess, fwd.heatmap, kps, stride, cfg.sigma)?;
            total = Some(match total {
                Some(t) => sess.graph.add(t, loss)?,
                None => loss,
            });
        }
        let loss = sess.graph.scale(total.expect("batch nonempty"), 1.0 / cfg.batch_size as f64)?;
        let value = sess.graph.scalar_value(loss);
        if best.as_ref().map_or(true, |(b, _)| value < *b) {
            best = Some((value, token_store.get("distill.token")?.clone()));
        }
        sess.backward(loss, &mut token_store)?;
        adamw_step(&mut token_store, &mut adam, |_| cfg.lr, &hp)?;
        token_store.clear_grads();
    }
    // the final state may beat every pre-step snapshot; evaluate it once
    let final_loss = {
        let mut sess = Session::new();
        let token = sess.param(&token_store, "distill.token")?;
        let (image, kps) = &data[0];
        let mut opts = ForwardOpts {
            extra_tokens: Some(token),
            extra_kv_visible: cfg.token_visible,
            ..Default::default()
        };
        let fwd = teacher.forward_on(&mut sess, image, dataset, &mut opts)?;
        let loss = plain_heatmap_mse(&mut sess, fwd.heatmap, kps, stride, cfg.sigma)?;
        sess.graph.scalar_value(loss)
    };
    let (_, values) = match best {
        Some((b, snap)) if b <= final_loss => (b, snap),
        _ => (final_loss, token_store.get("distill.token")?.clone()),
    };
    Ok(KnowledgeToken {
        values,
        learned: true,
        teacher_id: format!("{:016x}", teacher.params.fingerprint()),
    })
}

/// Learned projection of the token into the student width; required whenever
/// the teacher and student dims differ.
pub fn init_token_projection<E: Elem>(
    store: &mut ParamStore<E>,
    c_teacher: usize,
    c_student: usize,
    rng: &mut Rng,
) -> Result<()> {
    let std = 1.0 / (c_teacher as f64).sqrt();
    store.insert(
        "distill.token_proj.w",
        Tensor::from_fn(&[c_teacher, c_student], |_| E::from_f64(rng.normal(0.0, std))),
    )?;
    Ok(())
}

/// The frozen token as the student sees it: constant, then projected when a
/// projection parameter is present (the projection itself is trainable).
pub fn student_token<E: Elem>(
    sess: &mut Session<E>,
    student: &PoseModel<E>,
    token: &KnowledgeToken<E>,
) -> Result<Var> {
    let t = sess.constant(&token.values)?;
    let c_student = student.config.encoder.embed_dim;
    if student.params.contains("distill.token_proj.w") {
        let w = sess.param(&student.params, "distill.token_proj.w")?;
        sess.graph.matmul(t, w)
    } else if token.values.shape()[1] == c_student {
        Ok(t)
    } else {
        Err(Error::ShapeMismatch {
            op: "student_token",
            expected: format!("token width {c_student} or a distill.token_proj.w"),
            got: format!("{}", token.values.shape()[1]),
        })
    }
}

/// Student objective for one sample under the chosen mode. `k_t` is the
/// teacher's prediction for this image with the token attached, required for
/// `Tod`.
#[allow(clippy::too_many_arguments)]
pub fn student_losses<E: Elem>(
    sess: &mut Session<E>,
    student: &PoseModel<E>,
    token: &KnowledgeToken<E>,
    image: &Tensor<E>,
    dataset: &str,
    kps: &KeypointSet,
    k_t: Option<&Tensor<E>>,
    mode: DistillMode,
    sigma: f64,
    train: bool,
    rng: Option<&mut Rng>,
) -> Result<Var> {
    let tok = student_token(sess, student, token)?;
    let mut opts = ForwardOpts {
        train,
        rng,
        extra_tokens: Some(tok),
        extra_kv_visible: true,
    };
    let fwd = student.forward_on(sess, image, dataset, &mut opts)?;
    let stride = student.heatmap_stride();
    let gt_term = plain_heatmap_mse(sess, fwd.heatmap, kps, stride, sigma)?;
    match mode {
        DistillMode::Td => Ok(gt_term),
        DistillMode::Tod => {
            let k_t = k_t.ok_or(Error::InvalidConfig {
                detail: "tod mode needs the teacher heatmap".into(),
            })?;
            let k_t = sess.constant(k_t)?;
            let od_term = output_distill_loss(sess, fwd.heatmap, k_t)?;
            sess.graph.add(od_term, gt_term)
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudentTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub sigma: f64,
    pub mode: DistillMode,
}

impl Default for StudentTrainConfig {
    fn default() -> Self {
        StudentTrainConfig {
            steps: 300,
            batch_size: 4,
            lr: 2e-3,
            weight_decay: 0.01,
            seed: 0,
            sigma: 2.0,
            mode: DistillMode::Td,
        }
    }
}

/// Mean ground-truth heatmap MSE over a held-out set, with the token
/// attached when present.
pub fn held_out_loss<E: Elem>(
    student: &PoseModel<E>,
    token: Option<&KnowledgeToken<E>>,
    dataset: &str,
    data: &[(Tensor<E>, KeypointSet)],
    sigma: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for (image, kps) in data {
        let mut sess = Session::new();
        let extra = match token {
            Some(t) => Some(student_token(&mut sess, student, t)?),
            None => None,
        };
        let mut opts = ForwardOpts {
            extra_tokens: extra,
            ..Default::default()
        };
        let fwd = student.forward_on(&mut sess, image, dataset, &mut opts)?;
        let loss = plain_heatmap_mse(&mut sess, fwd.heatmap, kps, student.heatmap_stride(), sigma)?;
        total += sess.graph.scalar_value(loss);
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone)]
pub struct StudentRunReport {
    /// Exact train-set ground-truth MSE after the last step.
    pub final_train_loss: f64,
    /// Ground-truth heatmap MSE on the held-out set after training.
    pub holdout_mse: f64,
}

/// Supervised student training, with or without a knowledge token. For
/// `Tod` the teacher's token-conditioned predictions are precomputed per
/// training sample.
pub fn train_student<E: Elem>(
    student: &mut PoseModel<E>,
    token: Option<&KnowledgeToken<E>>,
    teacher: Option<&PoseModel<E>>,
    dataset: &str,
    train_data: &[(Tensor<E>, KeypointSet)],
    heldout: &[(Tensor<E>, KeypointSet)],
    cfg: &StudentTrainConfig,
) -> Result<StudentRunReport> {
    if train_data.is_empty() || heldout.is_empty() {
        return Err(Error::EmptyInput { op: "train_student" });
    }
    let k_t: Option<Vec<Tensor<E>>> = match (cfg.mode, token, teacher) {
        (DistillMode::Tod, Some(tok), Some(t)) => Some(
            train_data
                .iter()
                .map(|(image, _)| teacher_targets(t, tok, image, dataset))
                .collect::<Result<_>>()?,
        ),
        (DistillMode::Tod, Some(_), None) => {
            return Err(Error::InvalidConfig {
                detail: "tod mode needs a teacher".into(),
            });
        }
        _ => None,
    };
    let mut adam = AdamState::new();
    let hp = AdamParams {
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };
    let mut order_rng = Rng::new(cfg.seed).fork(17);
    let stride = student.heatmap_stride();
    for step in 0..cfg.steps {
        let mut sess = Session::new();
        let mut total: Option<Var> = None;
        for _ in 0..cfg.batch_size {
            let idx = order_rng.below(train_data.len());
            let (image, kps) = &train_data[idx];
            let loss = match token {
                Some(tok) => student_losses(
                    &mut sess,
                    student,
                    tok,
                    image,
                    dataset,
                    kps,
                    k_t.as_ref().map(|v| &v[idx]),
                    cfg.mode,
                    cfg.sigma,
                    true,
                    None,
                )?,
                None => {
                    let mut opts = ForwardOpts {
                        train: true,
                        ..Default::default()
                    };
                    let fwd = student.forward_on(&mut sess, image, dataset, &mut opts)?;
                    plain_heatmap_mse(&mut sess, fwd.heatmap, kps, stride, cfg.sigma)?
                }
            };
            total = Some(match total {
                Some(t) => sess.graph.add(t, loss)?,
                None => loss,
            });
        }
        let loss = sess.graph.scale(total.expect("batch nonempty"), 1.0 / cfg.batch_size as f64)?;
        let value = sess.graph.scalar_value(loss);
        if !value.is_finite() {
            return Err(Error::NanLoss { step });
        }
        sess.backward(loss, &mut student.params)?;
        adamw_step(&mut student.params, &mut adam, |_| cfg.lr, &hp)?;
        student.params.clear_grads();
    }
    Ok(StudentRunReport {
        final_train_loss: held_out_loss(student, token, dataset, train_data, cfg.sigma)?,
        holdout_mse: held_out_loss(student, token, dataset, heldout, cfg.sigma)?,
    })
}

/// Teacher prediction with the token attached: the distillation target K_t.
pub fn teacher_targets<E: Elem>(
    teacher: &PoseModel<E>,
    token: &KnowledgeToken<E>,
    image: &Tensor<E>,
    dataset: &str,
) -> Result<Tensor<E>> {
    let mut sess = Session::new();
    let t = sess.constant(&token.values)?;
    let mut opts = ForwardOpts {
        extra_tokens: Some(t),
        ..Default::default()
    };
    let fwd = teacher.forward_on(&mut sess, image, dataset, &mut opts)?;
    Ok(sess.graph.value(fwd.heatmap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{preset, ModelConfig};
    use crate::train::synth::{synth_generate, SynthConfig};
    use crate::schema::Schema;

    fn toy_data(n: usize, seed: u64) -> Vec<(Tensor<f64>, KeypointSet)> {
        let cfg = SynthConfig::for_schema(Schema::by_name("synthetic").unwrap(), (64, 48));
        synth_generate::<f64>(&cfg, n, seed)
            .into_iter()
            .map(|s| (s.image, s.kps))
            .collect()
    }

    fn frozen_teacher(seed: u64) -> PoseModel<f64> {
        let mut config: ModelConfig = preset("toy-s").unwrap();
        config.encoder.depth = 1;
        let mut teacher = PoseModel::<f64>::new(config, seed).unwrap();
        for name in teacher.params.names() {
            teacher.params.set_trainable(&name, false).unwrap();
        }
        teacher
    }

    #[test]
    fn output_distill_loss_identities() {
        let mut sess = Session::<f64>::new();
        let mut rng = Rng::new(1);
        let a_data = Tensor::from_fn(&[4, 3, 2], |_| rng.normal(0.0, 1.0));
        let a = sess.constant(&a_data).unwrap();
        let same = output_distill_loss(&mut sess, a, a).unwrap();
        assert_eq!(sess.graph.scalar_value(same), 0.0);

        let b_data = Tensor::from_fn(&[4, 3, 2], |i| a_data.data()[i] + 1.0);
        let b = sess.constant(&b_data).unwrap();
        let one = output_distill_loss(&mut sess, a, b).unwrap();
        assert!((sess.graph.scalar_value(one) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mse_value_matches_brute_force() {
        let mut rng = Rng::new(2);
        let a = Tensor::from_fn(&[5, 7], |_| rng.normal(0.0, 1.0));
        let b = Tensor::from_fn(&[5, 7], |_| rng.normal(0.0, 1.0));
        let mut acc = 0.0;
        for i in 0..35 {
            acc += (a.data()[i] - b.data()[i]).powi(2);
        }
        assert!((mse_value(&a, &b).unwrap() - acc / 35.0).abs() < 1e-12);
        assert!(mse_value(&a, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn channel_permutation_leaves_losses_unchanged() {
        let mut rng = Rng::new(3);
        let k = 5;
        let a = Tensor::from_fn(&[6, 4, k], |_| rng.normal(0.0, 1.0));
        let b = Tensor::from_fn(&[6, 4, k], |_| rng.normal(0.0, 1.0));
        let perm = [3, 0, 4, 1, 2];
        let shuffle = |t: &Tensor<f64>| {
            Tensor::from_fn(&[6, 4, k], |i| {
                let (cell, ch) = (i / k, i % k);
                t.data()[cell * k + perm[ch]]
            })
        };
        let base = mse_value(&a, &b).unwrap();
        let permuted = mse_value(&shuffle(&a), &shuffle(&b)).unwrap();
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn learn_token_refuses_unfrozen_teacher() {
        let mut config: ModelConfig = preset("toy-s").unwrap();
        config.encoder.depth = 1;
        let teacher = PoseModel::<f64>::new(config, 1).unwrap();
        let data = toy_data(2, 5);
        let err = learn_token(&teacher, "synthetic", &data, &LearnTokenConfig::default());
        assert!(matches!(err, Err(Error::TeacherNotFrozen { .. })));
    }

    /// Invariance control: with the token invisible to attention, the loss
    /// cannot depend on it, so it stays exactly at its initialization and
    /// the teacher is bitwise untouched.
    #[test]
    fn invisible_token_stays_at_initialization() {
        let teacher = frozen_teacher(7);
        let fp_before = teacher.params.fingerprint();
        let data = toy_data(4, 6);
        let cfg = LearnTokenConfig {
            steps: 5,
            token_visible: false,
            ..Default::default()
        };
        let token = learn_token(&teacher, "synthetic", &data, &cfg).unwrap();
        // reproduce the initialization draw
        let mut rng = Rng::new(cfg.seed);
        let init = Tensor::<f64>::from_fn(&[1, 16], |_| rng.normal(0.0, 0.02));
        assert_eq!(token.values.data(), init.data());
        assert_eq!(teacher.params.fingerprint(), fp_before);
    }

    /// Optimization sanity: with a visible token the loss is strictly
    /// non-increasing over the best-so-far trajectory, and the teacher stays
    /// bitwise frozen.
    #[test]
    fn token_learning_improves_the_loss_and_freezes_teacher() {
        let teacher = frozen_teacher(11);
        let fp_before = teacher.params.fingerprint();
        let data = toy_data(4, 8);
        let eval_loss = |token: &KnowledgeToken<f64>| {
            let mut sess = Session::new();
            let t = sess.constant(&token.values).unwrap();
            let mut opts = ForwardOpts { extra_tokens: Some(t), ..Default::default() };
            let fwd = teacher
                .forward_on(&mut sess, &data[0].0, "synthetic", &mut opts)
                .unwrap();
            let loss =
                plain_heatmap_mse(&mut sess, fwd.heatmap, &data[0].1, 4, 2.0).unwrap();
            sess.graph.scalar_value(loss)
        };
        let zero_step = learn_token(
            &teacher,
            "synthetic",
            &data[..1],
            &LearnTokenConfig { steps: 1, batch_size: 1, ..Default::default() },
        )
        .unwrap();
        let trained = learn_token(
            &teacher,
            "synthetic",
            &data[..1],
            &LearnTokenConfig { steps: 60, batch_size: 1, ..Default::default() },
        )
        .unwrap();
        assert!(eval_loss(&trained) <= eval_loss(&zero_step) + 1e-12);
        assert_eq!(teacher.params.fingerprint(), fp_before);
        assert!(trained.learned);
    }

    /// Identity student: same architecture and parameters as the teacher,
    /// identity projection. In tod mode the teacher term vanishes, so
    /// tod == td; and when K_t == K_gt targets coincide, tod == 2 * td.
    #[test]
    fn student_loss_algebra() {
        let teacher = frozen_teacher(13);
        let data = toy_data(2, 9);
        let token = learn_token(
            &teacher,
            "synthetic",
            &data,
            &LearnTokenConfig { steps: 3, ..Default::default() },
        )
        .unwrap();

        // student IS the teacher (same params, widths equal, no projection)
        let student = frozen_teacher(13);
        let (image, kps) = &data[0];
        let k_t = teacher_targets(&teacher, &token, image, "synthetic").unwrap();

        let run = |mode: DistillMode| {
            let mut sess = Session::new();
            let loss = student_losses(
                &mut sess, &student, &token, image, "synthetic", kps,
                Some(&k_t), mode, 2.0, false, None,
            )
            .unwrap();
            sess.graph.scalar_value(loss)
        };
        let td = run(DistillMode::Td);
        let tod = run(DistillMode::Tod);
        // S = T and K_t = T output, so MSE(S, K_t) = 0 and tod = td
        assert!((tod - td).abs() < 1e-9, "tod {tod} td {td}");

        // K_t replaced by the exact GT targets: tod = 2 * td
        let shape = k_t.shape().to_vec();
        let (h, w, _) = (shape[0], shape[1], shape[2]);
        let (gt_hm, _) = encode_targets(kps, (h, w), 4, 2.0).unwrap();
        let gt_as_kt = gt_hm.values.clone();
        let mut sess = Session::new();
        let loss = student_losses(
            &mut sess, &student, &token, image, "synthetic", kps,
            Some(&gt_as_kt), DistillMode::Tod, 2.0, false, None,
        )
        .unwrap();
        let tod_gt = sess.graph.scalar_value(loss);
        assert!((tod_gt - 2.0 * td).abs() < 1e-9, "{tod_gt} vs {}", 2.0 * td);

        // tod >= td for any K_t, equality only when the student matches it
        let mut rng = Rng::new(99);
        let random_kt = Tensor::from_fn(&shape, |_| rng.normal(0.0, 0.3));
        let mut sess = Session::new();
        let loss = student_losses(
            &mut sess, &student, &token, image, "synthetic", kps,
            Some(&random_kt), DistillMode::Tod, 2.0, false, None,
        )
        .unwrap();
        let tod_rand = sess.graph.scalar_value(loss);
        assert!(tod_rand > td, "tod {tod_rand} should exceed td {td}");
    }

    #[test]
    fn width_mismatch_requires_a_projection() {
        let teacher = frozen_teacher(1);
        let data = toy_data(1, 2);
        let token = learn_token(
            &teacher,
            "synthetic",
            &data,
            &LearnTokenConfig { steps: 1, ..Default::default() },
        )
        .unwrap();
        // student with a different width
        let mut config: ModelConfig = preset("toy-s").unwrap();
        config.encoder.depth = 1;
        config.encoder.embed_dim = 8;
        config.encoder.num_heads = 2;
        let mut student = PoseModel::<f64>::new(config.clone(), 3).unwrap();
        let mut sess = Session::new();
        assert!(student_token(&mut sess, &student, &token).is_err());
        init_token_projection(&mut student.params, 16, 8, &mut Rng::new(4)).unwrap();
        let mut sess = Session::new();
        let tok = student_token(&mut sess, &student, &token).unwrap();
        assert_eq!(sess.graph.shape(tok), &[1, 8]);
    }
}
