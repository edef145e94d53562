//! Training: heatmap-MSE supervision with AdamW, layer-wise lr decay, step
//! schedule, freeze masks, deterministic resume, and PCK evaluation.

pub mod adamw;
pub mod freeze;
pub mod mim;
pub mod sampler;
pub mod schedule;
pub mod synth;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::apply_stat_updates;
use crate::encoder::ForwardOpts;
use crate::error::{Error, Result};
use crate::graph::Var;
use crate::heatmap::{decode_keypoints, encode_targets, KeypointSet, V_UNLABELED};
use crate::io;
use crate::model::PoseModel;
use crate::params::{classify, ParamStore};
use crate::rng::Rng;
use crate::session::Session;
use crate::tensor::{Elem, Tensor};

use adamw::{adamw_step, AdamParams, AdamState};
use freeze::{apply_freeze, FreezeMode};
use sampler::MultiDatasetSampler;
use schedule::{layer_lr, step_multiplier};

fn default_sigma() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub weight_decay: f64,
    /// Layer-wise lr decay factor, in (0, 1].
    pub layer_decay: f64,
    pub epochs: usize,
    /// Epochs at which the lr drops by 10.
    #[serde(default)]
    pub decay_epochs: Vec<usize>,
    pub batch_size: usize,
    /// Optimizer steps per epoch; defaults to dataset size / batch size.
    #[serde(default)]
    pub steps_per_epoch: Option<usize>,
    #[serde(default = "default_freeze")]
    pub freeze: FreezeMode,
    pub seed: u64,
    /// Gaussian target radius in heatmap cells.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_freeze() -> FreezeMode {
    FreezeMode::None
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: String| Err(Error::InvalidConfig { detail });
        if !(0.0 < self.layer_decay && self.layer_decay <= 1.0) {
            return fail(format!("layer_decay {} outside (0, 1]", self.layer_decay));
        }
        if !self.decay_epochs.windows(2).all(|w| w[0] < w[1]) {
            return fail("decay_epochs must be strictly increasing".into());
        }
        if self.decay_epochs.iter().any(|&m| m >= self.epochs) {
            return fail("decay_epochs must be below epochs".into());
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return fail("batch_size and epochs must be positive".into());
        }
        if self.sigma <= 0.0 {
            return fail(format!("sigma {} must be positive", self.sigma));
        }
        Ok(())
    }
}

/// In-memory training dataset: one entry per registered head.
pub struct Dataset<E: Elem> {
    pub id: String,
    pub samples: Vec<(Tensor<E>, KeypointSet)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    /// Step-schedule multiplier; per-parameter lr is
    /// layer_lr(base_lr, layer_decay, slot, depth) * lr_mult.
    pub lr_mult: f64,
    pub base_lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub steps: usize,
    pub final_loss: f64,
    pub epoch_mean_loss: Vec<f64>,
}

/// Everything beyond the parameters needed to continue a run bit-for-bit.
pub struct TrainState<E: Elem> {
    pub adam: AdamState<E>,
    pub sampler_rng: Rng,
    pub droppath_rng: Rng,
    pub epoch: usize,
    pub global_step: usize,
}

impl<E: Elem> TrainState<E> {
    pub fn fresh(cfg: &TrainConfig) -> Self {
        let root = Rng::new(cfg.seed);
        TrainState {
            adam: AdamState::new(),
            sampler_rng: root.fork(1),
            droppath_rng: root.fork(2),
            epoch: 0,
            global_step: 0,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    epoch: usize,
    global_step: usize,
    sampler_rng: u64,
    droppath_rng: u64,
}

/// Write `<prefix>.ckpt` (parameters), `<prefix>.opt` (optimizer moments)
/// and `<prefix>.state.json` (counters and rng states).
pub fn save_train_state<E: Elem>(
    prefix: &Path,
    params: &ParamStore<E>,
    state: &TrainState<E>,
) -> Result<()> {
    io::save_checkpoint(&prefix.with_extension("ckpt"), params)?;
    io::save_checkpoint(&prefix.with_extension("opt"), &state.adam.to_store(params)?)?;
    let json = serde_json::to_string_pretty(&StateJson {
        epoch: state.epoch,
        global_step: state.global_step,
        sampler_rng: state.sampler_rng.state(),
        droppath_rng: state.droppath_rng.state(),
    })
    .expect("state serializes");
    std::fs::write(prefix.with_extension("state.json"), json)?;
    Ok(())
}

pub fn load_train_state<E: Elem>(prefix: &Path) -> Result<(ParamStore<E>, TrainState<E>)> {
    let params = io::load_checkpoint(&prefix.with_extension("ckpt"))?;
    let opt = io::load_checkpoint(&prefix.with_extension("opt"))?;
    let text = std::fs::read_to_string(prefix.with_extension("state.json"))?;
    let json: StateJson = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: prefix.display().to_string(),
        detail: e.to_string(),
    })?;
    Ok((
        params,
        TrainState {
            adam: AdamState::from_store(&opt)?,
            sampler_rng: Rng::restore(json.sampler_rng),
            droppath_rng: Rng::restore(json.droppath_rng),
            epoch: json.epoch,
            global_step: json.global_step,
        },
    ))
}

/// Weighted heatmap MSE for one sample: per-channel weights silence
/// unlabeled joints.
fn sample_loss<E: Elem>(
    sess: &mut Session<E>,
    pred: Var,
    kps: &KeypointSet,
    stride: usize,
    sigma: f64,
) -> Result<Var> {
    let shape = sess.graph.shape(pred).to_vec();
    let (h, w, k) = (shape[0], shape[1], shape[2]);
    let (target, weights) = encode_targets(kps, (h, w), stride, sigma)?;
    let tvals: Vec<E> = target.values.data().iter().map(|&v| E::from_f64(v)).collect();
    let target = sess.graph.constant_from(&[h, w, k], tvals)?;
    let wvals: Vec<E> = (0..h * w * k)
        .map(|i| E::from_f64(weights[i % k]))
        .collect();
    let weight = sess.graph.constant_from(&[h, w, k], wvals)?;
    let diff = sess.graph.sub(pred, target)?;
    let sq = sess.graph.mul(diff, diff)?;
    let weighted = sess.graph.mul(sq, weight)?;
    let total = sess.graph.sum_all(weighted)?;
    sess.graph.scale(total, 1.0 / (h * w * k) as f64)
}

/// One optimizer step over a drawn batch. Returns the batch loss.
fn train_step<E: Elem>(
    model: &mut PoseModel<E>,
    data: &[Dataset<E>],
    batch: &[(usize, usize)],
    cfg: &TrainConfig,
    state: &mut TrainState<E>,
    hp: &AdamParams,
    lr_mult: f64,
) -> Result<f64> {
    let mut sess = Session::new();
    let stride = model.heatmap_stride();
    let mut total: Option<Var> = None;
    let mut updates = Vec::new();
    for &(ds, item) in batch {
        let (image, kps) = &data[ds].samples[item];
        let mut opts = ForwardOpts {
            train: true,
            rng: Some(&mut state.droppath_rng),
            ..Default::default()
        };
        let fwd = model.forward_on(&mut sess, image, &data[ds].id, &mut opts)?;
        updates.extend(fwd.stat_updates);
        let loss = sample_loss(&mut sess, fwd.heatmap, kps, stride, cfg.sigma)?;
        total = Some(match total {
            Some(t) => sess.graph.add(t, loss)?,
            None => loss,
        });
    }
    let total = total.ok_or(Error::EmptyInput { op: "train_step" })?;
    let loss = sess.graph.scale(total, 1.0 / batch.len() as f64)?;
    let loss_value = sess.graph.scalar_value(loss);
    if !loss_value.is_finite() {
        return Err(Error::NanLoss { step: state.global_step });
    }
    sess.backward(loss, &mut model.params)?;
    let depth = model.config.encoder.depth;
    let base = cfg.base_lr;
    let decay = cfg.layer_decay;
    adamw_step(
        &mut model.params,
        &mut state.adam,
        |name| {
            let slot = classify(name).map(|l| l.slot).unwrap_or(crate::params::LayerSlot::Head);
            layer_lr(base, decay, slot, depth) * lr_mult
        },
        hp,
    )?;
    apply_stat_updates(&mut model.params, &updates)?;
    model.params.clear_grads();
    Ok(loss_value)
}

/// Run (or continue) the full schedule. Deterministic for a fixed seed:
/// identical code plus identical state produces identical checkpoints.
pub fn train_loop<E: Elem>(
    model: &mut PoseModel<E>,
    data: &[Dataset<E>],
    cfg: &TrainConfig,
    resume: Option<TrainState<E>>,
    mut log: Option<&mut dyn Write>,
) -> Result<(TrainReport, TrainState<E>)> {
    cfg.validate()?;
    for d in data {
        model.registry.get(&d.id)?;
        if d.samples.is_empty() {
            return Err(Error::EmptyInput { op: "train_loop" });
        }
    }
    apply_freeze(&mut model.params, cfg.freeze)?;
    let sizes: Vec<usize> = data.iter().map(|d| d.samples.len()).collect();
    let sampler = MultiDatasetSampler::new(&sizes)?;
    let steps_per_epoch = cfg
        .steps_per_epoch
        .unwrap_or_else(|| (sizes.iter().sum::<usize>() / cfg.batch_size).max(1));
    let hp = AdamParams {
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };
    let mut state = resume.unwrap_or_else(|| TrainState::fresh(cfg));
    let mut report = TrainReport {
        steps: 0,
        final_loss: f64::NAN,
        epoch_mean_loss: Vec::new(),
    };
    for epoch in state.epoch..cfg.epochs {
        state.epoch = epoch;
        let lr_mult = step_multiplier(epoch, &cfg.decay_epochs);
        let mut epoch_loss = 0.0;
        for _ in 0..steps_per_epoch {
            let batch = sampler.batch(cfg.batch_size, &mut state.sampler_rng);
            let loss = train_step(model, data, &batch, cfg, &mut state, &hp, lr_mult)?;
            state.global_step += 1;
            report.steps += 1;
            report.final_loss = loss;
            epoch_loss += loss;
            if let Some(w) = log.as_deref_mut() {
                let record = LogRecord {
                    epoch,
                    step: state.global_step,
                    loss,
                    lr_mult,
                    base_lr: cfg.base_lr,
                };
                writeln!(w, "{}", serde_json::to_string(&record).expect("record serializes"))?;
            }
        }
        report.epoch_mean_loss.push(epoch_loss / steps_per_epoch as f64);
    }
    state.epoch = cfg.epochs;
    Ok((report, state))
}

/// Fraction of labeled joints whose decoded position lands within
/// `alpha * max(bbox_w, bbox_h)` of the annotation.
pub fn pck_at<E: Elem>(
    model: &PoseModel<E>,
    samples: &[(Tensor<E>, KeypointSet)],
    dataset: &str,
    alpha: f64,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut labeled = 0usize;
    for (image, kps) in samples {
        let hm = model.infer(image, dataset)?;
        let decoded = decode_keypoints(&hm)?;
        let tol = alpha * kps.bbox.2.max(kps.bbox.3);
        for (p, gt) in decoded.iter().zip(&kps.points) {
            if gt.v == V_UNLABELED {
                continue;
            }
            labeled += 1;
            let err = ((p.x - gt.x).powi(2) + (p.y - gt.y).powi(2)).sqrt();
            if err <= tol {
                correct += 1;
            }
        }
    }
    if labeled == 0 {
        return Err(Error::EmptyInput { op: "pck_at" });
    }
    Ok(correct as f64 / labeled as f64)
}
