//! Heatmap decoders over the backbone feature grid.
//!
//! Classic: two (deconv 4/2/1 -> norm -> ReLU) blocks at width 256, then a
//! 1x1 prediction conv. Simple: ReLU -> bilinear x4 -> 3x3 conv. Both are
//! exactly x4 spatial upsamplers. Heads are registered per dataset and share
//! the backbone; their parameters are disjoint.

use crate::config::{DecoderKind, HeadNorm};
use crate::error::{Error, Result};
use crate::graph::Var;
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::session::Session;
use crate::tensor::{Elem, Tensor};

/// Channel width of both deconvolution blocks in the classic decoder.
pub const DECONV_WIDTH: usize = 256;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    pub dataset: String,
    pub kind: DecoderKind,
    pub num_keypoints: usize,
}

/// Dataset id -> decoder head. Mutation is construction-time only.
#[derive(Debug, Default)]
pub struct HeadRegistry {
    heads: Vec<HeadSpec>,
}

impl HeadRegistry {
    pub fn new() -> Self {
        HeadRegistry { heads: Vec::new() }
    }

    pub fn register(&mut self, dataset: &str, kind: DecoderKind, num_keypoints: usize) -> Result<()> {
        if self.heads.iter().any(|h| h.dataset == dataset) {
            return Err(Error::DuplicateParam {
                name: format!("head.{dataset}"),
            });
        }
        self.heads.push(HeadSpec {
            dataset: dataset.to_string(),
            kind,
            num_keypoints,
        });
        Ok(())
    }

    pub fn get(&self, dataset: &str) -> Result<&HeadSpec> {
        self.heads
            .iter()
            .find(|h| h.dataset == dataset)
            .ok_or_else(|| Error::UnknownDataset { id: dataset.into() })
    }

    pub fn iter(&self) -> impl Iterator<Item = &HeadSpec> {
        self.heads.iter()
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }
}

/// Insert freshly initialized decoder parameters for one dataset head.
pub fn init_head_params<E: Elem>(
    store: &mut ParamStore<E>,
    dataset: &str,
    kind: DecoderKind,
    in_channels: usize,
    num_keypoints: usize,
    rng: &mut Rng,
) -> Result<()> {
    let normal = |shape: &[usize], std: f64, rng: &mut Rng| {
        Tensor::from_fn(shape, |_| E::from_f64(rng.normal(0.0, std)))
    };
    match kind {
        DecoderKind::Classic => {
            let w = DECONV_WIDTH;
            store.insert(
                &format!("head.{dataset}.deconv1.w"),
                normal(&[4, 4, in_channels, w], 0.02, rng),
            )?;
            for block in ["bn1", "bn2"] {
                store.insert(&format!("head.{dataset}.{block}.g"), Tensor::full(&[w], E::one()))?;
                store.insert(&format!("head.{dataset}.{block}.b"), Tensor::zeros(&[w]))?;
                store.insert_with(&format!("head.{dataset}.{block}.rm"), Tensor::zeros(&[w]), false)?;
                store.insert_with(
                    &format!("head.{dataset}.{block}.rv"),
                    Tensor::full(&[w], E::one()),
                    false,
                )?;
            }
            store.insert(
                &format!("head.{dataset}.deconv2.w"),
                normal(&[4, 4, w, w], 0.02, rng),
            )?;
            store.insert(
                &format!("head.{dataset}.out.w"),
                normal(&[1, 1, w, num_keypoints], 0.001, rng),
            )?;
            store.insert(&format!("head.{dataset}.out.b"), Tensor::zeros(&[num_keypoints]))?;
        }
        DecoderKind::Simple => {
            store.insert(
                &format!("head.{dataset}.conv.w"),
                normal(&[3, 3, in_channels, num_keypoints], 0.02, rng),
            )?;
            store.insert(
                &format!("head.{dataset}.conv.b"),
                Tensor::zeros(&[num_keypoints]),
            )?;
        }
    }
    Ok(())
}

/// Closed-form parameter counts; decoders only, no backbone.
pub fn head_param_count(kind: DecoderKind, in_channels: usize, num_keypoints: usize) -> u64 {
    let c = in_channels as u64;
    let k = num_keypoints as u64;
    let w = DECONV_WIDTH as u64;
    match kind {
        // deconv1 + 2 norms (g,b each) + deconv2 + 1x1 conv with bias
        DecoderKind::Classic => 16 * c * w + 4 * w + 16 * w * w + w * k + k,
        DecoderKind::Simple => 9 * c * k + k,
    }
}

/// Forward result: the heatmap node plus the raw batch statistics observed
/// by train-mode batch norms. The caller folds them into the running stats
/// after the step via [`apply_stat_updates`].
pub struct HeadForward<E: Elem> {
    pub heatmap: Var,
    pub stat_updates: Vec<(String, Vec<E>)>,
}

/// Fold observed batch statistics into the running stats: per name, average
/// the observations (a batch forwards once per sample) and blend with the
/// stored value at `momentum`.
pub fn apply_stat_updates<E: Elem>(
    store: &mut ParamStore<E>,
    updates: &[(String, Vec<E>)],
) -> Result<()> {
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: std::collections::HashMap<&str, (Vec<f64>, usize)> =
        std::collections::HashMap::new();
    for (name, stats) in updates {
        let entry = grouped
            .entry(name.as_str())
            .or_insert_with(|| (vec![0.0; stats.len()], 0));
        if entry.1 == 0 {
            order.push(name.as_str());
        }
        for (acc, v) in entry.0.iter_mut().zip(stats) {
            *acc += v.to_f64();
        }
        entry.1 += 1;
    }
    for name in order {
        let (sum, count) = &grouped[name];
        let old = store.get(name)?.data().to_vec();
        let blended: Vec<E> = old
            .iter()
            .zip(sum)
            .map(|(&o, &s)| {
                E::from_f64(o.to_f64() * (1.0 - BN_MOMENTUM) + (s / *count as f64) * BN_MOMENTUM)
            })
            .collect();
        store.get_mut(name)?.data_mut().copy_from_slice(&blended);
    }
    Ok(())
}

fn norm_block<E: Elem>(
    sess: &mut Session<E>,
    store: &ParamStore<E>,
    prefix: &str,
    x: Var,
    norm: HeadNorm,
    train: bool,
    updates: &mut Vec<(String, Vec<E>)>,
) -> Result<Var> {
    let g = sess.param(store, &format!("{prefix}.g"))?;
    let b = sess.param(store, &format!("{prefix}.b"))?;
    match norm {
        HeadNorm::BatchNorm => {
            if train {
                let (y, stats) = sess.graph.batch_norm_train(x, g, b, BN_EPS)?;
                updates.push((format!("{prefix}.rm"), stats.mean));
                updates.push((format!("{prefix}.rv"), stats.var));
                Ok(y)
            } else {
                let rm = store.get(&format!("{prefix}.rm"))?.data().to_vec();
                let rv = store.get(&format!("{prefix}.rv"))?.data().to_vec();
                sess.graph.batch_norm_eval(x, g, b, &rm, &rv, BN_EPS)
            }
        }
        // per-channel affine: batch norm against fixed unit stats
        HeadNorm::Affine => {
            let c = store.get(&format!("{prefix}.g"))?.numel();
            sess.graph
                .batch_norm_eval(x, g, b, &vec![E::zero(); c], &vec![E::one(); c], 0.0)
        }
    }
}

/// Classic decoder: Conv1x1(Deconv(Deconv(F_out))), each deconv block
/// upsampling by 2 with norm + ReLU.
pub fn classic_head<E: Elem>(
    sess: &mut Session<E>,
    store: &ParamStore<E>,
    dataset: &str,
    f_out: Var,
    norm: HeadNorm,
    train: bool,
) -> Result<HeadForward<E>> {
    let shape = sess.graph.shape(f_out).to_vec();
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch {
            op: "classic_head",
            expected: "[h, w, c]".into(),
            got: format!("{shape:?}"),
        });
    }
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let mut updates = Vec::new();
    let x = sess.graph.reshape(f_out, &[1, h, w, c])?;

    let d1 = sess.param(store, &format!("head.{dataset}.deconv1.w"))?;
    let x = sess.graph.conv_transpose2d(x, d1, 2, 1)?;
    let x = norm_block(sess, store, &format!("head.{dataset}.bn1"), x, norm, train, &mut updates)?;
    let x = sess.graph.relu(x)?;

    let d2 = sess.param(store, &format!("head.{dataset}.deconv2.w"))?;
    let x = sess.graph.conv_transpose2d(x, d2, 2, 1)?;
    let x = norm_block(sess, store, &format!("head.{dataset}.bn2"), x, norm, train, &mut updates)?;
    let x = sess.graph.relu(x)?;

    let ow = sess.param(store, &format!("head.{dataset}.out.w"))?;
    let ob = sess.param(store, &format!("head.{dataset}.out.b"))?;
    let x = sess.graph.conv2d(x, ow, 1, 0)?;
    let x = sess.graph.add_bias(x, ob)?;
    let n_k = sess.graph.shape(x)[3];
    let heatmap = sess.graph.reshape(x, &[4 * h, 4 * w, n_k])?;
    Ok(HeadForward { heatmap, stat_updates: updates })
}

/// Simple decoder: Conv3x3(Bilinear(ReLU(F_out))), applied inner to outer in
/// that order (the ReLU precedes the upsampling).
pub fn simple_head<E: Elem>(
    sess: &mut Session<E>,
    store: &ParamStore<E>,
    dataset: &str,
    f_out: Var,
) -> Result<HeadForward<E>> {
    let shape = sess.graph.shape(f_out).to_vec();
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch {
            op: "simple_head",
            expected: "[h, w, c]".into(),
            got: format!("{shape:?}"),
        });
    }
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let x = sess.graph.reshape(f_out, &[1, h, w, c])?;
    let x = sess.graph.relu(x)?;
    let x = sess.graph.bilinear_resize(x, 4)?;
    let cw = sess.param(store, &format!("head.{dataset}.conv.w"))?;
    let cb = sess.param(store, &format!("head.{dataset}.conv.b"))?;
    let x = sess.graph.conv2d(x, cw, 1, 1)?;
    let x = sess.graph.add_bias(x, cb)?;
    let n_k = sess.graph.shape(x)[3];
    let heatmap = sess.graph.reshape(x, &[4 * h, 4 * w, n_k])?;
    Ok(HeadForward { heatmap, stat_updates: Vec::new() })
}

/// Route the shared feature grid through exactly one dataset head.
pub fn multi_head_forward<E: Elem>(
    sess: &mut Session<E>,
    store: &ParamStore<E>,
    registry: &HeadRegistry,
    dataset: &str,
    f_out: Var,
    norm: HeadNorm,
    train: bool,
) -> Result<HeadForward<E>> {
    let spec = registry.get(dataset)?;
    match spec.kind {
        DecoderKind::Classic => classic_head(sess, store, dataset, f_out, norm, train),
        DecoderKind::Simple => simple_head(sess, store, dataset, f_out),
    }
}
