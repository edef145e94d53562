//! Masked-patch pretraining pretext: mask a fraction of patch tokens,
//! replace them with a learned mask token, and reconstruct the masked patch
//! pixels with a linear head. The loss covers masked patches only.

use crate::config::EncoderConfig;
use crate::encoder;
use crate::error::{Error, Result};
use crate::graph::Var;
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::session::Session;
use crate::tensor::{Elem, Tensor};

/// Parameters owned by the pretext: the mask token and the linear pixel head.
pub fn init_mim_params<E: Elem>(
    store: &mut ParamStore<E>,
    cfg: &EncoderConfig,
    rng: &mut Rng,
) -> Result<()> {
    let c = cfg.embed_dim;
    let out = cfg.patch_size * cfg.patch_size * 3;
    store.insert(
        "mim.mask_token",
        Tensor::from_fn(&[1, c], |_| E::from_f64(rng.normal(0.0, 0.02))),
    )?;
    store.insert(
        "mim.head.w",
        Tensor::from_fn(&[c, out], |_| E::from_f64(rng.normal(0.0, 0.02))),
    )?;
    store.insert("mim.head.b", Tensor::zeros(&[out]))?;
    Ok(())
}

pub struct MimForward {
    /// None when the mask set is empty (ratio 0): the loss is 0 by
    /// convention and there is nothing to backpropagate.
    pub loss: Option<Var>,
    pub masked: Vec<usize>,
}

/// Raw pixels of one patch, row-major [p, p, 3] flattened.
fn patch_pixels<E: Elem>(image: &Tensor<E>, cfg: &EncoderConfig, index: usize) -> Vec<E> {
    let (gh, gw) = cfg.grid_hw();
    debug_assert!(index < gh * gw);
    let p = cfg.patch_size;
    let (_, w) = cfg.input_hw;
    let (r, c) = (index / gw, index % gw);
    let mut out = Vec::with_capacity(p * p * 3);
    for y in 0..p {
        for x in 0..p {
            let py = r * p + y;
            let px = c * p + x;
            for ch in 0..3 {
                out.push(image.data()[(py * w + px) * 3 + ch]);
            }
        }
    }
    out
}

/// One pretext forward. Exactly ceil(ratio * n_patches) patches are masked,
/// drawn fresh from `rng` per call.
pub fn mim_forward<E: Elem>(
    sess: &mut Session<E>,
    store: &ParamStore<E>,
    cfg: &EncoderConfig,
    image: &Tensor<E>,
    mask_ratio: f64,
    rng: &mut Rng,
) -> Result<MimForward> {
    if !(0.0..1.0).contains(&mask_ratio) {
        return Err(Error::InvalidConfig {
            detail: format!("mask ratio {mask_ratio} outside [0, 1)"),
        });
    }
    if cfg.patch_stride != cfg.patch_size {
        return Err(Error::InvalidConfig {
            detail: "masked pretraining needs non-overlapping patches (stride == patch)".into(),
        });
    }
    let tm = encoder::patch_embed(sess, store, cfg, image)?;
    let n = tm.grid_len();
    let k = (mask_ratio * n as f64).ceil() as usize;
    let masked = {
        let mut m = rng.sample_indices(n, k);
        m.sort_unstable();
        m
    };
    if masked.is_empty() {
        return Ok(MimForward { loss: None, masked });
    }

    let c = cfg.embed_dim;
    let mut keep = vec![E::one(); n * c];
    let mut drop = vec![E::zero(); n * c];
    for &i in &masked {
        for ch in 0..c {
            keep[i * c + ch] = E::zero();
            drop[i * c + ch] = E::one();
        }
    }
    let keep = sess.graph.constant_from(&[n, c], keep)?;
    let drop = sess.graph.constant_from(&[n, c], drop)?;
    let mask_token = sess.param(store, "mim.mask_token")?;
    let tiled = sess.graph.repeat0(mask_token, n)?;
    let tiled = sess.graph.reshape(tiled, &[n, c])?;
    let kept = sess.graph.mul(tm.tokens, keep)?;
    let filled = sess.graph.mul(tiled, drop)?;
    let tokens = sess.graph.add(kept, filled)?;

    let tm = encoder::add_pos_embed(sess, store, cfg, &encoder::TokenMap { tokens, ..tm })?;
    let mut tm = tm;
    let mut opts = encoder::ForwardOpts::default();
    for i in 0..cfg.depth {
        tm = encoder::transformer_block(sess, store, cfg, i, &tm, &mut opts)?;
    }
    let fg = sess.param(store, "final_norm.g")?;
    let fb = sess.param(store, "final_norm.b")?;
    let tokens = sess.graph.layer_norm(tm.tokens, fg, fb, 1e-6)?;

    let picked = sess.graph.gather_rows(tokens, &masked)?;
    let hw = sess.param(store, "mim.head.w")?;
    let hb = sess.param(store, "mim.head.b")?;
    let pred = sess.graph.matmul(picked, hw)?;
    let pred = sess.graph.add_bias(pred, hb)?;

    let dim = cfg.patch_size * cfg.patch_size * 3;
    let mut target = Vec::with_capacity(masked.len() * dim);
    for &i in &masked {
        target.extend(patch_pixels(image, cfg, i));
    }
    let target = sess.graph.constant_from(&[masked.len(), dim], target)?;
    let loss = sess.graph.mse(pred, target)?;
    Ok(MimForward { loss: Some(loss), masked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{preset, AttentionMode, EncoderConfig};
    use crate::train::adamw::{adamw_step, AdamParams, AdamState};

    fn toy() -> (EncoderConfig, ParamStore<f64>) {
        let cfg = EncoderConfig {
            depth: 2,
            embed_dim: 16,
            num_heads: 2,
            input_hw: (32, 32),
            attention: AttentionMode::Full,
            ..preset("toy-s").unwrap().encoder
        };
        let mut store = ParamStore::new();
        let mut rng = Rng::new(1);
        encoder::init_encoder_params(&mut store, &cfg, &mut rng).unwrap();
        init_mim_params(&mut store, &cfg, &mut rng).unwrap();
        (cfg, store)
    }

    #[test]
    fn mask_count_is_exactly_ceil_of_ratio() {
        let (cfg, store) = toy(); // 2x2 grid -> 4 patches
        let image = Tensor::full(&[32, 32, 3], 0.5);
        let mut rng = Rng::new(2);
        let mut sess = Session::new();
        let out = mim_forward(&mut sess, &store, &cfg, &image, 0.75, &mut rng).unwrap();
        assert_eq!(out.masked.len(), 3); // ceil(0.75 * 4)
        let mut sess = Session::new();
        let out = mim_forward(&mut sess, &store, &cfg, &image, 0.5, &mut rng).unwrap();
        assert_eq!(out.masked.len(), 2);
    }

    #[test]
    fn zero_ratio_means_zero_loss_by_convention() {
        let (cfg, store) = toy();
        let image = Tensor::full(&[32, 32, 3], 0.5);
        let mut rng = Rng::new(2);
        let mut sess = Session::new();
        let out = mim_forward(&mut sess, &store, &cfg, &image, 0.0, &mut rng).unwrap();
        assert!(out.loss.is_none());
        assert!(out.masked.is_empty());
    }

    #[test]
    fn mask_sets_differ_across_a_batch() {
        let (cfg, store) = toy();
        let image = Tensor::full(&[32, 32, 3], 0.5);
        let mut rng = Rng::new(7);
        let mut sets = Vec::new();
        for _ in 0..8 {
            let mut sess = Session::new();
            let out = mim_forward(&mut sess, &store, &cfg, &image, 0.5, &mut rng).unwrap();
            sets.push(out.masked);
        }
        assert!(sets.windows(2).any(|w| w[0] != w[1]));
    }

    /// The pretext gradient must touch only encoder + mim parameters.
    #[test]
    fn gradients_reach_only_encoder_and_mim_params() {
        let (cfg, mut store) = toy();
        // an unrelated head parameter must stay untouched
        crate::decoder::init_head_params(
            &mut store,
            "synthetic",
            crate::config::DecoderKind::Simple,
            16,
            6,
            &mut Rng::new(9),
        )
        .unwrap();
        let mut rng = Rng::new(3);
        let image = Tensor::from_fn(&[32, 32, 3], |_| rng.normal(0.0, 0.5));
        let mut sess = Session::new();
        let out = mim_forward(&mut sess, &store, &cfg, &image, 0.75, &mut Rng::new(5)).unwrap();
        let loss = out.loss.unwrap();
        sess.backward(loss, &mut store).unwrap();
        for (name, tensor, _) in store.iter() {
            if name.starts_with("head.") {
                assert!(tensor.grad().is_none(), "{name} got a gradient");
            } else {
                assert!(tensor.grad().is_some(), "{name} missing gradient");
            }
        }
    }

    /// Optimization sanity: on a constant image the reconstruction loss
    /// drives to near zero.
    #[test]
    fn constant_image_reconstruction_converges() {
        let (cfg, mut store) = toy();
        let image = Tensor::full(&[32, 32, 3], 0.37);
        let mut state = AdamState::new();
        let hp = AdamParams { weight_decay: 0.0, ..Default::default() };
        let mut rng = Rng::new(11);
        let mut last = f64::INFINITY;
        for _ in 0..150 {
            let mut sess = Session::new();
            let out = mim_forward(&mut sess, &store, &cfg, &image, 0.75, &mut rng).unwrap();
            let loss = out.loss.unwrap();
            last = sess.graph.scalar_value(loss);
            sess.backward(loss, &mut store).unwrap();
            adamw_step(&mut store, &mut state, |_| 5e-3, &hp).unwrap();
            store.clear_grads();
        }
        assert!(last < 1e-3, "final loss {last}");
    }
}
