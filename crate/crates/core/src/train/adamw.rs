//! AdamW with decoupled weight decay and per-parameter learning rates.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Elem, Tensor};

#[derive(Debug, Clone)]
pub struct AdamParams {
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

/// First/second moments and the shared step count.
pub struct AdamState<E: Elem> {
    pub step: u64,
    moments: HashMap<String, (Vec<E>, Vec<E>)>,
}

impl<E: Elem> Default for AdamState<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> AdamState<E> {
    pub fn new() -> Self {
        AdamState {
            step: 0,
            moments: HashMap::new(),
        }
    }

    /// Serialize into a parameter-store container ("m.<name>", "v.<name>",
    /// plus "step") for checkpointing.
    pub fn to_store(&self, params: &ParamStore<E>) -> Result<ParamStore<E>> {
        let mut out = ParamStore::new();
        out.insert_with("step", Tensor::scalar(E::from_f64(self.step as f64)), false)?;
        for (name, _, _) in params.iter() {
            if let Some((m, v)) = self.moments.get(name) {
                let shape = [m.len()];
                out.insert_with(&format!("m.{name}"), Tensor::new(&shape, m.clone())?, false)?;
                out.insert_with(&format!("v.{name}"), Tensor::new(&shape, v.clone())?, false)?;
            }
        }
        Ok(out)
    }

    pub fn from_store(container: &ParamStore<E>) -> Result<AdamState<E>> {
        let step = container.get("step")?.data()[0].to_f64() as u64;
        let mut moments = HashMap::new();
        for (name, tensor, _) in container.iter() {
            if let Some(param) = name.strip_prefix("m.") {
                let v = container.get(&format!("v.{param}"))?;
                moments.insert(
                    param.to_string(),
                    (tensor.data().to_vec(), v.data().to_vec()),
                );
            }
        }
        Ok(AdamState { step, moments })
    }
}

/// One optimizer step. Only trainable parameters that carry a gradient are
/// touched; any non-finite gradient aborts the whole step before mutation.
/// Decoupled weight decay shrinks the parameter first, then the adaptive
/// update applies.
pub fn adamw_step<E: Elem>(
    store: &mut ParamStore<E>,
    state: &mut AdamState<E>,
    lr_for: impl Fn(&str) -> f64,
    hp: &AdamParams,
) -> Result<()> {
    let names: Vec<String> = store
        .iter()
        .filter(|(_, t, trainable)| *trainable && t.grad().is_some())
        .map(|(n, _, _)| n.to_string())
        .collect();
    for name in &names {
        let grad = store.get(name)?.grad().expect("filtered above");
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFiniteGradient { name: name.clone() });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = hp.betas;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for name in &names {
        let lr = lr_for(name);
        let tensor = store.get_mut(name)?;
        let n = tensor.numel();
        let (m, v) = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| (vec![E::zero(); n], vec![E::zero(); n]));
        let grad = tensor.grad().expect("filtered above").to_vec();
        let data = tensor.data_mut();
        for i in 0..n {
            let g = grad[i].to_f64();
            let mi = b1 * m[i].to_f64() + (1.0 - b1) * g;
            let vi = b2 * v[i].to_f64() + (1.0 - b2) * g * g;
            m[i] = E::from_f64(mi);
            v[i] = E::from_f64(vi);
            let mut p = data[i].to_f64();
            p -= lr * hp.weight_decay * p;
            p -= lr * (mi / bc1) / ((vi / bc2).sqrt() + hp.eps);
            data[i] = E::from_f64(p);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, value: f64, grad: f64) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        let mut t = Tensor::scalar(value);
        t.set_grad(vec![grad]).unwrap();
        store.insert(name, t).unwrap();
        store
    }

    #[test]
    fn zero_grad_zero_decay_leaves_params_unchanged() {
        let mut store = store_with("embed.pos", 1.5, 0.0);
        let mut state = AdamState::new();
        let hp = AdamParams { weight_decay: 0.0, ..Default::default() };
        adamw_step(&mut store, &mut state, |_| 1e-3, &hp).unwrap();
        assert_eq!(store.get("embed.pos").unwrap().data()[0], 1.5);
    }

    /// Closed-form first step from zero moments: the update magnitude is
    /// lr * g / (|g| + eps) ~ lr * sign(g) after bias correction.
    #[test]
    fn first_step_magnitude_is_lr_times_sign() {
        for g in [0.37, -2.4, 11.0] {
            let mut store = store_with("embed.pos", 0.0, g);
            let mut state = AdamState::new();
            let hp = AdamParams { weight_decay: 0.0, ..Default::default() };
            let lr = 1e-3;
            adamw_step(&mut store, &mut state, |_| lr, &hp).unwrap();
            let p = store.get("embed.pos").unwrap().data()[0];
            let expect = -lr * g / (g.abs() + hp.eps);
            assert!((p - expect).abs() < 1e-12, "g={g}: {p} vs {expect}");
            assert!((p.abs() - lr).abs() < 1e-6);
        }
    }

    /// Weight decay with zero gradient is a pure multiplicative shrink.
    #[test]
    fn decay_only_shrinks_multiplicatively() {
        let mut store = store_with("embed.pos", 2.0, 0.0);
        let mut state = AdamState::new();
        let hp = AdamParams { weight_decay: 0.1, ..Default::default() };
        let lr = 0.01;
        adamw_step(&mut store, &mut state, |_| lr, &hp).unwrap();
        let p = store.get("embed.pos").unwrap().data()[0];
        assert!((p - 2.0 * (1.0 - lr * 0.1)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_before_any_mutation() {
        let mut store = store_with("embed.pos", 1.0, 0.5);
        let mut bad = Tensor::scalar(3.0);
        bad.set_grad(vec![f64::NAN]).unwrap();
        store.insert("final_norm.g", bad).unwrap();
        let mut state = AdamState::new();
        let err = adamw_step(&mut store, &mut state, |_| 1e-3, &AdamParams::default());
        assert!(matches!(err, Err(Error::NonFiniteGradient { .. })));
        assert_eq!(store.get("embed.pos").unwrap().data()[0], 1.0);
        assert_eq!(store.get("final_norm.g").unwrap().data()[0], 3.0);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn params_without_grads_are_untouched_even_by_decay() {
        let mut store = store_with("embed.pos", 1.0, 0.2);
        store.insert("final_norm.g", Tensor::scalar(7.0)).unwrap();
        let mut state = AdamState::new();
        adamw_step(&mut store, &mut state, |_| 1e-2, &AdamParams::default()).unwrap();
        assert_eq!(store.get("final_norm.g").unwrap().data()[0], 7.0);
        assert_ne!(store.get("embed.pos").unwrap().data()[0], 1.0);
    }

    #[test]
    fn state_round_trips_through_a_store() {
        let mut store = store_with("embed.pos", 1.0, 0.2);
        let mut state = AdamState::new();
        adamw_step(&mut store, &mut state, |_| 1e-2, &AdamParams::default()).unwrap();
        adamw_step(&mut store, &mut state, |_| 1e-2, &AdamParams::default()).unwrap();
        let container = state.to_store(&store).unwrap();
        let restored = AdamState::<f64>::from_store(&container).unwrap();
        assert_eq!(restored.step, 2);
        assert_eq!(
            restored.moments.get("embed.pos").unwrap(),
            state.moments.get("embed.pos").unwrap()
        );
    }
}
