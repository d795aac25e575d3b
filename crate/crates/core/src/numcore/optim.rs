//! AdamW with decoupled weight decay.
//!
//! For every trainable tensor with gradient `g` at step `t`:
//!
//! ```text
//! θ ← θ · (1 − lr·λ)
//! m ← β₁·m + (1 − β₁)·g
//! v ← β₂·v + (1 − β₂)·g²
//! θ ← θ − lr · (m / (1 − β₁ᵗ)) / (√(v / (1 − β₂ᵗ)) + ε)
//! ```

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments for one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamWState {
    pub step: u64,
    /// Indexed by parameter id; `None` until the tensor is first updated.
    pub moments: Vec<Option<Moments>>,
}

/// Applies one AdamW update to every trainable tensor of `store`.
pub fn adamw_step(
    store: &mut ParamStore,
    state: &mut AdamWState,
    lr: f32,
    cfg: &AdamWConfig,
) -> Result<()> {
    let trainable: Vec<_> = store.ids().filter(|&id| !store.is_frozen(id)).collect();
    for &id in &trainable {
        if store.tensor(id).grad.is_none() {
            return Err(Error::Contract(format!(
                "trainable parameter {} has no gradient",
                store.name(id)
            )));
        }
    }
    if state.moments.len() < store.len() {
        state.moments.resize(store.len(), None);
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - lr * cfg.weight_decay;

    for id in trainable {
        let tensor = store.tensor_mut(id);
        let grad = tensor.grad.take().expect("checked above");
        let n = grad.len();
        let mom = state.moments[id.index()].get_or_insert_with(|| Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        for (((p, &g), m), v) in tensor
            .data_mut()
            .iter_mut()
            .zip(&grad)
            .zip(mom.m.iter_mut())
            .zip(mom.v.iter_mut())
        {
            *p *= decay;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        tensor.grad = Some(grad);
    }
    Ok(())
}

/// Rescales all trainable gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f32) -> f32 {
    let ids: Vec<_> = store.ids().filter(|&id| !store.is_frozen(id)).collect();
    let total: f64 = ids
        .iter()
        .filter_map(|&id| store.tensor(id).grad.as_ref())
        .flat_map(|g| g.iter())
        .map(|&v| f64::from(v) * f64::from(v))
        .sum();
    let norm = total.sqrt() as f32;
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for id in ids {
            if let Some(g) = store.tensor_mut(id).grad.as_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::tensor::Tensor;

    fn store_with(values: &[f32]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("g", "p", Tensor::new(vec![values.len()], values.to_vec()).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn zero_gradient_without_decay_leaves_parameters() {
        let mut s = store_with(&[0.3, -1.2]);
        let id = s.lookup("p").unwrap();
        s.accumulate_grad(id, &[0.0, 0.0]).unwrap();
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        adamw_step(&mut s, &mut AdamWState::default(), 1e-3, &cfg).unwrap();
        assert_eq!(s.tensor(id).data(), &[0.3, -1.2]);
    }

    #[test]
    fn frozen_group_is_bit_identical() {
        let mut s = store_with(&[0.3, -1.2]);
        s.add("frozen", "q", Tensor::new(vec![1], vec![0.7]).unwrap()).unwrap();
        s.set_frozen("frozen", true).unwrap();
        let p = s.lookup("p").unwrap();
        let q = s.lookup("q").unwrap();
        s.accumulate_grad(p, &[1.0, 1.0]).unwrap();
        let before = s.tensor(q).data()[0].to_bits();
        adamw_step(&mut s, &mut AdamWState::default(), 1e-2, &AdamWConfig::default()).unwrap();
        assert_eq!(s.tensor(q).data()[0].to_bits(), before);
    }

    #[test]
    fn single_step_matches_hand_evaluation() {
        // θ=0.5, g=1, lr=1e-3, λ=0.01, first step:
        // m = 0.1, v = 0.001, m̂ = 1, v̂ = 1
        // θ' = 0.5·(1 − 1e-5) − 1e-3 · 1/(1 + 1e-8)
        let mut s = store_with(&[0.5]);
        let id = s.lookup("p").unwrap();
        s.accumulate_grad(id, &[1.0]).unwrap();
        adamw_step(&mut s, &mut AdamWState::default(), 1e-3, &AdamWConfig::default()).unwrap();
        let expected = 0.5f64 * (1.0 - 1e-5) - 1e-3 / (1.0 + 1e-8);
        assert!((f64::from(s.tensor(id).data()[0]) - expected).abs() < 1e-7);
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut s = store_with(&[0.5]);
        let err = adamw_step(&mut s, &mut AdamWState::default(), 1e-3, &AdamWConfig::default());
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut s = store_with(&[0.0, 0.0]);
        let id = s.lookup("p").unwrap();
        s.accumulate_grad(id, &[3.0, 4.0]).unwrap();
        let before = clip_grad_norm(&mut s, 1.0);
        assert!((before - 5.0).abs() < 1e-6);
        let g = s.tensor(id).grad.clone().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-6 && (g[1] - 0.8).abs() < 1e-6);
    }
}
