//! Adam with decoupled weight decay. Moment buffers align with the
//! parameter store's index order; disabled sections are skipped entirely so
//! ablations leave them bitwise untouched (decay included).

use crate::nets::params::{Gradients, ParameterStore};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { beta1: 0.9, beta2: 0.95, eps: 1e-8, weight_decay: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    /// Completed update count (drives bias correction).
    pub step: u64,
}

impl AdamState {
    pub fn zeros_like(store: &ParameterStore<f32>) -> Self {
        let shape: Vec<Vec<f32>> =
            store.iter().map(|p| vec![0.0; p.tensor.data.len()]).collect();
        AdamState { m: shape.clone(), v: shape, step: 0 }
    }
}

/// Scale gradients so the global L2 norm over active parameters is at most
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_grad_norm(
    grads: &mut Gradients<f32>,
    store: &ParameterStore<f32>,
    active: &dyn Fn(&str) -> bool,
    max_norm: f64,
) -> f64 {
    let mut sq = 0.0f64;
    for i in 0..store.len() {
        if !active(&store.at(i).name) {
            continue;
        }
        for &g in grads.slot(i) {
            sq += (g as f64) * (g as f64);
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = (max_norm / norm) as f32;
        for i in 0..store.len() {
            if active(&store.at(i).name) {
                crate::linalg::scale(grads.slot_mut(i), s);
            }
        }
    }
    norm
}

/// One decoupled-weight-decay adaptive-moment update over the active
/// parameters.
pub fn adamw_update(
    store: &mut ParameterStore<f32>,
    grads: &Gradients<f32>,
    state: &mut AdamState,
    lr: f64,
    hyper: &AdamHyper,
    active: &dyn Fn(&str) -> bool,
) {
    state.step += 1;
    let t = state.step as i32;
    let b1 = hyper.beta1 as f32;
    let b2 = hyper.beta2 as f32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let lr32 = lr as f32;
    let eps = hyper.eps as f32;

    for i in 0..store.len() {
        let param = store.at_mut(i);
        if !active(&param.name) {
            continue;
        }
        let g = grads.slot(i);
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let decay = if param.decay { (hyper.weight_decay * lr) as f32 } else { 0.0 };
        for j in 0..g.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let mhat = m[j] / bc1 as f32;
            let vhat = v[j] / bc2 as f32;
            let p = &mut param.tensor.data[j];
            *p -= decay * *p;
            *p -= lr32 * mhat / (vhat.sqrt() + eps);
        }
    }
}
