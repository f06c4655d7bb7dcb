//! Adam with bias correction and decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::MathError;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub weight_decay: f64,
    pub step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new(params: &[Tensor], lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Self { lr, weight_decay, step: 0, first: zeros.clone(), second: zeros }
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }
}

/// One Adam update. `decay[i]` selects which parameters receive the
/// decoupled `lr * weight_decay * p` shrinkage.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], decay: &[bool], state: &mut AdamState) -> Result<(), MathError> {
    if params.len() != grads.len() || params.len() != state.first.len() || params.len() != decay.len() {
        return Err(MathError::ShapeMismatch {
            op: "adam_step",
            left: (params.len(), 0),
            right: (grads.len(), state.first.len()),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(MathError::ShapeMismatch { op: "adam_step", left: p.shape(), right: g.shape() });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let (lr, wd) = (state.lr, state.weight_decay);

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (k, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[k] = BETA1 * m[k] + (1.0 - BETA1) * gv;
            v[k] = BETA2 * v[k] + (1.0 - BETA2) * gv * gv;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            let mut delta = m_hat / (v_hat.sqrt() + EPSILON);
            if decay[i] {
                delta += wd * *pv;
            }
            *pv -= lr * delta;
        }
    }
    Ok(())
}
