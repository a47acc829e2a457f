//! Adam with bias correction, plus the epoch learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::model::{PolicyDims, PolicyGrads, PolicyParams};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub const BASE_LR: f64 = 1e-4;
pub const LR_CAP: f64 = 3e-4;
/// First halving applies at epoch 7 ("after 6 epochs"), then every 3 epochs.
pub const DECAY_START_EPOCH: u32 = 7;
pub const DECAY_EVERY: u32 = 3;

/// First and second moment estimates, flat like the parameter buffer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dims: PolicyDims) -> Self {
        let n = dims.param_count();
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step; increments the step counter.
pub fn adam_update(
    params: &mut PolicyParams,
    grads: &PolicyGrads,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let n = params.flat().len();
    if grads.flat().len() != n || state.m.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "adam buffers disagree: params {}, grads {}, moments {}",
            n,
            grads.flat().len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);
    let data = params.flat_mut();
    for i in 0..n {
        let g = grads.flat()[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        data[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Epoch learning rate: min(epoch * 1e-4, 3e-4) through epoch 6, then the
/// cap halved every 3 epochs starting at epoch 7.
pub fn lr_schedule(epoch: u32) -> f64 {
    assert!(epoch >= 1, "epochs are 1-based");
    if epoch < DECAY_START_EPOCH {
        (epoch as f64 * BASE_LR).min(LR_CAP)
    } else {
        let halvings = (epoch - DECAY_START_EPOCH) / DECAY_EVERY + 1;
        LR_CAP * 0.5f64.powi(halvings as i32)
    }
}
