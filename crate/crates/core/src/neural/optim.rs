use serde::{Deserialize, Serialize};

use super::params::NetworkParams;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsPropConfig {
    pub lr: f64,
    /// ρ, decay of the squared-gradient average.
    pub decay: f64,
    /// Added under the square root.
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            lr: 1e-4,
            decay: 0.99,
            eps: 1e-8,
        }
    }
}

/// Squared-gradient moving average. One instance may be shared by several workers.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsPropState {
    pub avg: Vec<f64>,
}

impl RmsPropState {
    pub fn new(n: usize) -> Self {
        RmsPropState { avg: vec![0.0; n] }
    }
}

/// avg ← ρ·avg + (1−ρ)·g², θ ← θ − lr·g/√(avg+ε).
pub fn rmsprop_update(
    params: &mut NetworkParams,
    grads: &[f64],
    state: &mut RmsPropState,
    cfg: &RmsPropConfig,
) -> Result<()> {
    if params.frozen {
        return Err(Error::Precondition("refusing to update frozen parameters".into()));
    }
    if grads.len() != params.len() || state.avg.len() != params.len() {
        return Err(Error::Shape {
            what: "optimizer update",
            expected: params.len().to_string(),
            actual: format!("grads {}, state {}", grads.len(), state.avg.len()),
        });
    }
    let rho = cfg.decay;
    for ((w, &g), s) in params.data.iter_mut().zip(grads).zip(state.avg.iter_mut()) {
        *s = rho * *s + (1.0 - rho) * g * g;
        *w -= cfg.lr * g / (*s + cfg.eps).sqrt();
    }
    Ok(())
}

/// Rescales `grads` in place so its L2 norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let n = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && n > max_norm {
        let s = max_norm / n;
        for g in grads.iter_mut() {
            *g *= s;
        }
    }
    n
}
