//! Dense networks, reverse-mode gradients, Adam, and the scalar densities used
//! by the training objective.

mod adam;
mod checkpoint;
mod mlp;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_tensors, save_tensors, TensorEntry, TensorManifest};
pub use mlp::{mlp_forward, Mlp};
pub use tape::{Gradients, Tape, Var, LOG_VAR_MAX, LOG_VAR_MIN};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub(crate) fn on_tape(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Identity => v,
            Activation::Tanh => tape.tanh(v),
            Activation::Relu => tape.relu(v),
            Activation::Sigmoid => tape.sigmoid(v),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gaussian log-density; `log_var` is clamped to [-10, 10] first.
pub fn gaussian_loglik(y: f64, mean: f64, log_var: f64) -> f64 {
    let lv = log_var.clamp(LOG_VAR_MIN, LOG_VAR_MAX);
    let r = y - mean;
    -0.5 * (std::f64::consts::TAU.ln() + lv + r * r * (-lv).exp())
}

/// `log(1/N sum exp(v_i))`, shifted by the maximum.
pub fn log_mean_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || !m.is_finite() {
        return Ok(m);
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    Ok(m + (s / values.len() as f64).ln())
}

/// Relaxed Bernoulli sample `sigmoid((logit(pi) + L) / tau)` per coordinate,
/// `L` standard logistic.
pub fn gumbel_softmax_binary(pi: &[f64], tau: f64, rng: &mut impl RngCore) -> Vec<f64> {
    pi.iter()
        .map(|&p| {
            let noise = crate::rng::logistic(rng);
            binary_concrete(p, noise, tau)
        })
        .collect()
}

/// Binary-concrete transform for a given logistic draw.
pub fn binary_concrete(pi: f64, noise: f64, tau: f64) -> f64 {
    let logit = pi.ln() - (-pi).ln_1p();
    relaxed_gate(logit + noise, tau)
}

/// `sigmoid(v / tau)` kept strictly inside (0, 1); plain `f64` rounding would
/// return exactly 1 once `v / tau` exceeds about 37.
pub(crate) fn relaxed_gate(v: f64, tau: f64) -> f64 {
    sigmoid(v / tau).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}
