//! Scalar and vector activation functions shared by the model, the trainer
//! and the probe.

use crate::error::{Result, SstError};

/// Epsilon added inside the square root of every RMSNorm.
pub const RMS_EPS: f64 = 1e-6;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// `gamma ⊙ x / sqrt(mean(x²) + eps)`.
pub fn rms_norm(x: &[f64], gamma: &[f64], eps: f64) -> Result<Vec<f64>> {
    if x.len() != gamma.len() {
        return Err(SstError::Dimension(format!(
            "rms_norm: x has {} entries, gamma has {}",
            x.len(),
            gamma.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(SstError::Contract("rms_norm eps must be positive".into()));
    }
    let inv = inv_rms(x, eps);
    Ok(x.iter().zip(gamma).map(|(v, g)| g * v * inv).collect())
}

pub(crate) fn inv_rms(x: &[f64], eps: f64) -> f64 {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    1.0 / (ms + eps).sqrt()
}

/// GELU, tanh approximation.
pub fn gelu_tanh(x: f64) -> f64 {
    let inner = GELU_C * (x + GELU_K * x * x * x);
    0.5 * x * (1.0 + inner.tanh())
}

pub fn gelu_tanh_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + GELU_K * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * GELU_K * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-probabilities of a categorical distribution given its logits.
pub fn softmax_logprobs(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|v| v - lse).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
