//! Lipschitz budget of a layer's FFN + residual, `x ↦ x + FFN(x)`.
//!
//! On `{‖x‖ ≥ r}` the pre-FFN RMSNorm is `L_N = √d·max|γ|/r`-Lipschitz and
//! bounded by `B = √d·max|γ|`. The gate branch is `1.13·σ(W_g)·L_N`-Lipschitz
//! and bounded by `σ(W_g)·B` (|gelu(z)| ≤ |z|); the up branch likewise with
//! constant 1. Their product is `(M_g·L_u + M_u·L_g)`-Lipschitz, so
//!
//! `L ≤ 1 + σ(W_d) · 2.13 · σ(W_g) · σ(W_u) · B · L_N`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::stack::SstModel;
use crate::error::{Result, SstError};
use crate::numerics::{empirical_lipschitz, sigma_max, GELU_LIPSCHITZ};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzReport {
    pub layer: usize,
    pub empirical: f64,
    pub bound: f64,
    /// Smallest input norm among the sampled points.
    pub radius: f64,
}

/// Analytic bound for inputs of norm at least `radius`.
pub fn ffn_lipschitz_bound(model: &SstModel, layer: usize, radius: f64) -> Result<f64> {
    let w = model.params.layers.get(layer).ok_or_else(|| SstError::Contract(format!("no layer {layer}")))?;
    if radius <= 0.0 {
        return Err(SstError::Contract("radius must be positive".into()));
    }
    let d = model.config.d_model as f64;
    let gamma = w.ffn_norm.data().iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let b = d.sqrt() * gamma;
    let l_n = b / radius;
    let (sg, su, sd) = (sigma_max(&w.w_gate), sigma_max(&w.w_up), sigma_max(&w.w_down));
    Ok(1.0 + sd * (1.0 + GELU_LIPSCHITZ) * sg * su * b * l_n)
}

/// Max ratio over `pairs` random input pairs (half nearby, half
/// independent), all with norm in `[√d, 3√d]`, against the analytic bound at
/// the smallest sampled norm.
pub fn ffn_lipschitz(model: &SstModel, layer: usize, pairs: usize, seed: u64) -> Result<LipschitzReport> {
    let d = model.config.d_model;
    let r = (d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let target = rng.random_range(r..3.0 * r);
        v.iter().map(|x| x * target / n).collect()
    };
    let mut samples = Vec::with_capacity(pairs);
    while samples.len() < pairs {
        let x = point(&mut rng);
        let y = if samples.len() % 2 == 0 {
            x.iter().map(|v| {
                let e: f64 = StandardNormal.sample(&mut rng);
                v + 1e-3 * e
            }).collect()
        } else {
            point(&mut rng)
        };
        let ny = y.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        if ny >= r {
            samples.push((x, y));
        }
    }
    let radius = samples
        .iter()
        .flat_map(|(x, y)| [x, y])
        .map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min);
    let f = |x: &[f64]| model.ffn_and_update(x, layer, None).expect("width checked");
    Ok(LipschitzReport { layer, empirical: empirical_lipschitz(f, &samples), bound: ffn_lipschitz_bound(model, layer, radius)?, radius })
}
