//! Whether iteration-to-iteration changes survive bf16 rounding: the ratio
//! `|δ_d| / (ε · |h_d|)` with `ε = 2⁻⁷`.

use super::overlap::Band;
use super::stats::{binomial_tail, PValue};
use crate::error::{Result, SstError};
use crate::model::{alpha_from_logits, ModelConfig, SstParams};
use crate::numerics::BF16_EPSILON;
use crate::traceio::TraceArchive;

pub fn precision_ratio(delta: f64, h: f64) -> f64 {
    delta.abs() / (BF16_EPSILON * h.abs())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerPrecision {
    pub layer: usize,
    pub n: usize,
    pub above_one: usize,
    pub fraction_above: f64,
    pub band: Option<Band>,
    /// One-sided test of the fraction above 1 against 0.5.
    pub p: Option<PValue>,
    /// Dimensions skipped because `h_d = 0`.
    pub excluded_zero: usize,
}

/// Ratio counts from raw `(δ, h)` pairs.
pub fn summarize_ratios(layer: usize, pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<LayerPrecision> {
    let mut ratios = Vec::new();
    let mut excluded_zero = 0;
    for (d, h) in pairs {
        if h == 0.0 {
            excluded_zero += 1;
        } else {
            ratios.push(precision_ratio(d, h));
        }
    }
    let n = ratios.len();
    let above_one = ratios.iter().filter(|r| **r > 1.0).count();
    Ok(LayerPrecision {
        layer,
        n,
        above_one,
        fraction_above: if n == 0 { 0.0 } else { above_one as f64 / n as f64 },
        band: (n > 0).then(|| Band::of(&ratios)),
        p: if n == 0 { None } else { Some(binomial_tail(above_one as u64, n as u64, 0.5)?) },
        excluded_zero,
    })
}

/// Per-layer ratios at labelled positions, `δ = h_b − h_a`, `h = h_a`.
pub fn precision_floor_test(
    trace: &TraceArchive,
    labels: &[bool],
    iter_a: usize,
    iter_b: usize,
) -> Result<Vec<LayerPrecision>> {
    if labels.len() != trace.positions {
        return Err(SstError::Dimension(format!("{} labels for {} positions", labels.len(), trace.positions)));
    }
    for i in [iter_a, iter_b] {
        if i == 0 || i > trace.iterations {
            return Err(SstError::Contract(format!("iteration {i} not recorded")));
        }
    }
    (0..trace.layers)
        .map(|l| {
            let mut pairs = Vec::new();
            for p in (0..trace.positions).filter(|p| labels[*p]) {
                let (a, b) = (trace.hidden(iter_a, p, l), trace.hidden(iter_b, p, l));
                pairs.extend(a.iter().zip(&b).map(|(ha, hb)| (hb - ha, *ha)));
            }
            summarize_ratios(l, pairs)
        })
        .collect()
}

/// Smallest blend coefficient in a checkpoint and whether it clears `ε`.
pub fn alpha_premise(cfg: &ModelConfig, params: &SstParams) -> (f64, bool) {
    let min = params
        .layers
        .iter()
        .flat_map(|l| alpha_from_logits(l.blend_logits.data(), cfg.alpha_min, cfg.alpha_max))
        .fold(f64::INFINITY, f64::min);
    (min, min > BF16_EPSILON)
}
