//! Which input dimensions the probe's decisions actually depend on.

use super::model::ProbeModel;
use crate::analysis::stats::pearson;
use crate::error::{Result, SstError};

/// Sum in ascending order so the result does not depend on how hidden
/// neurons are numbered.
fn canonical_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// `Σ_j |W2_j| · |W1_ij|` per input dimension.
pub fn importance(probe: &ProbeModel) -> Vec<f64> {
    (0..probe.input_dim())
        .map(|i| canonical_sum(probe.w1.row(i).iter().zip(&probe.w2).map(|(a, b)| a.abs() * b.abs()).collect()))
        .collect()
}

/// Decisions on every input with dimensions outside `keep` zeroed.
pub fn decision_profile(probe: &ProbeModel, inputs: &[Vec<f64>], keep: &[bool]) -> Vec<bool> {
    inputs
        .iter()
        .map(|x| {
            let masked: Vec<f64> = x.iter().zip(keep).map(|(v, k)| if *k { *v } else { 0.0 }).collect();
            probe.decide(&masked).0
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub importance: Vec<f64>,
    /// Dimensions by descending importance, ties by index.
    pub ranking: Vec<usize>,
    /// Smallest top-K that reproduces every decision.
    pub top_k: usize,
    /// Survivors of greedy pruning, ascending.
    pub essential: Vec<usize>,
}

impl AblationReport {
    pub fn non_essential(&self) -> Vec<usize> {
        (0..self.importance.len()).filter(|i| self.essential.binary_search(i).is_err()).collect()
    }
}

fn ranking(imp: &[f64]) -> Vec<usize> {
    let mut r: Vec<usize> = (0..imp.len()).collect();
    r.sort_by(|a, b| imp[*b].total_cmp(&imp[*a]).then(a.cmp(b)));
    r
}

fn top_mask(ranking: &[usize], k: usize) -> Vec<bool> {
    let mut m = vec![false; ranking.len()];
    for &i in &ranking[..k] {
        m[i] = true;
    }
    m
}

/// Reference sweep: first `K` whose top-K profile matches the full one.
pub fn minimal_top_k_linear(probe: &ProbeModel, inputs: &[Vec<f64>]) -> usize {
    let d = probe.input_dim();
    let r = ranking(&importance(probe));
    let full = decision_profile(probe, inputs, &vec![true; d]);
    (0..=d).find(|k| decision_profile(probe, inputs, &top_mask(&r, *k)) == full).unwrap_or(d)
}

/// Top-K boundary by binary search, then greedy pruning of the kept set
/// from the least important dimension up: a dimension is dropped when the
/// decisions survive its removal.
pub fn input_dim_ablation(probe: &ProbeModel, inputs: &[Vec<f64>]) -> Result<AblationReport> {
    let d = probe.input_dim();
    if inputs.iter().any(|x| x.len() != d) {
        return Err(SstError::Dimension(format!("probe expects width {d}")));
    }
    let imp = importance(probe);
    let r = ranking(&imp);
    let full = decision_profile(probe, inputs, &vec![true; d]);
    let matches = |k: usize| decision_profile(probe, inputs, &top_mask(&r, k)) == full;
    let (mut lo, mut hi) = (0, d);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if matches(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let top_k = lo;

    let mut keep = top_mask(&r, top_k);
    for &i in r[..top_k].iter().rev() {
        keep[i] = false;
        if decision_profile(probe, inputs, &keep) != full {
            keep[i] = true;
        }
    }
    let essential = (0..d).filter(|i| keep[*i]).collect();
    Ok(AblationReport { importance: imp, ranking: r, top_k, essential })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionReport {
    /// `W2ᵀ W1` as a `d`-vector.
    pub direction: Vec<f64>,
    /// Mean `|∂logit/∂x|` over the supplied inputs.
    pub gradient_magnitude: Vec<f64>,
    /// Pearson correlation of `|direction|` with the gradient magnitude.
    pub r: f64,
}

/// Linearised probe direction compared with per-input gradients, typically
/// over the MUST_HALT items.
pub fn effective_direction(probe: &ProbeModel, inputs: &[Vec<f64>]) -> Result<DirectionReport> {
    if inputs.is_empty() {
        return Err(SstError::Contract("no inputs for gradient comparison".into()));
    }
    let d = probe.input_dim();
    let direction: Vec<f64> = (0..d)
        .map(|i| canonical_sum(probe.w1.row(i).iter().zip(&probe.w2).map(|(a, b)| a * b).collect()))
        .collect();
    let mut grad = vec![0.0; d];
    for x in inputs {
        for (g, v) in grad.iter_mut().zip(probe.input_gradient(x)) {
            *g += v.abs() / inputs.len() as f64;
        }
    }
    let mags: Vec<f64> = direction.iter().map(|v| v.abs()).collect();
    let r = pearson(&mags, &grad)?;
    Ok(DirectionReport { direction, gradient_magnitude: grad, r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn only_wired_dimensions_are_essential() {
        // w1 nonzero on dims 0 and 1 only; the decision needs both.
        let mut p = ProbeModel::zeros(4, 2, 0);
        p.w1 = Tensor::matrix(4, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        p.w2 = vec![1.0, 1.0];
        p.b2 = -1.0;
        let inputs = vec![
            vec![2.0, 0.0, 5.0, 5.0],
            vec![0.0, 2.0, 5.0, 5.0],
            vec![0.0, 0.0, 5.0, 5.0],
            vec![-1.0, -1.0, 5.0, 5.0],
        ];
        let rep = input_dim_ablation(&p, &inputs).unwrap();
        assert_eq!(rep.essential, vec![0, 1]);
        assert_eq!(rep.top_k, minimal_top_k_linear(&p, &inputs));
        assert_eq!(importance(&p)[2], 0.0);
    }
}
