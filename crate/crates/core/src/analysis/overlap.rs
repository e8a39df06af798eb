//! Top-k magnitude overlap between iterations, basin labels, per-layer
//! percentile profiles and iteration-to-iteration L2 deltas.

use super::stats::percentile_sorted;
use crate::error::{Result, SstError};
use crate::traceio::TraceArchive;

/// Indices of the `k` largest `|v|`, ties to the lower index.
pub fn top_k_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*b].abs().total_cmp(&v[*a].abs()).then(a.cmp(b)));
    idx.truncate(k);
    idx
}

/// Fraction of the `k` largest-magnitude dimensions shared by `u` and `v`.
pub fn topk_overlap(u: &[f64], v: &[f64], k: usize) -> Result<f64> {
    if u.len() != v.len() {
        return Err(SstError::Dimension(format!("overlap of lengths {} and {}", u.len(), v.len())));
    }
    if k == 0 || k > u.len() {
        return Err(SstError::Contract(format!("k = {k} outside 1..={}", u.len())));
    }
    let mut in_u = vec![false; u.len()];
    for i in top_k_indices(u, k) {
        in_u[i] = true;
    }
    let shared = top_k_indices(v, k).into_iter().filter(|i| in_u[*i]).count();
    Ok(shared as f64 / k as f64)
}

/// Overlap values indexed `[position][layer]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapGrid {
    pub values: Vec<Vec<f64>>,
}

impl OverlapGrid {
    pub fn positions(&self) -> usize {
        self.values.len()
    }

    pub fn layers(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }
}

fn check_iteration(trace: &TraceArchive, i: usize) -> Result<()> {
    if i == 0 || i > trace.iterations {
        return Err(SstError::Contract(format!("iteration {i} not recorded (have 1..={})", trace.iterations)));
    }
    Ok(())
}

pub fn overlap_grid(trace: &TraceArchive, iter_a: usize, iter_b: usize, k: usize) -> Result<OverlapGrid> {
    check_iteration(trace, iter_a)?;
    check_iteration(trace, iter_b)?;
    let values = (0..trace.positions)
        .map(|p| {
            (0..trace.layers)
                .map(|l| topk_overlap(&trace.hidden(iter_a, p, l), &trace.hidden(iter_b, p, l), k))
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(OverlapGrid { values })
}

/// `true` marks a low-overlap (basin-shift) cell: overlap below threshold.
pub fn basin_labels(grid: &OverlapGrid, threshold: f64) -> Vec<Vec<bool>> {
    grid.values.iter().map(|row| row.iter().map(|v| *v < threshold).collect()).collect()
}

/// How a position is flagged from its per-layer cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PositionRule {
    /// Any layer below threshold.
    AnyLayer,
    /// Any layer in `start..end` below threshold.
    Band { start: usize, end: usize },
}

pub fn position_labels(grid: &OverlapGrid, threshold: f64, rule: PositionRule) -> Vec<bool> {
    let (start, end) = match rule {
        PositionRule::AnyLayer => (0, usize::MAX),
        PositionRule::Band { start, end } => (start, end),
    };
    grid.values
        .iter()
        .map(|row| row.iter().enumerate().any(|(l, v)| l >= start && l < end && *v < threshold))
        .collect()
}

/// Percentile summary of one layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub n: usize,
    pub p5: f64,
    pub p10: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p| percentile_sorted(&v, p);
        Band { n: v.len(), p5: q(5.0), p10: q(10.0), p25: q(25.0), median: q(50.0), p75: q(75.0), p90: q(90.0), p95: q(95.0) }
    }
}

/// Per-layer bands over the positions selected by `labels`.
pub fn layer_profile(grid: &OverlapGrid, labels: &[bool]) -> Result<Vec<Band>> {
    if labels.len() != grid.positions() {
        return Err(SstError::Dimension(format!("{} labels for {} positions", labels.len(), grid.positions())));
    }
    if !labels.iter().any(|l| *l) {
        return Err(SstError::Contract("no labelled positions to profile".into()));
    }
    Ok((0..grid.layers())
        .map(|l| {
            let vals: Vec<f64> =
                grid.values.iter().zip(labels).filter(|(_, keep)| **keep).map(|(row, _)| row[l]).collect();
            Band::of(&vals)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct L2Delta {
    pub position: usize,
    /// Later iteration of the pair `(i − 1, i)`.
    pub iteration: usize,
    pub delta: f64,
    pub group: Option<String>,
}

/// `‖h_i − h_{i−1}‖₂` at one layer for every position and successive pair.
pub fn l2_delta_profile(trace: &TraceArchive, layer: usize, groups: Option<&[String]>) -> Result<Vec<L2Delta>> {
    if trace.iterations < 2 {
        return Err(SstError::Contract("need at least two recorded iterations".into()));
    }
    if layer >= trace.layers {
        return Err(SstError::Contract(format!("layer {layer} not recorded")));
    }
    if let Some(g) = groups {
        if g.len() != trace.positions {
            return Err(SstError::Dimension(format!("{} group labels for {} positions", g.len(), trace.positions)));
        }
    }
    let mut out = Vec::new();
    for p in 0..trace.positions {
        for i in 2..=trace.iterations {
            let (a, b) = (trace.hidden(i - 1, p, layer), trace.hidden(i, p, layer));
            let delta = a.iter().zip(&b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt();
            out.push(L2Delta { position: p, iteration: i, delta, group: groups.map(|g| g[p].clone()) });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_basics() {
        let u = [3.0, -1.0, 0.5, 2.0];
        assert_eq!(topk_overlap(&u, &u, 2).unwrap(), 1.0);
        assert_eq!(topk_overlap(&[1.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 1.0], 2).unwrap(), 0.0);
        assert!(topk_overlap(&u, &u, 5).is_err());
        // Ties go to the lower index.
        assert_eq!(top_k_indices(&[1.0, -1.0, 1.0], 2), vec![0, 1]);
    }
}
