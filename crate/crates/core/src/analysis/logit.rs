//! How the output distribution reorganises between two depths, computed
//! from stored top-K lists.

use super::overlap::Band;
use super::stats::wilson_ci;
use crate::error::{Result, SstError};
use crate::traceio::TraceArchive;

/// Lists shorter than this put an analysis in degraded mode.
pub const FULL_TOP_K: usize = 100;

/// One position compared at a lower depth `a` and a higher depth `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitRecord {
    pub position: usize,
    pub argmax_changed: bool,
    /// Top-1 minus top-2 logprob at depth `a` (nats).
    pub gap: f64,
    /// `|lp_b(w_b) − lp_a(w_b)|` for the depth-`b` winner `w_b`.
    pub top1_shift: f64,
    /// `w_b` missing from the depth-`a` list: the shift uses that list's
    /// smallest logprob and is a lower bound.
    pub top1_shift_bound: bool,
    /// Tokens in the depth-`b` list absent from the depth-`a` list.
    pub replacements: usize,
    /// `lp_a(w_a) − lp_b(w_a)`; when `w_a` left the list, bounded below
    /// using the list's smallest logprob.
    pub suppression: f64,
    pub suppression_bound: bool,
    /// 1-based rank of `w_b` in the depth-`a` list.
    pub new_winner_rank: Option<usize>,
}

fn lookup(list: &[(u32, f32)], id: u32) -> Option<(usize, f64)> {
    list.iter().position(|(t, _)| *t == id).map(|r| (r, list[r].1 as f64))
}

/// Compares two sorted top-K lists.
pub fn compare_lists(position: usize, a: &[(u32, f32)], b: &[(u32, f32)]) -> Result<LogitRecord> {
    if a.len() < 2 || b.is_empty() {
        return Err(SstError::Contract("logit comparison needs at least two entries at the lower depth".into()));
    }
    let (wa, lpa) = (a[0].0, a[0].1 as f64);
    let (wb, lpb) = (b[0].0, b[0].1 as f64);
    let a_floor = a.last().unwrap().1 as f64;
    let b_floor = b.last().unwrap().1 as f64;
    let (top1_shift, top1_shift_bound, new_winner_rank) = match lookup(a, wb) {
        Some((r, lp)) => ((lpb - lp).abs(), false, Some(r + 1)),
        None => ((lpb - a_floor).abs(), true, None),
    };
    let (suppression, suppression_bound) = match lookup(b, wa) {
        Some((_, lp)) => (lpa - lp, false),
        None => (lpa - b_floor, true),
    };
    let replacements = b.iter().filter(|(t, _)| lookup(a, *t).is_none()).count();
    Ok(LogitRecord {
        position,
        argmax_changed: wa != wb,
        gap: lpa - a[1].1 as f64,
        top1_shift,
        top1_shift_bound,
        replacements,
        suppression,
        suppression_bound,
        new_winner_rank,
    })
}

/// Within one run: every recorded position, iteration `a` against `b`.
pub fn logit_dynamics_within(trace: &TraceArchive, iter_a: usize, iter_b: usize) -> Result<Vec<LogitRecord>> {
    for i in [iter_a, iter_b] {
        if i == 0 || i > trace.iterations {
            return Err(SstError::Contract(format!("iteration {i} not recorded")));
        }
    }
    (0..trace.positions).map(|p| compare_lists(p, trace.top(iter_a, p), trace.top(iter_b, p))).collect()
}

/// Across two runs of the same question (final iterations compared),
/// restricted to pre-divergence positions: those whose every earlier
/// argmax agrees between the runs.
pub fn logit_dynamics_cross(a: &TraceArchive, b: &TraceArchive) -> Result<Vec<LogitRecord>> {
    let n = a.positions.min(b.positions);
    let mut out = Vec::new();
    for p in 0..n {
        let (la, lb) = (a.top(a.iterations, p), b.top(b.iterations, p));
        out.push(compare_lists(p, la, lb)?);
        if la[0].0 != lb[0].0 {
            break;
        }
    }
    Ok(out)
}

/// First position whose argmax differs between two runs.
pub fn first_divergence(a: &TraceArchive, b: &TraceArchive) -> Option<usize> {
    (0..a.positions.min(b.positions)).find(|p| a.top(a.iterations, *p)[0].0 != b.top(b.iterations, *p)[0].0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogitSummary {
    pub n: usize,
    pub changed: usize,
    pub change_rate: f64,
    pub change_ci: (f64, f64),
    /// Gap exactly zero at stored precision.
    pub exact_ties: usize,
    pub mean_replacements: f64,
    /// Gap distribution for positions with `regime = true` and `false`.
    pub gap_flagged: Option<Band>,
    pub gap_unflagged: Option<Band>,
    pub degraded: bool,
}

pub fn summarize(records: &[LogitRecord], regime: &[bool], top_k: usize) -> Result<LogitSummary> {
    if records.is_empty() {
        return Err(SstError::Contract("no records to summarize".into()));
    }
    if regime.len() != records.len() {
        return Err(SstError::Dimension(format!("{} regime flags for {} records", regime.len(), records.len())));
    }
    let n = records.len();
    let changed = records.iter().filter(|r| r.argmax_changed).count();
    let band = |flag: bool| {
        let g: Vec<f64> = records.iter().zip(regime).filter(|(_, f)| **f == flag).map(|(r, _)| r.gap).collect();
        (!g.is_empty()).then(|| Band::of(&g))
    };
    Ok(LogitSummary {
        n,
        changed,
        change_rate: changed as f64 / n as f64,
        change_ci: wilson_ci(changed as u64, n as u64)?,
        exact_ties: records.iter().filter(|r| r.gap == 0.0).count(),
        mean_replacements: records.iter().map(|r| r.replacements as f64).sum::<f64>() / n as f64,
        gap_flagged: band(true),
        gap_unflagged: band(false),
        degraded: top_k < FULL_TOP_K,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OrderClass {
    /// Low overlap first appears at the divergence position.
    Simultaneous,
    /// Low overlap appears strictly before the divergence.
    Precedes,
    /// No divergence inside the recorded window.
    BeyondWindow,
    /// Divergence without any earlier or simultaneous low-overlap position.
    Exception,
}

/// Orders the first low-overlap position against the first argmax
/// divergence inside a window of `window` positions.
pub fn causal_ordering(first_low: Option<usize>, first_divergence: Option<usize>, window: usize) -> OrderClass {
    match first_divergence.filter(|d| *d < window) {
        None => OrderClass::BeyondWindow,
        Some(d) => match first_low {
            Some(l) if l == d => OrderClass::Simultaneous,
            Some(l) if l < d => OrderClass::Precedes,
            _ => OrderClass::Exception,
        },
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OrderCounts {
    pub simultaneous: usize,
    pub precedes: usize,
    pub beyond_window: usize,
    pub exceptions: usize,
}

pub fn count_orderings(classes: &[OrderClass]) -> OrderCounts {
    let mut c = OrderCounts::default();
    for k in classes {
        match k {
            OrderClass::Simultaneous => c.simultaneous += 1,
            OrderClass::Precedes => c.precedes += 1,
            OrderClass::BeyondWindow => c.beyond_window += 1,
            OrderClass::Exception => c.exceptions += 1,
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_swapped_lists() {
        let a = vec![(4, -0.5f32), (1, -1.5), (9, -2.0)];
        let r = compare_lists(0, &a, &a).unwrap();
        assert!(!r.argmax_changed);
        assert_eq!((r.replacements, r.suppression, r.top1_shift), (0, 0.0, 0.0));
        let b = vec![(1, -0.5f32), (4, -1.5), (9, -2.0)];
        let r = compare_lists(0, &a, &b).unwrap();
        assert!(r.argmax_changed);
        assert_eq!(r.replacements, 0);
        assert_eq!(r.new_winner_rank, Some(2));
    }

    #[test]
    fn ordering_classes() {
        assert_eq!(causal_ordering(Some(0), Some(0), 10), OrderClass::Simultaneous);
        assert_eq!(causal_ordering(Some(2), Some(5), 10), OrderClass::Precedes);
        assert_eq!(causal_ordering(Some(2), None, 10), OrderClass::BeyondWindow);
        assert_eq!(causal_ordering(Some(2), Some(12), 10), OrderClass::BeyondWindow);
        assert_eq!(causal_ordering(Some(6), Some(5), 10), OrderClass::Exception);
        assert_eq!(causal_ordering(None, Some(5), 10), OrderClass::Exception);
    }
}
