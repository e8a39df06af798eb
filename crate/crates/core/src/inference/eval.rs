//! Bookkeeping over per-question pass/fail outcomes.

use std::collections::HashMap;

use crate::error::{Result, SstError};

/// Per-question outcomes at flat depths `1..=i_max` and at staged depths.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PassFailMatrix {
    /// `flat[q][i - 1]`: question `q` passes when every turn uses depth `i`.
    pub flat: Vec<Vec<bool>>,
    /// `staged[q][k - 1]`: outcome of the stage-`k` run.
    pub staged: Vec<Vec<bool>>,
}

impl PassFailMatrix {
    pub fn questions(&self) -> usize {
        self.flat.len().max(self.staged.len())
    }

    pub fn i_max(&self) -> usize {
        self.flat.first().or(self.staged.first()).map_or(0, Vec::len)
    }

    /// Shallowest staged depth that solves the question.
    pub fn correct_depth(&self, q: usize) -> Option<usize> {
        self.staged.get(q)?.iter().position(|p| *p).map(|i| i + 1)
    }

    /// Staged capacity per stage: fraction of questions solved at any depth ≤ k.
    pub fn staged_capacities(&self) -> Result<Vec<f64>> {
        staged_compute(&self.staged)
    }
}

/// Stage-`k` capacity is the fraction of questions with a pass at any depth
/// `≤ k`; nondecreasing by construction.
pub fn staged_compute(outcomes: &[Vec<bool>]) -> Result<Vec<f64>> {
    let Some(first) = outcomes.first() else {
        return Ok(Vec::new());
    };
    let depth = first.len();
    if outcomes.iter().any(|o| o.len() != depth) {
        return Err(SstError::Contract("ragged outcome matrix".into()));
    }
    let n = outcomes.len() as f64;
    Ok((1..=depth)
        .map(|k| outcomes.iter().filter(|o| o[..k].iter().any(|p| *p)).count() as f64 / n)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatReport {
    pub questions: usize,
    pub passes_reference: usize,
    pub passes: usize,
    pub accuracy: f64,
    /// pass at depth 1, fail at depth k
    pub regressions: usize,
    /// fail at depth 1, pass at depth k
    pub recoveries: usize,
    /// `accuracy(k) − accuracy(1)`
    pub delta: f64,
}

/// Paired comparison of flat depth `k` against depth 1.
pub fn flat_depth_report(depth1: &[bool], depth_k: &[bool]) -> Result<FlatReport> {
    if depth1.len() != depth_k.len() {
        return Err(SstError::Contract(format!("{} depth-1 outcomes vs {} paired outcomes", depth1.len(), depth_k.len())));
    }
    if depth1.is_empty() {
        return Err(SstError::Contract("no questions".into()));
    }
    let n = depth1.len();
    let regressions = depth1.iter().zip(depth_k).filter(|(a, b)| **a && !**b).count();
    let recoveries = depth1.iter().zip(depth_k).filter(|(a, b)| !**a && **b).count();
    let passes_reference = depth1.iter().filter(|p| **p).count();
    let passes = depth_k.iter().filter(|p| **p).count();
    Ok(FlatReport {
        questions: n,
        passes_reference,
        passes,
        accuracy: passes as f64 / n as f64,
        regressions,
        recoveries,
        delta: (passes as f64 - passes_reference as f64) / n as f64,
    })
}

/// `(sst − base) / (N − base)`: share of the baseline's errors fixed.
pub fn error_correction(sst_correct: usize, base_correct: usize, n: usize) -> Result<f64> {
    if sst_correct > n || base_correct > n {
        return Err(SstError::Contract(format!("counts ({sst_correct}, {base_correct}) exceed N = {n}")));
    }
    if base_correct == n {
        return Err(SstError::Contract("baseline solves every item; nothing to correct".into()));
    }
    Ok((sst_correct as f64 - base_correct as f64) / (n - base_correct) as f64)
}

/// Sentences of a turn: split on `.`, `!`, `?`, trimmed, those shorter than
/// 20 characters dropped.
pub fn sentences(text: &str) -> Vec<&str> {
    text.split(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| s.chars().count() >= 20)
        .collect()
}

/// Mean over turns of the fraction of sentences occurring more than once
/// in their turn.
pub fn repetition_metric(turns: &[&str]) -> f64 {
    if turns.is_empty() {
        return 0.0;
    }
    let per_turn = turns.iter().map(|t| {
        let s = sentences(t);
        if s.is_empty() {
            return 0.0;
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for x in &s {
            *counts.entry(x).or_default() += 1;
        }
        s.iter().filter(|x| counts[*x] > 1).count() as f64 / s.len() as f64
    });
    per_turn.sum::<f64>() / turns.len() as f64
}
