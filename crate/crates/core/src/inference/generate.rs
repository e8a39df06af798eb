//! Greedy generation with iterative refinement.
//!
//! Prompt prefill runs the exact recurrence one position at a time at
//! depth 1. The last input position of a turn is its first generated
//! position: it is iterated, and its argmax is the first new token.

use crate::error::{Result, SstError};
use crate::model::{KvCache, LatentStateCache, SstModel, StepRecord};
use crate::numerics::{argmax, softmax_logprobs};

/// Decides the iteration depth. Consulted at the first generated position of
/// each turn until it halts; after a halt the depth is fixed for the rest of
/// the question.
pub trait DepthPolicy {
    fn max_depth(&self) -> usize;
    /// Called after iteration `iteration` (1-based) at a turn's first
    /// generated position.
    fn halt(&mut self, iteration: usize, record: &StepRecord) -> bool;
}

/// Uniform depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Flat(pub usize);

impl DepthPolicy for Flat {
    fn max_depth(&self) -> usize {
        self.0
    }
    fn halt(&mut self, iteration: usize, _: &StepRecord) -> bool {
        iteration >= self.0
    }
}

/// What to keep from a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceSpec {
    /// Generated positions to record; `None` records all of them.
    pub positions: Option<usize>,
    pub top_k: usize,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self { positions: Some(10), top_k: 100 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// Post-FFN output per layer.
    pub hidden: Vec<Vec<f64>>,
    /// Sorted descending by logprob, ties by ascending id.
    pub top: Vec<(u32, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositionRecord {
    pub position: usize,
    pub input: u32,
    pub iterations: Vec<IterationRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRun {
    pub prompt: Vec<u32>,
    pub generated: Vec<u32>,
    /// Depth used for each generated token.
    pub depths: Vec<usize>,
    /// Depth-1 post-FFN outputs per prefilled position and layer.
    pub prefill_hidden: Vec<Vec<Vec<f64>>>,
    pub records: Vec<PositionRecord>,
    /// KV checksum comparisons made while iterating.
    pub kv_checks: usize,
}

impl GenerationRun {
    /// The single depth used by every recorded position, if uniform.
    pub fn uniform_depth(&self) -> Option<usize> {
        let first = self.records.first()?.iterations.len();
        self.records.iter().all(|r| r.iterations.len() == first).then_some(first)
    }
}

/// The `k` most probable tokens with their log-probabilities.
pub fn top_k_logprobs(logits: &[f64], k: usize) -> Vec<(u32, f64)> {
    let lp = softmax_logprobs(logits);
    let mut idx: Vec<(u32, f64)> = lp.iter().enumerate().map(|(i, v)| (i as u32, *v)).collect();
    idx.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    idx.truncate(k);
    idx
}

/// One question: caches and depth state persisting across turns.
pub struct Session<'m> {
    model: &'m SstModel,
    lsc: LatentStateCache,
    kv: KvCache,
    position: usize,
    /// Last generated token, not yet fed back.
    pending: Option<u32>,
    fixed_depth: Option<usize>,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m SstModel) -> Self {
        let (lsc, kv) = model.new_caches();
        Self { model, lsc, kv, position: 0, pending: None, fixed_depth: None }
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn fixed_depth(&self) -> Option<usize> {
        self.fixed_depth
    }

    pub fn state(&self) -> &LatentStateCache {
        &self.lsc
    }

    /// Feeds `prompt` (after any pending generated token) and generates up to
    /// `max_new` tokens.
    pub fn turn(
        &mut self,
        prompt: &[u32],
        max_new: usize,
        policy: &mut dyn DepthPolicy,
        spec: &TraceSpec,
    ) -> Result<GenerationRun> {
        let input: Vec<u32> = self.pending.into_iter().chain(prompt.iter().copied()).collect();
        if input.is_empty() {
            return Err(SstError::Contract("empty prompt".into()));
        }
        if policy.max_depth() == 0 {
            return Err(SstError::Contract("iteration depth must be at least 1".into()));
        }
        let cap = self.model.config.max_seq;
        let last = self.position + input.len() - 1 + max_new.saturating_sub(1);
        if last >= cap {
            return Err(SstError::Capacity { position: last, capacity: cap });
        }
        let prefill_len = if max_new == 0 { input.len() } else { input.len() - 1 };
        let mut run = GenerationRun {
            prompt: prompt.to_vec(),
            generated: Vec::with_capacity(max_new),
            depths: Vec::with_capacity(max_new),
            prefill_hidden: Vec::with_capacity(prefill_len),
            records: Vec::new(),
            kv_checks: 0,
        };
        for &tok in &input[..prefill_len] {
            let rec = self.model.forward_position(tok, self.position, &mut self.lsc, &mut self.kv)?;
            run.prefill_hidden.push(rec.hidden);
            self.position += 1;
        }
        self.pending = None;
        if max_new == 0 {
            return Ok(run);
        }

        let mut token = *input.last().expect("nonempty");
        let mut turn_depth = self.fixed_depth;
        for k in 0..max_new {
            let t = self.position;
            let before = self.kv.checksum(t);
            let record = spec.positions.is_none_or(|n| k < n);
            let mut iterations = Vec::new();
            let mut depth = 0;
            let logits = loop {
                depth += 1;
                let rec = self.model.forward_position(token, t, &mut self.lsc, &mut self.kv)?;
                run.kv_checks += 1;
                if self.kv.checksum(t) != before {
                    return Err(SstError::Contract(format!("KV entries before position {t} changed while iterating")));
                }
                let stop = match turn_depth {
                    Some(d) => depth >= d,
                    None => {
                        if policy.halt(depth, &rec) {
                            self.fixed_depth = Some(depth);
                            turn_depth = Some(depth);
                            true
                        } else if depth >= policy.max_depth() {
                            turn_depth = Some(depth);
                            true
                        } else {
                            false
                        }
                    }
                };
                if record {
                    iterations.push(IterationRecord { top: top_k_logprobs(&rec.logits, spec.top_k), hidden: rec.hidden });
                }
                if stop {
                    break rec.logits;
                }
            };
            if record {
                run.records.push(PositionRecord { position: t, input: token, iterations });
            }
            token = argmax(&logits) as u32;
            run.generated.push(token);
            run.depths.push(depth);
            self.position += 1;
        }
        self.pending = Some(token);
        Ok(run)
    }
}

/// Single-turn greedy generation at a flat depth.
pub fn generate(model: &SstModel, prompt: &[u32], max_new: usize, iters: usize, spec: &TraceSpec) -> Result<GenerationRun> {
    Session::new(model).turn(prompt, max_new, &mut Flat(iters), spec)
}

/// Multi-turn generation; the state stream persists across turns.
pub fn generate_turns(
    model: &SstModel,
    turns: &[(Vec<u32>, usize)],
    policy: &mut dyn DepthPolicy,
    spec: &TraceSpec,
) -> Result<Vec<GenerationRun>> {
    let mut session = Session::new(model);
    turns.iter().map(|(prompt, n)| session.turn(prompt, *n, policy, spec)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_breaks_ties_by_id() {
        let top = top_k_logprobs(&[1.0, 3.0, 3.0, 0.0], 3);
        assert_eq!(top.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 2, 0]);
    }
}
