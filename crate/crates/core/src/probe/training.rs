use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::labels::ProbeItem;
use super::model::ProbeModel;
use crate::analysis::stats::{binomial_tail, PValue};
use crate::error::{Result, SstError};
use crate::inference::{DepthPolicy, GenerationRun, Session, TraceSpec};
use crate::model::{SstModel, StepRecord};
use crate::numerics::{Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Model layer the items were read from.
    pub layer: usize,
}

impl Default for ProbeTrainConfig {
    fn default() -> Self {
        Self { hidden: 10, epochs: 60, batch: 32, lr: 1e-3, seed: 42, layer: 0 }
    }
}

/// Minority-class items are repeated cyclically until both classes are the
/// same size.
fn balanced(items: &[&ProbeItem]) -> Vec<usize> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..items.len()).partition(|i| items[*i].must_halt);
    let (major, minor) = if pos.len() >= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut order = major.clone();
    order.extend((0..major.len()).map(|i| minor[i % minor.len()]));
    order
}

/// BCE-trained probe with Adam; deterministic for a given seed.
pub fn train_probe(items: &[&ProbeItem], cfg: &ProbeTrainConfig) -> Result<ProbeModel> {
    let d = items.first().ok_or_else(|| SstError::Contract("no probe items".into()))?.hidden.len();
    let positives = items.iter().filter(|i| i.must_halt).count();
    if positives == 0 || positives == items.len() {
        return Err(SstError::Contract("probe training needs both MUST_HALT and SAFE items".into()));
    }
    if cfg.batch == 0 || cfg.hidden == 0 {
        return Err(SstError::Config("probe batch and hidden width must be positive".into()));
    }
    let mut model = ProbeModel::init(d, cfg.hidden, cfg.layer, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = balanced(items);

    let (b1, b2) = (0.9, 0.999);
    let mut m = vec![vec![0.0; d * cfg.hidden], vec![0.0; cfg.hidden], vec![0.0; cfg.hidden], vec![0.0]];
    let mut v = m.clone();
    let mut t = 0i32;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let rows: Vec<Vec<f64>> = chunk.iter().map(|i| items[*i].hidden.clone()).collect();
            let targets: Vec<f64> = chunk.iter().map(|i| f64::from(u8::from(items[*i].must_halt))).collect();
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::from_rows(&rows)?);
            let w1 = tape.leaf(model.w1.clone());
            let bb1 = tape.leaf(Tensor::vector(model.b1.clone()));
            let w2 = tape.leaf(Tensor::matrix(cfg.hidden, 1, model.w2.clone())?);
            let bb2 = tape.leaf(Tensor::vector(vec![model.b2]));
            let z = tape.matmul(x, w1);
            let z = tape.add_row(z, bb1);
            let a = tape.silu(z);
            let out = tape.matmul(a, w2);
            let out = tape.add_row(out, bb2);
            let loss = tape.bce_with_logits(out, &targets);
            let g = tape.backward(loss)?;

            t += 1;
            let grads = [g.wrt(w1), g.wrt(bb1), g.wrt(w2), g.wrt(bb2)];
            let mut b2_slot = [model.b2];
            let slots: [&mut [f64]; 4] =
                [model.w1.data_mut(), &mut model.b1, &mut model.w2, &mut b2_slot];
            for (k, (p, gr)) in slots.into_iter().zip(&grads).enumerate() {
                for (j, (p, gv)) in p.iter_mut().zip(gr.data()).enumerate() {
                    m[k][j] = b1 * m[k][j] + (1.0 - b1) * gv;
                    v[k][j] = b2 * v[k][j] + (1.0 - b2) * gv * gv;
                    let mh = m[k][j] / (1.0 - b1.powi(t));
                    let vh = v[k][j] / (1.0 - b2.powi(t));
                    *p -= cfg.lr * mh / (vh.sqrt() + 1e-8);
                }
            }
            model.b2 = b2_slot[0];
        }
    }
    Ok(model)
}

/// Questions with at least one MUST_HALT item, ascending.
pub fn must_halt_questions(items: &[ProbeItem]) -> Vec<usize> {
    let mut q: Vec<usize> = items.iter().filter(|i| i.must_halt).map(|i| i.question).collect();
    q.sort_unstable();
    q.dedup();
    q
}

/// A held-out question counts as correct when every MUST_HALT item of it
/// triggers a halt.
pub fn default_evaluator(probe: &ProbeModel, held_out: &[&ProbeItem]) -> bool {
    held_out.iter().filter(|i| i.must_halt).all(|i| probe.decide(&i.hidden).0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoocvReport {
    /// `(held-out question, correct)` per fold.
    pub folds: Vec<(usize, bool)>,
    pub correct: usize,
    /// Fraction of all items the probe trained on everything halts on.
    pub base_rate: f64,
    pub p: PValue,
}

impl LoocvReport {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.folds.len() as f64
    }
}

/// Leave-one-question-out over the MUST_HALT questions. Folds run in
/// parallel; each is seeded identically, so results do not depend on
/// scheduling.
pub fn loocv<E>(items: &[ProbeItem], cfg: &ProbeTrainConfig, evaluate: E) -> Result<LoocvReport>
where
    E: Fn(&ProbeModel, &[&ProbeItem]) -> bool + Sync,
{
    let questions = must_halt_questions(items);
    if questions.len() < 2 {
        return Err(SstError::Contract(format!("LOOCV needs at least two MUST_HALT questions, got {}", questions.len())));
    }
    let all: Vec<&ProbeItem> = items.iter().collect();
    let full = train_probe(&all, cfg)?;
    let base_rate = items.iter().filter(|i| full.decide(&i.hidden).0).count() as f64 / items.len() as f64;

    let folds = questions
        .par_iter()
        .map(|&q| {
            let (held, train): (Vec<&ProbeItem>, Vec<&ProbeItem>) = items.iter().partition(|i| i.question == q);
            debug_assert!(train.iter().all(|i| i.question != q));
            let probe = train_probe(&train, cfg)?;
            Ok((q, evaluate(&probe, &held)))
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = folds.iter().filter(|f| f.1).count();
    let p = binomial_tail(correct as u64, folds.len() as u64, base_rate)?;
    Ok(LoocvReport { folds, correct, base_rate, p })
}

/// One row of a layer sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerResult {
    pub layer: usize,
    pub overthinks: usize,
    pub p: f64,
}

/// Shallowest layer with no overthinks and a significant LOOCV result.
pub fn select_layer(results: &[LayerResult]) -> Option<usize> {
    results.iter().filter(|r| r.overthinks == 0 && r.p < 0.05).map(|r| r.layer).min()
}

/// Halts when the probe fires on the position-0 hidden state at its layer.
pub struct ProbePolicy<'p> {
    pub probe: &'p ProbeModel,
    pub i_max: usize,
}

impl DepthPolicy for ProbePolicy<'_> {
    fn max_depth(&self) -> usize {
        self.i_max
    }
    fn halt(&mut self, _: usize, record: &StepRecord) -> bool {
        record.hidden.get(self.probe.layer).is_some_and(|h| self.probe.decide(h).0)
    }
}

/// Multi-turn generation with probe-driven halting.
pub fn probe_driven_generate(
    model: &SstModel,
    probe: &ProbeModel,
    turns: &[(Vec<u32>, usize)],
    i_max: usize,
    spec: &TraceSpec,
) -> Result<Vec<GenerationRun>> {
    if probe.layer >= model.config.layers || probe.input_dim() != model.config.d_model {
        return Err(SstError::Dimension("probe does not fit the model".into()));
    }
    let mut policy = ProbePolicy { probe, i_max };
    let mut session = Session::new(model);
    turns.iter().map(|(prompt, n)| session.turn(prompt, *n, &mut policy, spec)).collect()
}
