//! The two training-time forward paths: exact sequential recurrence (the
//! BPTT oracle) and the two-pass scan approximation.

use crate::error::{Result, SstError};
use crate::model::config::{Mode, ModelConfig};
use crate::model::graph::{self, VarWeights};
use crate::model::SstParams;
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrainPath {
    Sequential,
    TwoPass,
}

impl std::fmt::Display for TrainPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainPath::Sequential => "sequential",
            TrainPath::TwoPass => "two_pass",
        })
    }
}

impl std::str::FromStr for TrainPath {
    type Err = SstError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(TrainPath::Sequential),
            "two_pass" => Ok(TrainPath::TwoPass),
            other => Err(SstError::Config(format!("unknown path {other:?}"))),
        }
    }
}

/// Nodes produced by one recorded forward.
#[derive(Clone, Debug)]
pub struct GraphOutput {
    /// `[T × V]`
    pub logits: Var,
    /// Per layer, `[T × d]`.
    pub post_attention: Vec<Var>,
    pub ffn_inputs: Vec<Var>,
    pub outputs: Vec<Var>,
    /// Blend-free pass-1 outputs (two-pass only).
    pub pass1_outputs: Option<Vec<Var>>,
    /// Full-stack forwards executed.
    pub stack_passes: usize,
}

/// Records `path` on `tape`. `stop_grad_pass1` cuts the gradient between
/// pass 1 and the scan (a test switch; ignored by the sequential path).
pub fn record(
    tape: &mut Tape,
    cfg: &ModelConfig,
    w: &VarWeights,
    tokens: &[u32],
    path: TrainPath,
    stop_grad_pass1: bool,
) -> Result<GraphOutput> {
    let ids = graph::check_tokens(cfg, tokens)?;
    if cfg.mode == Mode::Baseline {
        return Ok(plain_stack(tape, cfg, w, &ids));
    }
    match path {
        TrainPath::Sequential => Ok(sequential(tape, cfg, w, &ids)),
        TrainPath::TwoPass => Ok(two_pass(tape, cfg, w, &ids, stop_grad_pass1)),
    }
}

/// One stack forward with the blend skipped.
fn plain_stack(tape: &mut Tape, cfg: &ModelConfig, w: &VarWeights, ids: &[usize]) -> GraphOutput {
    let mut x = graph::embed(tape, w, ids);
    let (mut post, mut inputs, mut outputs) = (Vec::new(), Vec::new(), Vec::new());
    for lw in &w.layers {
        let h = graph::attention(tape, cfg, lw, x);
        let o = graph::ffn(tape, lw, h);
        post.push(h);
        inputs.push(h);
        outputs.push(o);
        x = o;
    }
    let logits = graph::head(tape, w, x);
    GraphOutput { logits, post_attention: post, ffn_inputs: inputs, outputs, pass1_outputs: None, stack_passes: 1 }
}

/// Exact recurrence at depth 1. Layer by layer: attention over all
/// positions, then the blend/FFN chain position by position.
fn sequential(tape: &mut Tape, cfg: &ModelConfig, w: &VarWeights, ids: &[usize]) -> GraphOutput {
    let d = cfg.d_model;
    let t_len = ids.len();
    let mut x = graph::embed(tape, w, ids);
    let (mut post, mut inputs, mut outputs) = (Vec::new(), Vec::new(), Vec::new());
    let zero = tape.constant(Tensor::zeros(&[1, d]));
    for lw in &w.layers {
        let h = graph::attention(tape, cfg, lw, x);
        let alpha = graph::alpha(tape, cfg, lw);
        let mut state = zero;
        let mut h_rows = Vec::with_capacity(t_len);
        let mut o_rows = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let ht = tape.rows(h, t, 1);
            let blended = graph::blend(tape, lw, alpha, ht, state);
            let o = graph::ffn(tape, lw, blended);
            h_rows.push(blended);
            o_rows.push(o);
            state = o;
        }
        let h_tilde = tape.concat(&h_rows);
        let o = tape.concat(&o_rows);
        post.push(h);
        inputs.push(h_tilde);
        outputs.push(o);
        x = o;
    }
    let logits = graph::head(tape, w, x);
    GraphOutput { logits, post_attention: post, ffn_inputs: inputs, outputs, pass1_outputs: None, stack_passes: 1 }
}

/// Pass 1 without the blend; per layer scan with `A = 0, B = o⁽¹⁾`, shift
/// right; pass 2 blends the shifted states. Logits come from pass 2.
fn two_pass(tape: &mut Tape, cfg: &ModelConfig, w: &VarWeights, ids: &[usize], stop_grad: bool) -> GraphOutput {
    let first = plain_stack(tape, cfg, w, ids);
    let t_len = ids.len();
    let zeros = tape.constant(Tensor::zeros(&[t_len, cfg.d_model]));
    let mut x = graph::embed(tape, w, ids);
    let (mut post, mut inputs, mut outputs) = (Vec::new(), Vec::new(), Vec::new());
    for (lw, &o1) in w.layers.iter().zip(&first.outputs) {
        let b = if stop_grad { tape.detach(o1) } else { o1 };
        let s = tape.scan(zeros, b);
        let s = tape.shift_right(s);
        let h = graph::attention(tape, cfg, lw, x);
        let alpha = graph::alpha(tape, cfg, lw);
        let h_tilde = graph::blend(tape, lw, alpha, h, s);
        let o = graph::ffn(tape, lw, h_tilde);
        post.push(h);
        inputs.push(h_tilde);
        outputs.push(o);
        x = o;
    }
    let logits = graph::head(tape, w, x);
    GraphOutput {
        logits,
        post_attention: post,
        ffn_inputs: inputs,
        outputs,
        pass1_outputs: Some(first.outputs),
        stack_passes: 2,
    }
}

/// Values of a forward, detached from any tape.
#[derive(Clone, Debug, PartialEq)]
pub struct PathOutput {
    pub logits: Tensor,
    pub post_attention: Vec<Tensor>,
    pub ffn_inputs: Vec<Tensor>,
    pub outputs: Vec<Tensor>,
    pub pass1_outputs: Option<Vec<Tensor>>,
    pub stack_passes: usize,
}

fn evaluate(cfg: &ModelConfig, params: &SstParams, tokens: &[u32], path: TrainPath) -> Result<PathOutput> {
    let mut tape = Tape::new();
    let w = graph::bind_frozen(&mut tape, params);
    let g = record(&mut tape, cfg, &w, tokens, path, false)?;
    let vals = |vs: &[Var]| vs.iter().map(|v| tape.value(*v).clone()).collect::<Vec<_>>();
    Ok(PathOutput {
        logits: tape.value(g.logits).clone(),
        post_attention: vals(&g.post_attention),
        ffn_inputs: vals(&g.ffn_inputs),
        outputs: vals(&g.outputs),
        pass1_outputs: g.pass1_outputs.as_deref().map(vals),
        stack_passes: g.stack_passes,
    })
}

/// Exact recurrence over a whole sequence at iteration depth 1.
pub fn sequential_forward(cfg: &ModelConfig, params: &SstParams, tokens: &[u32]) -> Result<PathOutput> {
    evaluate(cfg, params, tokens, TrainPath::Sequential)
}

/// Two-pass approximation over a whole sequence.
pub fn two_pass_forward(cfg: &ModelConfig, params: &SstParams, tokens: &[u32]) -> Result<PathOutput> {
    evaluate(cfg, params, tokens, TrainPath::TwoPass)
}

/// `(row, target)` pairs for next-token prediction: logits at `t` predict
/// token `t + 1`, counted where `mask[t + 1]` is set.
pub fn loss_rows(tokens: &[u32], mask: &[bool]) -> Result<Vec<(usize, usize)>> {
    if tokens.len() != mask.len() {
        return Err(SstError::Dimension(format!("{} tokens vs {} mask entries", tokens.len(), mask.len())));
    }
    let rows: Vec<(usize, usize)> =
        (1..tokens.len()).filter(|&t| mask[t]).map(|t| (t - 1, tokens[t] as usize)).collect();
    if rows.is_empty() {
        return Err(SstError::Contract("label mask selects no predicted position".into()));
    }
    Ok(rows)
}

/// Mean next-token NLL over masked positions, recorded on the tape.
pub fn masked_ce_loss(tape: &mut Tape, logits: Var, tokens: &[u32], mask: &[bool]) -> Result<Var> {
    let rows = loss_rows(tokens, mask)?;
    tape.masked_ce(logits, &rows)
}

/// Loss and parameter gradients for one example.
pub fn loss_and_grads(
    cfg: &ModelConfig,
    params: &SstParams,
    tokens: &[u32],
    mask: &[bool],
    path: TrainPath,
    stop_grad_pass1: bool,
) -> Result<(f64, SstParams, usize)> {
    let mut tape = Tape::new();
    let w = graph::bind(&mut tape, params);
    let g = record(&mut tape, cfg, &w, tokens, path, stop_grad_pass1)?;
    let loss = masked_ce_loss(&mut tape, g.logits, tokens, mask)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), w.map(|_, v| grads.wrt(*v)), g.stack_passes))
}

/// Loss only, without recording gradients.
pub fn loss_value(cfg: &ModelConfig, params: &SstParams, tokens: &[u32], mask: &[bool], path: TrainPath) -> Result<f64> {
    let mut tape = Tape::new();
    let w = graph::bind_frozen(&mut tape, params);
    let g = record(&mut tape, cfg, &w, tokens, path, false)?;
    let loss = masked_ce_loss(&mut tape, g.logits, tokens, mask)?;
    Ok(tape.value(loss).item())
}
