//! Whole-sequence building blocks recorded on a [`Tape`]. Attention for a
//! layer never depends on the blend, so it is computed for all positions at
//! once; only the blend/FFN chain carries the cross-position recurrence.

use super::config::ModelConfig;
use super::params::{LayerWeights, ModelWeights, SstParams};
use crate::error::{Result, SstError};
use crate::numerics::functions::RMS_EPS;
use crate::numerics::{Tape, Tensor, Var};

pub type VarWeights = ModelWeights<Var>;

/// Records every parameter as a trainable leaf.
pub fn bind(tape: &mut Tape, params: &SstParams) -> VarWeights {
    params.map(|_, t| tape.leaf(t.clone()))
}

/// Records every parameter as a constant (no gradients).
pub fn bind_frozen(tape: &mut Tape, params: &SstParams) -> VarWeights {
    params.map(|_, t| tape.constant(t.clone()))
}

pub fn check_tokens(cfg: &ModelConfig, tokens: &[u32]) -> Result<Vec<usize>> {
    if tokens.is_empty() {
        return Err(SstError::Contract("empty token sequence".into()));
    }
    if tokens.len() > cfg.max_seq {
        return Err(SstError::Capacity { position: tokens.len() - 1, capacity: cfg.max_seq });
    }
    tokens
        .iter()
        .map(|&t| {
            if (t as usize) < cfg.vocab {
                Ok(t as usize)
            } else {
                Err(SstError::Vocabulary { token: t, vocab: cfg.vocab })
            }
        })
        .collect()
}

pub fn embed(tape: &mut Tape, w: &VarWeights, ids: &[usize]) -> Var {
    tape.embed(w.embed, ids)
}

/// `H = X + Attn(RMSNorm(X))` for rows at positions `0..T`.
pub fn attention(tape: &mut Tape, cfg: &ModelConfig, w: &LayerWeights<Var>, x: Var) -> Var {
    let t = tape.value(x).rows();
    let positions: Vec<usize> = (0..t).collect();
    let xn = tape.rms_norm(x, w.attn_norm, RMS_EPS);
    let q = tape.matmul(xn, w.wq);
    let k = tape.matmul(xn, w.wk);
    let v = tape.matmul(xn, w.wv);
    let q = tape.rope(q, &positions, cfg.n_heads, cfg.rope_base);
    let k = tape.rope(k, &positions, cfg.n_heads, cfg.rope_base);
    let a = tape.attention(q, k, v, cfg.n_heads, 0);
    let proj = tape.matmul(a, w.wo);
    tape.add(x, proj)
}

/// Blend coefficients as a `[d]` node.
pub fn alpha(tape: &mut Tape, cfg: &ModelConfig, w: &LayerWeights<Var>) -> Var {
    match cfg.force_alpha {
        Some(a) => tape.constant(Tensor::filled(&[cfg.d_model], a)),
        None => {
            let s = tape.sigmoid(w.blend_logits);
            tape.affine(s, cfg.alpha_max - cfg.alpha_min, cfg.alpha_min)
        }
    }
}

/// `H̃ = H + α ⊙ (RMSNorm(S) − H)` row-wise; zero rows of `S` are absent states.
pub fn blend(tape: &mut Tape, w: &LayerWeights<Var>, alpha: Var, h: Var, state: Var) -> Var {
    let n = tape.rms_norm(state, w.state_norm, RMS_EPS);
    let diff = tape.sub(n, h);
    let scaled = tape.mul_row(diff, alpha);
    tape.add(h, scaled)
}

/// `O = H̃ + Down(gelu(Gate(N)) ⊙ Up(N))`, `N = RMSNorm(H̃)`.
pub fn ffn(tape: &mut Tape, w: &LayerWeights<Var>, h_tilde: Var) -> Var {
    let n = tape.rms_norm(h_tilde, w.ffn_norm, RMS_EPS);
    let g = tape.matmul(n, w.w_gate);
    let g = tape.gelu(g);
    let u = tape.matmul(n, w.w_up);
    let inner = tape.mul(g, u);
    let down = tape.matmul(inner, w.w_down);
    tape.add(h_tilde, down)
}

/// Final norm and output head: `[T × V]` logits.
pub fn head(tape: &mut Tape, w: &VarWeights, x: Var) -> Var {
    let n = tape.rms_norm(x, w.final_norm, RMS_EPS);
    match w.head {
        Some(h) => tape.matmul(n, h),
        None => tape.matmul_t(n, w.embed),
    }
}
