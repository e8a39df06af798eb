//! Cached, position-at-a-time forward of the decoder stack. This is the
//! inference path; training builds the same computation on a tape.

use super::cache::{KvCache, LatentStateCache};
use super::config::{Mode, ModelConfig};
use super::params::{expected_shapes, SstParams};
use crate::error::{Result, SstError};
use crate::numerics::functions::{gelu_tanh, rms_norm, sigmoid, RMS_EPS};
use crate::numerics::tape::rope_apply;
use crate::numerics::Tensor;

/// `α = α_min + (α_max − α_min)·σ(θ)`, per dimension.
pub fn alpha_from_logits(theta: &[f64], alpha_min: f64, alpha_max: f64) -> Vec<f64> {
    theta.iter().map(|t| alpha_min + (alpha_max - alpha_min) * sigmoid(*t)).collect()
}

/// `(1 − α) ⊙ h + α ⊙ RMSNorm(C_prev)`; an absent state counts as zero.
pub fn blend(h: &[f64], c_prev: Option<&[f64]>, alpha: &[f64], state_gamma: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != h.len() {
        return Err(SstError::Dimension(format!("blend: alpha {} vs h {}", alpha.len(), h.len())));
    }
    let normed = match c_prev {
        Some(c) => rms_norm(c, state_gamma, RMS_EPS)?,
        None => vec![0.0; h.len()],
    };
    Ok(h.iter()
        .zip(alpha)
        .zip(&normed)
        .map(|((hv, a), n)| (1.0 - a) * hv + a * n)
        .collect())
}

/// `x · W` for a row vector and a `[k × n]` matrix.
pub(crate) fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    let n = w.cols();
    let mut out = vec![0.0; n];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(w.row(i)) {
            *o += xi * wv;
        }
    }
    out
}

/// Everything computed at one position by one pass through the stack.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Post-attention residual `h_l` per layer.
    pub post_attention: Vec<Vec<f64>>,
    /// FFN input `h̃_l` per layer (equals `h_l` in baseline mode).
    pub ffn_input: Vec<Vec<f64>>,
    /// Post-FFN output `o_l` per layer.
    pub hidden: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// Parameters bound to their configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SstModel {
    pub config: ModelConfig,
    pub params: SstParams,
}

impl SstModel {
    pub fn new(config: ModelConfig, params: SstParams) -> Result<Self> {
        config.validate()?;
        let named = params.named();
        let expected = expected_shapes(&config);
        if named.len() != expected.len()
            || named.iter().zip(&expected).any(|((n, t), (en, es))| n != en || t.shape() != es.as_slice())
        {
            return Err(SstError::Dimension("parameters do not match configuration".into()));
        }
        Ok(Self { config, params })
    }

    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = SstParams::init(&config, seed)?;
        Self::new(config, params)
    }

    pub fn new_caches(&self) -> (LatentStateCache, KvCache) {
        (LatentStateCache::new(self.config.layers), KvCache::new(self.config.layers, self.config.max_seq))
    }

    /// Blend coefficients for a layer, honouring the test override.
    pub fn alphas(&self, layer: usize) -> Vec<f64> {
        match self.config.force_alpha {
            Some(a) => vec![a; self.config.d_model],
            None => alpha_from_logits(
                self.params.layers[layer].blend_logits.data(),
                self.config.alpha_min,
                self.config.alpha_max,
            ),
        }
    }

    pub fn embed(&self, token: u32) -> Result<Vec<f64>> {
        let v = self.config.vocab;
        if token as usize >= v {
            return Err(SstError::Vocabulary { token, vocab: v });
        }
        Ok(self.params.embed.row(token as usize).to_vec())
    }

    /// `h_t = x_t + Attn(RMSNorm(x_t))` over positions `0..=t`; writes
    /// position `t` of the layer's cache.
    pub fn attention_step(&self, x: &[f64], kv: &mut KvCache, layer: usize, t: usize) -> Result<Vec<f64>> {
        let cfg = &self.config;
        if t >= cfg.max_seq {
            return Err(SstError::Capacity { position: t, capacity: cfg.max_seq });
        }
        let w = &self.params.layers[layer];
        let (d, heads) = (cfg.d_model, cfg.n_heads);
        let xn = rms_norm(x, w.attn_norm.data(), RMS_EPS)?;
        let q = rope_apply(&vec_mat(&xn, &w.wq), d, &[t], heads, cfg.rope_base, 1.0);
        let k = rope_apply(&vec_mat(&xn, &w.wk), d, &[t], heads, cfg.rope_base, 1.0);
        let v = vec_mat(&xn, &w.wv);
        kv.write(layer, t, k, v)?;

        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let keys = kv.keys(layer);
        let values = kv.values(layer);
        let mut attn = vec![0.0; d];
        let mut scores = vec![0.0; t + 1];
        for h in 0..heads {
            let cols = h * hd..(h + 1) * hd;
            let qh = &q[cols.clone()];
            let mut max = f64::NEG_INFINITY;
            for (j, s) in scores.iter_mut().enumerate() {
                *s = scale * qh.iter().zip(&keys[j][cols.clone()]).map(|(a, b)| a * b).sum::<f64>();
                max = max.max(*s);
            }
            let mut z = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                z += *s;
            }
            for (j, s) in scores.iter().enumerate() {
                let p = s / z;
                for (o, vv) in attn[cols.clone()].iter_mut().zip(&values[j][cols.clone()]) {
                    *o += p * vv;
                }
            }
        }
        let proj = vec_mat(&attn, &w.wo);
        Ok(x.iter().zip(&proj).map(|(a, b)| a + b).collect())
    }

    /// `o = h̃ + Down(gelu(Gate(n)) ⊙ Up(n))`, `n = RMSNorm(h̃)`; stores `o`
    /// as the layer's state when a cache is given.
    pub fn ffn_and_update(
        &self,
        h_tilde: &[f64],
        layer: usize,
        lsc: Option<&mut LatentStateCache>,
    ) -> Result<Vec<f64>> {
        let w = &self.params.layers[layer];
        let n = rms_norm(h_tilde, w.ffn_norm.data(), RMS_EPS)?;
        let gate = vec_mat(&n, &w.w_gate);
        let up = vec_mat(&n, &w.w_up);
        let inner: Vec<f64> = gate.iter().zip(&up).map(|(g, u)| gelu_tanh(*g) * u).collect();
        let down = vec_mat(&inner, &w.w_down);
        let o: Vec<f64> = h_tilde.iter().zip(&down).map(|(a, b)| a + b).collect();
        if let Some(cache) = lsc {
            cache.set(layer, o.clone());
        }
        Ok(o)
    }

    /// Final norm and (tied) output head.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = rms_norm(x, self.params.final_norm.data(), RMS_EPS)?;
        Ok(match &self.params.head {
            Some(head) => vec_mat(&n, head),
            None => {
                let e = &self.params.embed;
                (0..self.config.vocab)
                    .map(|v| e.row(v).iter().zip(&n).map(|(a, b)| a * b).sum())
                    .collect()
            }
        })
    }

    /// One pass through the stack at position `t`, reading and then
    /// overwriting each layer's carried state.
    pub fn forward_position(
        &self,
        token: u32,
        t: usize,
        lsc: &mut LatentStateCache,
        kv: &mut KvCache,
    ) -> Result<StepRecord> {
        let cfg = &self.config;
        let mut x = self.embed(token)?;
        let mut rec = StepRecord {
            post_attention: Vec::with_capacity(cfg.layers),
            ffn_input: Vec::with_capacity(cfg.layers),
            hidden: Vec::with_capacity(cfg.layers),
            logits: Vec::new(),
        };
        for l in 0..cfg.layers {
            let h = self.attention_step(&x, kv, l, t)?;
            let (h_tilde, cache) = match cfg.mode {
                Mode::Baseline => (h.clone(), None),
                Mode::Sst => {
                    let w = &self.params.layers[l];
                    (blend(&h, lsc.get(l), &self.alphas(l), w.state_norm.data())?, Some(&mut *lsc))
                }
            };
            let o = self.ffn_and_update(&h_tilde, l, cache)?;
            rec.post_attention.push(h);
            rec.ffn_input.push(h_tilde);
            rec.hidden.push(o.clone());
            x = o;
        }
        rec.logits = self.logits(&x)?;
        Ok(rec)
    }

    /// Runs the full stack `iters` times at position `t` without advancing.
    /// Iteration 1 reads the states left by position `t − 1`; each later
    /// iteration reads the states written by the one before it.
    pub fn iterate_position(
        &self,
        token: u32,
        t: usize,
        lsc: &mut LatentStateCache,
        kv: &mut KvCache,
        iters: usize,
    ) -> Result<Vec<StepRecord>> {
        if iters == 0 {
            return Err(SstError::Contract("iteration depth must be at least 1".into()));
        }
        (0..iters).map(|_| self.forward_position(token, t, lsc, kv)).collect()
    }
}
