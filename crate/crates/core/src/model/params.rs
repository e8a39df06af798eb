//! Parameter containers. The same shape is reused for tensors, tape
//! variables and gradients through the generic `T`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Result, SstError};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights<T> {
    pub attn_norm: T,
    pub wq: T,
    pub wk: T,
    pub wv: T,
    pub wo: T,
    pub ffn_norm: T,
    pub w_gate: T,
    pub w_up: T,
    pub w_down: T,
    /// θ_l: blend logits.
    pub blend_logits: T,
    /// Gamma of the RMSNorm applied to the carried state.
    pub state_norm: T,
}

const LAYER_FIELDS: [&str; 11] = [
    "attn_norm",
    "wq",
    "wk",
    "wv",
    "wo",
    "ffn_norm",
    "w_gate",
    "w_up",
    "w_down",
    "blend_logits",
    "state_norm",
];

impl<T> LayerWeights<T> {
    fn fields(&self) -> [&T; 11] {
        [
            &self.attn_norm,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ffn_norm,
            &self.w_gate,
            &self.w_up,
            &self.w_down,
            &self.blend_logits,
            &self.state_norm,
        ]
    }

    fn fields_mut(&mut self) -> [&mut T; 11] {
        [
            &mut self.attn_norm,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ffn_norm,
            &mut self.w_gate,
            &mut self.w_up,
            &mut self.w_down,
            &mut self.blend_logits,
            &mut self.state_norm,
        ]
    }

    fn from_fields(mut it: impl Iterator<Item = T>) -> Self {
        let mut next = || it.next().expect("eleven layer fields");
        Self {
            attn_norm: next(),
            wq: next(),
            wk: next(),
            wv: next(),
            wo: next(),
            ffn_norm: next(),
            w_gate: next(),
            w_up: next(),
            w_down: next(),
            blend_logits: next(),
            state_norm: next(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights<T> {
    /// `[V × d]`, shared with the output head when tied.
    pub embed: T,
    pub final_norm: T,
    /// `[d × V]`, present only when the head is untied.
    pub head: Option<T>,
    pub layers: Vec<LayerWeights<T>>,
}

pub type SstParams = ModelWeights<Tensor>;

impl<T> ModelWeights<T> {
    /// Every parameter with its dotted name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = vec![("embed".to_string(), &self.embed), ("final_norm".to_string(), &self.final_norm)];
        if let Some(h) = &self.head {
            out.push(("head".to_string(), h));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in LAYER_FIELDS.iter().zip(layer.fields()) {
                out.push((format!("layers.{l}.{name}"), t));
            }
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut T)> {
        let mut out = vec![
            ("embed".to_string(), &mut self.embed),
            ("final_norm".to_string(), &mut self.final_norm),
        ];
        if let Some(h) = &mut self.head {
            out.push(("head".to_string(), h));
        }
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in LAYER_FIELDS.iter().zip(layer.fields_mut()) {
                out.push((format!("layers.{l}.{name}"), t));
            }
        }
        out
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ModelWeights<U> {
        let embed = f("embed", &self.embed);
        let final_norm = f("final_norm", &self.final_norm);
        let head = self.head.as_ref().map(|h| f("head", h));
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let vals: Vec<U> = LAYER_FIELDS
                    .iter()
                    .zip(layer.fields())
                    .map(|(name, t)| f(&format!("layers.{l}.{name}"), t))
                    .collect();
                LayerWeights::from_fields(vals.into_iter())
            })
            .collect();
        ModelWeights { embed, final_norm, head, layers }
    }
}

/// Blend logits and state-norm gammas form the stream parameter group.
pub fn is_stream_param(name: &str) -> bool {
    name.ends_with(".blend_logits") || name.ends_with(".state_norm")
}

/// Expected shape of every named parameter.
pub fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab);
    let mut out = vec![("embed".to_string(), vec![v, d]), ("final_norm".to_string(), vec![d])];
    if !cfg.tie_embeddings {
        out.push(("head".to_string(), vec![d, v]));
    }
    for l in 0..cfg.layers {
        let shapes: [Vec<usize>; 11] = [
            vec![d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d],
            vec![d, f],
            vec![d, f],
            vec![f, d],
            vec![d],
            vec![d],
        ];
        for (name, s) in LAYER_FIELDS.iter().zip(shapes) {
            out.push((format!("layers.{l}.{name}"), s));
        }
    }
    out
}

impl SstParams {
    /// Seeded random initialisation. Linear maps use N(0, 1/fan_in); norm
    /// gammas start at 1 and blend logits at `theta_init`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab);
        let mut normal = |rows: usize, cols: usize, std: f64| {
            let dist = Normal::new(0.0, std).expect("positive std");
            Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| dist.sample(&mut rng)).collect())
                .expect("shape")
        };
        let embed = normal(v, d, 1.0 / (d as f64).sqrt());
        let head = (!cfg.tie_embeddings).then(|| normal(d, v, 1.0 / (d as f64).sqrt()));
        let depth_scale = 1.0 / (2.0 * cfg.layers as f64).sqrt();
        let layers = (0..cfg.layers)
            .map(|_| LayerWeights {
                attn_norm: Tensor::filled(&[d], 1.0),
                wq: normal(d, d, 1.0 / (d as f64).sqrt()),
                wk: normal(d, d, 1.0 / (d as f64).sqrt()),
                wv: normal(d, d, 1.0 / (d as f64).sqrt()),
                wo: normal(d, d, depth_scale / (d as f64).sqrt()),
                ffn_norm: Tensor::filled(&[d], 1.0),
                w_gate: normal(d, f, 1.0 / (d as f64).sqrt()),
                w_up: normal(d, f, 1.0 / (d as f64).sqrt()),
                w_down: normal(f, d, depth_scale / (f as f64).sqrt()),
                blend_logits: Tensor::filled(&[d], cfg.theta_init),
                state_norm: Tensor::filled(&[d], 1.0),
            })
            .collect();
        Ok(Self { embed, final_norm: Tensor::filled(&[d], 1.0), head, layers })
    }

    /// Builds parameters from named tensors, checking names and shapes.
    pub fn from_named(cfg: &ModelConfig, mut tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let expected = expected_shapes(cfg);
        if tensors.len() != expected.len() {
            return Err(SstError::Format(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, t), (want_name, want_shape)) in tensors.iter().zip(&expected) {
            if name != want_name || t.shape() != want_shape.as_slice() {
                return Err(SstError::Format(format!(
                    "parameter {name} {:?} does not match {want_name} {want_shape:?}",
                    t.shape()
                )));
            }
        }
        let mut it = tensors.drain(..).map(|(_, t)| t);
        let embed = it.next().unwrap();
        let final_norm = it.next().unwrap();
        let head = if cfg.tie_embeddings { None } else { it.next() };
        let layers = (0..cfg.layers).map(|_| LayerWeights::from_fields(it.by_ref().take(11))).collect();
        Ok(Self { embed, final_norm, head, layers })
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn stream_param_count(&self) -> usize {
        self.named()
            .iter()
            .filter(|(n, _)| is_stream_param(n))
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }
}
