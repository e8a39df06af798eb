use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SstError};

/// Whether the state stream is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Sst,
    Baseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sst => "sst",
            Mode::Baseline => "baseline",
        })
    }
}

impl FromStr for Mode {
    type Err = SstError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sst" => Ok(Mode::Sst),
            "baseline" => Ok(Mode::Baseline),
            other => Err(SstError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab: usize,
    pub max_seq: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub theta_init: f64,
    pub mode: Mode,
    pub tie_embeddings: bool,
    pub rope_base: f64,
    /// Test-only override: every blend coefficient takes this value.
    pub force_alpha: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            d_model: 32,
            n_heads: 4,
            d_ff: 128,
            vocab: 256,
            max_seq: 128,
            alpha_min: 0.015,
            alpha_max: 0.10,
            theta_init: -1.8,
            mode: Mode::Sst,
            tie_embeddings: true,
            rope_base: 10_000.0,
            force_alpha: None,
        }
    }
}

impl ModelConfig {
    /// Two-layer, width-8 configuration used by the gradient and bound checks.
    pub fn tiny() -> Self {
        Self { layers: 2, d_model: 8, n_heads: 2, d_ff: 16, vocab: 16, max_seq: 32, ..Self::default() }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SstError::Config(m));
        if self.layers == 0 || self.d_model == 0 || self.d_ff == 0 || self.vocab == 0 {
            return bad("layers, d_model, d_ff and vocab must be positive".into());
        }
        if self.max_seq == 0 {
            return bad("max_seq must be positive".into());
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if !self.head_dim().is_multiple_of(2) {
            return bad(format!("head dim {} must be even for rotary embedding", self.head_dim()));
        }
        if !(0.0 < self.alpha_min && self.alpha_min < self.alpha_max && self.alpha_max < 1.0) {
            return bad(format!(
                "need 0 < alpha_min < alpha_max < 1, got ({}, {})",
                self.alpha_min, self.alpha_max
            ));
        }
        if !self.theta_init.is_finite() {
            return bad("theta_init must be finite".into());
        }
        if !(self.rope_base > 1.0) {
            return bad("rope_base must exceed 1".into());
        }
        if let Some(a) = self.force_alpha {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("force_alpha {a} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Flat key/value form used by config files and checkpoints.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("layers", self.layers.to_string()),
            ("d_model", self.d_model.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("vocab", self.vocab.to_string()),
            ("max_seq", self.max_seq.to_string()),
            ("alpha_min", format!("{:?}", self.alpha_min)),
            ("alpha_max", format!("{:?}", self.alpha_max)),
            ("theta_init", format!("{:?}", self.theta_init)),
            ("mode", self.mode.to_string()),
            ("tie_embeddings", self.tie_embeddings.to_string()),
            ("rope_base", format!("{:?}", self.rope_base)),
        ];
        if let Some(a) = self.force_alpha {
            v.push(("force_alpha", format!("{a:?}")));
        }
        v.into_iter().map(|(k, s)| (k.to_string(), s)).collect()
    }

    pub const KEYS: [&'static str; 13] = [
        "layers",
        "d_model",
        "n_heads",
        "d_ff",
        "vocab",
        "max_seq",
        "alpha_min",
        "alpha_max",
        "theta_init",
        "mode",
        "tie_embeddings",
        "rope_base",
        "force_alpha",
    ];

    /// Applies one `key=value` setting. Returns `Ok(false)` for keys this
    /// type does not own.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| SstError::Config(format!("{key}: cannot parse {value:?}")))
        }
        match key {
            "layers" => self.layers = num(key, value)?,
            "d_model" => self.d_model = num(key, value)?,
            "n_heads" => self.n_heads = num(key, value)?,
            "d_ff" => self.d_ff = num(key, value)?,
            "vocab" => self.vocab = num(key, value)?,
            "max_seq" => self.max_seq = num(key, value)?,
            "alpha_min" => self.alpha_min = num(key, value)?,
            "alpha_max" => self.alpha_max = num(key, value)?,
            "theta_init" => self.theta_init = num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "tie_embeddings" => self.tie_embeddings = num(key, value)?,
            "rope_base" => self.rope_base = num(key, value)?,
            "force_alpha" => self.force_alpha = Some(num(key, value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            if !cfg.apply(k, v)? {
                return Err(SstError::Config(format!("unknown model key {k:?}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
    }

    #[test]
    fn rejects_bad_bounds() {
        let cfg = ModelConfig { alpha_min: 0.2, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig { n_heads: 3, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pairs_round_trip() {
        let cfg = ModelConfig { mode: Mode::Baseline, force_alpha: Some(0.0), ..ModelConfig::tiny() };
        let map: BTreeMap<_, _> = cfg.to_pairs().into_iter().collect();
        assert_eq!(ModelConfig::from_pairs(&map).unwrap(), cfg);
    }
}
