use rayon::prelude::*;

use super::data::{Dataset, Example};
use super::forward::{loss_and_grads, loss_value, TrainPath};
use super::optim::{AdamW, OptimConfig, StepInfo};
use crate::error::{Result, SstError};
use crate::model::config::{Mode, ModelConfig};
use crate::model::stack::alpha_from_logits;
use crate::model::SstParams;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub path: TrainPath,
    /// Micro-steps (one example each) per optimizer step.
    pub accumulation: usize,
    pub validate_every: usize,
    pub optim: OptimConfig,
    /// Cuts the gradient between pass 1 and the scan (test switch).
    pub stop_grad_pass1: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            path: TrainPath::TwoPass,
            accumulation: 4,
            validate_every: 50,
            optim: OptimConfig::default(),
            stop_grad_pass1: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.accumulation == 0 {
            return Err(SstError::Config("accumulation must be at least 1".into()));
        }
        self.optim.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub params: SstParams,
    /// Mean micro-step loss per optimizer step.
    pub losses: Vec<f64>,
    /// `(step, loss)` after every `validate_every` steps.
    pub validation: Vec<(usize, f64)>,
    pub steps: Vec<StepInfo>,
    pub micro_steps: usize,
    pub forward_passes: usize,
}

/// Sum of gradients in slice order (deterministic regardless of how they
/// were computed).
fn accumulate(grads: &[SstParams], scale: f64) -> SstParams {
    let mut out = grads[0].map(|_, t| Tensor::zeros(t.shape()));
    for g in grads {
        for ((_, o), (_, t)) in out.named_mut().into_iter().zip(g.named()) {
            for (a, b) in o.data_mut().iter_mut().zip(t.data()) {
                *a += b;
            }
        }
    }
    for (_, o) in out.named_mut() {
        for a in o.data_mut() {
            *a *= scale;
        }
    }
    out
}

/// Every blend coefficient lies in `[α_min, α_max]`.
pub fn alphas_in_bounds(cfg: &ModelConfig, params: &SstParams) -> bool {
    params.layers.iter().all(|l| {
        alpha_from_logits(l.blend_logits.data(), cfg.alpha_min, cfg.alpha_max)
            .iter()
            .all(|a| a.is_finite() && *a >= cfg.alpha_min && *a <= cfg.alpha_max)
    })
}

pub fn mean_loss(cfg: &ModelConfig, params: &SstParams, examples: &[Example], path: TrainPath) -> Result<f64> {
    let losses: Result<Vec<f64>> =
        examples.par_iter().map(|e| loss_value(cfg, params, &e.tokens, &e.mask, path)).collect();
    let losses = losses?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Deterministic training: examples are visited in dataset order, cycling.
pub fn train(cfg: &ModelConfig, init: SstParams, data: &Dataset, tc: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    tc.validate()?;
    if data.train.is_empty() {
        return Err(SstError::Contract("empty training set".into()));
    }
    let mut params = init;
    let mut opt = AdamW::new(tc.optim.clone(), &params);
    let mut report = TrainReport {
        params: params.clone(),
        losses: Vec::with_capacity(tc.steps),
        validation: Vec::new(),
        steps: Vec::with_capacity(tc.steps),
        micro_steps: 0,
        forward_passes: 0,
    };
    let n = data.train.len();
    for step in 1..=tc.steps {
        let start = (step - 1) * tc.accumulation;
        let batch: Vec<&Example> = (0..tc.accumulation).map(|k| &data.train[(start + k) % n]).collect();
        let results: Result<Vec<(f64, SstParams, usize)>> = batch
            .par_iter()
            .map(|e| loss_and_grads(cfg, &params, &e.tokens, &e.mask, tc.path, tc.stop_grad_pass1))
            .collect();
        let results = results?;
        let loss = results.iter().map(|r| r.0).sum::<f64>() / results.len() as f64;
        if !loss.is_finite() {
            return Err(SstError::Divergence { step, detail: format!("loss {loss}") });
        }
        report.micro_steps += results.len();
        report.forward_passes += results.iter().map(|r| r.2).sum::<usize>();
        let grads: Vec<SstParams> = results.into_iter().map(|r| r.1).collect();
        let grad = accumulate(&grads, 1.0 / grads.len() as f64);
        let info = opt.step(&mut params, &grad);
        if !params.is_finite() || !info.grad_norm.is_finite() {
            return Err(SstError::Divergence { step, detail: format!("non-finite update (grad norm {})", info.grad_norm) });
        }
        if cfg.mode == Mode::Sst && cfg.force_alpha.is_none() && !alphas_in_bounds(cfg, &params) {
            return Err(SstError::Divergence { step, detail: "blend coefficient left its bounds".into() });
        }
        report.losses.push(loss);
        report.steps.push(info);
        if tc.validate_every > 0 && step % tc.validate_every == 0 && !data.validation.is_empty() {
            report.validation.push((step, mean_loss(cfg, &params, &data.validation, tc.path)?));
        }
    }
    report.params = params;
    Ok(report)
}
