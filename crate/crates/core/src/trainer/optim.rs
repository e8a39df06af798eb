//! AdamW with two parameter groups, warmup + cosine schedule and global
//! gradient-norm clipping.

use std::f64::consts::PI;

use crate::error::{Result, SstError};
use crate::model::params::is_stream_param;
use crate::model::SstParams;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    /// Stream group (blend logits, state-norm gammas): constant rate.
    pub lr_stream: f64,
    /// Everything else: warmup then cosine decay.
    pub lr_base: f64,
    pub warmup_steps: usize,
    /// Length of the cosine schedule; the rate reaches `lr_base * min_lr_ratio` here.
    pub total_steps: usize,
    pub min_lr_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global L2 clip; non-positive disables.
    pub clip_norm: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr_stream: 1e-2,
            lr_base: 1e-4,
            warmup_steps: 10,
            total_steps: 1000,
            min_lr_ratio: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: 1.0,
        }
    }
}

impl OptimConfig {
    /// Rate for the non-stream group at 1-based `step`.
    pub fn base_lr_at(&self, step: usize) -> f64 {
        let w = self.warmup_steps;
        if step <= w && w > 0 {
            return self.lr_base * step as f64 / w as f64;
        }
        let span = self.total_steps.saturating_sub(w).max(1);
        let progress = ((step - w) as f64 / span as f64).min(1.0);
        let floor = self.lr_base * self.min_lr_ratio;
        floor + (self.lr_base - floor) * 0.5 * (1.0 + (PI * progress).cos())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_stream >= 0.0
            && self.lr_base >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && (0.0..=1.0).contains(&self.min_lr_ratio);
        if ok {
            Ok(())
        } else {
            Err(SstError::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Summary of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub step: usize,
    pub grad_norm: f64,
    pub clipped: bool,
    pub lr_base: f64,
    pub lr_stream: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub config: OptimConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: usize,
}

pub fn global_norm(grads: &SstParams) -> f64 {
    grads
        .named()
        .iter()
        .flat_map(|(_, g)| g.data().iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

impl AdamW {
    pub fn new(config: OptimConfig, params: &SstParams) -> Self {
        let zeros: Vec<Tensor> = params.named().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self { config, m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn step(&mut self, params: &mut SstParams, grads: &SstParams) -> StepInfo {
        self.step += 1;
        let c = &self.config;
        let t = self.step as f64;
        let norm = global_norm(grads);
        let clipped = c.clip_norm > 0.0 && norm > c.clip_norm;
        let scale = if clipped { c.clip_norm / norm } else { 1.0 };
        let lr_base = c.base_lr_at(self.step);
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        let gs = grads.named();
        for (i, (name, p)) in params.named_mut().into_iter().enumerate() {
            let lr = if is_stream_param(&name) { c.lr_stream } else { lr_base };
            let g = gs[i].1.data();
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, pv) in p.data_mut().iter_mut().enumerate() {
                let gj = g[j] * scale;
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + c.eps);
                *pv -= lr * (update + c.weight_decay * *pv);
            }
        }
        StepInfo { step: self.step, grad_norm: norm, clipped, lr_base, lr_stream: c.lr_stream }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn warmup_is_linear() {
        let c = OptimConfig::default();
        assert!((c.base_lr_at(5) - 0.5 * c.lr_base).abs() < 1e-18);
        assert!((c.base_lr_at(10) - c.lr_base).abs() < 1e-18);
        assert!(c.base_lr_at(c.total_steps) < 1e-12);
        let mid = c.warmup_steps + (c.total_steps - c.warmup_steps) / 2;
        assert!((c.base_lr_at(mid) - 0.5 * c.lr_base).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        let cfg = ModelConfig::tiny();
        let p0 = SstParams::init(&cfg, 3).unwrap();
        let mut p = p0.clone();
        let g = p0.map(|_, t| Tensor::zeros(t.shape()));
        let mut opt = AdamW::new(OptimConfig::default(), &p);
        opt.step(&mut p, &g);
        assert_eq!(p, p0);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn first_step_matches_scalar_trace() {
        // Scalar Adam trace: m = 0.1 g, v = 0.001 g², m̂ = g, v̂ = g²,
        // update = g / (|g| + ε). Norm of (0.6, −0.5) stays under the clip.
        let cfg = ModelConfig::tiny();
        let p0 = SstParams::init(&cfg, 4).unwrap();
        let mut p = p0.clone();
        let mut g = p0.map(|_, t| Tensor::zeros(t.shape()));
        g.final_norm.data_mut()[0] = 0.6;
        g.layers[0].blend_logits.data_mut()[0] = -0.5;
        let c = OptimConfig { warmup_steps: 1, ..OptimConfig::default() };
        let mut opt = AdamW::new(c.clone(), &p);
        opt.step(&mut p, &g);
        let want = p0.final_norm.data()[0] - 1e-4 * (0.6 / (0.6 + 1e-8));
        assert!((p.final_norm.data()[0] - want).abs() < 1e-15);
        let want = p0.layers[0].blend_logits.data()[0] + 1e-2 * (0.5 / (0.5 + 1e-8));
        assert!((p.layers[0].blend_logits.data()[0] - want).abs() < 1e-16);
    }

    #[test]
    fn clipping_rescales_to_unit_norm() {
        let cfg = ModelConfig::tiny();
        let p0 = SstParams::init(&cfg, 4).unwrap();
        let g = p0.map(|_, t| Tensor::filled(t.shape(), 3.0));
        let mut p = p0.clone();
        let mut opt = AdamW::new(OptimConfig::default(), &p);
        let info = opt.step(&mut p, &g);
        assert!(info.clipped && info.grad_norm > 1.0);
    }
}
