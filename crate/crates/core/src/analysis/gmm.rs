//! One-dimensional Gaussian mixtures fitted by EM, and the crossover
//! threshold separating the stable mode from the rest.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SstError};

pub const GMM_MAX_ITERS: usize = 500;
pub const GMM_TOL: f64 = 1e-10;
const MIN_STD: f64 = 1e-8;
const ATTEMPTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub mean: f64,
    pub std: f64,
    pub weight: f64,
}

impl Component {
    pub fn ln_weighted_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        self.weight.ln() - self.std.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * z * z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmFit {
    /// Sorted by ascending mean.
    pub components: Vec<Component>,
    /// Mean per-sample log-likelihood at convergence.
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Log-likelihood after every EM iteration.
    pub history: Vec<f64>,
}

fn ln_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn quantile_init(sorted: &[f64], k: usize) -> Vec<Component> {
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt().max(MIN_STD);
    (0..k)
        .map(|j| {
            let q = (j as f64 + 0.5) / k as f64;
            let mean = sorted[((q * n as f64) as usize).min(n - 1)];
            Component { mean, std: std / k as f64, weight: 1.0 / k as f64 }
        })
        .collect()
}

enum Outcome {
    Done(GmmFit),
    Collapsed,
}

fn run_em(x: &[f64], mut comps: Vec<Component>, max_iters: usize) -> Result<Outcome> {
    let n = x.len() as f64;
    let k = comps.len();
    let mut resp = vec![0.0; x.len() * k];
    let mut history = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut row = vec![0.0; k];
    for it in 1..=max_iters {
        // E step; the log-likelihood is that of the parameters entering it.
        let mut ll = 0.0;
        for (i, xi) in x.iter().enumerate() {
            for (j, c) in comps.iter().enumerate() {
                row[j] = c.ln_weighted_density(*xi);
            }
            let lse = ln_sum_exp(&row);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (row[j] - lse).exp();
            }
        }
        ll /= n;
        if ll < prev - 1e-12 * prev.abs().max(1.0) {
            return Err(SstError::Contract(format!("EM log-likelihood decreased at iteration {it}: {prev} -> {ll}")));
        }
        history.push(ll);
        let converged = (ll - prev).abs() < GMM_TOL;
        prev = ll;
        if converged {
            return Ok(Outcome::Done(GmmFit { components: sorted(comps), log_likelihood: ll, iterations: it, history }));
        }
        // M step.
        for (j, c) in comps.iter_mut().enumerate() {
            let nk: f64 = (0..x.len()).map(|i| resp[i * k + j]).sum();
            if nk <= 0.0 {
                return Ok(Outcome::Collapsed);
            }
            let mean = (0..x.len()).map(|i| resp[i * k + j] * x[i]).sum::<f64>() / nk;
            let var = (0..x.len()).map(|i| resp[i * k + j] * (x[i] - mean).powi(2)).sum::<f64>() / nk;
            let std = var.sqrt();
            if !(std >= MIN_STD) {
                return Ok(Outcome::Collapsed);
            }
            *c = Component { mean, std, weight: nk / n };
        }
    }
    Ok(Outcome::Done(GmmFit { components: sorted(comps), log_likelihood: prev, iterations: max_iters, history }))
}

fn sorted(mut c: Vec<Component>) -> Vec<Component> {
    c.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    c
}

/// EM fit with quantile initialisation. A collapsed component triggers a
/// seeded jittered restart; the third collapse is an error.
pub fn gmm_fit(samples: &[f64], k: usize, seed: u64, max_iters: usize) -> Result<GmmFit> {
    if k < 2 || samples.len() < 2 * k {
        return Err(SstError::Contract(format!("need K ≥ 2 and at least 2K samples (K={k}, n={})", samples.len())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(SstError::Contract("non-finite sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let base = quantile_init(&s, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = base[0].std * k as f64;
    for attempt in 0..ATTEMPTS {
        let mut init = base.clone();
        if attempt > 0 {
            let jitter = Normal::new(0.0, 0.1 * spread).expect("positive spread");
            for c in &mut init {
                c.mean += jitter.sample(&mut rng);
            }
        }
        if let Outcome::Done(fit) = run_em(samples, init, max_iters)? {
            return Ok(fit);
        }
    }
    Err(SstError::Degenerate(format!("component collapsed in {ATTEMPTS} attempts")))
}

/// Posterior of component `j` at `x`.
pub fn posterior(fit: &GmmFit, j: usize, x: f64) -> f64 {
    let lw: Vec<f64> = fit.components.iter().map(|c| c.ln_weighted_density(x)).collect();
    (lw[j] - ln_sum_exp(&lw)).exp()
}

/// Equal-posterior point of a two-component fit, solved in closed form.
/// The root must lie strictly between the means.
pub fn gmm_crossover(fit: &GmmFit) -> Result<f64> {
    let [c1, c2] = fit.components.as_slice() else {
        return Err(SstError::Contract(format!("closed-form crossover needs K = 2, got {}", fit.components.len())));
    };
    if c1.mean == c2.mean {
        return Err(SstError::Contract("components share a mean".into()));
    }
    // ln w − ln σ − (x − μ)² / 2σ², equated for both components.
    let (a1, a2) = (0.5 / (c1.std * c1.std), 0.5 / (c2.std * c2.std));
    let a = a2 - a1;
    let b = 2.0 * (a1 * c1.mean - a2 * c2.mean);
    let c = a2 * c2.mean * c2.mean - a1 * c1.mean * c1.mean + (c1.weight / c1.std).ln() - (c2.weight / c2.std).ln();
    let roots: Vec<f64> = if a.abs() < 1e-300 {
        vec![-c / b]
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Err(SstError::NoCrossover { roots: vec![] });
        }
        let sq = disc.sqrt();
        // Numerically stable pair of roots.
        let q = -0.5 * (b + b.signum() * sq);
        let mut r = vec![q / a];
        if q != 0.0 {
            r.push(c / q);
        }
        r
    };
    let (lo, hi) = (c1.mean, c2.mean);
    roots
        .iter()
        .copied()
        .find(|r| *r > lo && *r < hi)
        .ok_or(SstError::NoCrossover { roots })
}

/// Index set of the stable group: the heaviest component plus any
/// component whose mean lies within three of its standard deviations.
pub fn stable_group(fit: &GmmFit) -> Vec<usize> {
    let dom = (0..fit.components.len())
        .max_by(|a, b| fit.components[*a].weight.total_cmp(&fit.components[*b].weight))
        .expect("nonempty fit");
    let d = fit.components[dom];
    (0..fit.components.len())
        .filter(|j| (fit.components[*j].mean - d.mean).abs() <= 3.0 * d.std)
        .collect()
}

/// Point below the stable group where its posterior mass equals that of the
/// remaining components. Reduces to [`gmm_crossover`] for K = 2 when the
/// heavier component is the upper one.
pub fn stable_crossover(fit: &GmmFit) -> Result<f64> {
    if fit.components.len() == 2 {
        return gmm_crossover(fit);
    }
    let group = stable_group(fit);
    let rest: Vec<usize> = (0..fit.components.len()).filter(|j| !group.contains(j)).collect();
    if rest.is_empty() {
        return Err(SstError::NoCrossover { roots: vec![] });
    }
    let f = |x: f64| {
        let g: Vec<f64> = group.iter().map(|j| fit.components[*j].ln_weighted_density(x)).collect();
        let r: Vec<f64> = rest.iter().map(|j| fit.components[*j].ln_weighted_density(x)).collect();
        ln_sum_exp(&g) - ln_sum_exp(&r)
    };
    let hi = group.iter().map(|j| fit.components[*j].mean).fold(f64::INFINITY, f64::min);
    let lo = rest
        .iter()
        .map(|j| fit.components[*j].mean)
        .filter(|m| *m < hi)
        .fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || f(lo) >= 0.0 || f(hi) <= 0.0 {
        return Err(SstError::NoCrossover { roots: vec![] });
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit2(m1: f64, s1: f64, w1: f64, m2: f64, s2: f64) -> GmmFit {
        GmmFit {
            components: vec![
                Component { mean: m1, std: s1, weight: w1 },
                Component { mean: m2, std: s2, weight: 1.0 - w1 },
            ],
            log_likelihood: 0.0,
            iterations: 0,
            history: vec![],
        }
    }

    #[test]
    fn symmetric_crossover_is_midpoint() {
        let f = fit2(0.2, 0.1, 0.5, 0.8, 0.1);
        assert!((gmm_crossover(&f).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_crossover_matches_grid() {
        let f = fit2(0.3, 0.2, 0.3, 0.9, 0.05);
        let x = gmm_crossover(&f).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        let n = 6_000_000;
        for i in 0..=n {
            let g = 0.3 + 0.6 * i as f64 / n as f64;
            let d = (posterior(&f, 0, g) - posterior(&f, 1, g)).abs();
            if d < best.0 {
                best = (d, g);
            }
        }
        assert!((x - best.1).abs() < 1e-6, "{x} vs {}", best.1);
        assert!((posterior(&f, 0, x) - posterior(&f, 1, x)).abs() < 1e-9);
    }
}
