use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{oracles, synthetic};
use crate::analysis::gmm::{gmm_crossover, gmm_fit, stable_crossover, GMM_MAX_ITERS};
use crate::analysis::stats::{binomial_tail, mcnemar_chi2, mcnemar_exact, odds_ratio};
use crate::analysis::{l2_delta_profile, layer_profile, logit_dynamics_within, overlap_grid};
use crate::error::Result;
use crate::inference::{error_correction, generate, generate_turns, Flat, TraceSpec};
use crate::model::{ffn_lipschitz, Mode, ModelConfig, SstModel, SstParams};
use crate::numerics::{bf16_round, finite_difference, gelu_max_derivative, relative_error, Tensor, BF16_EPSILON};
use crate::probe::{default_evaluator, input_dim_ablation, loocv, probe_driven_generate, ProbeTrainConfig};
use crate::trainer::{
    associative_scan, copy_task, loss_and_grads, loss_value, mean_loss, sequential_forward, train, two_pass_forward,
    Dataset, OptimConfig, TrainConfig, TrainPath,
};

type Outcome = Result<(bool, String)>;

fn random_tokens(n: usize, vocab: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(0..vocab as u32)).collect()
}

fn small(cfg: &ModelConfig) -> ModelConfig {
    ModelConfig { layers: 2, d_model: 8, n_heads: 2, d_ff: 16, vocab: 16, max_seq: 32, ..cfg.clone() }
}

pub(super) fn alpha_init(cfg: &ModelConfig) -> Outcome {
    let model = SstModel::init(cfg.clone(), 0)?;
    let worst = (0..cfg.layers)
        .flat_map(|l| model.alphas(l))
        .map(|a| (a - 0.02706).abs())
        .fold(0.0, f64::max);
    Ok((worst <= 1e-4, format!("max |α − 0.02706| = {worst:.2e} (tolerance 1e-4)")))
}

pub(super) fn gradients(cfg: &ModelConfig) -> Outcome {
    let cfg = small(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = SstParams::init(&cfg, 5)?;
    let toks = random_tokens(6, cfg.vocab, &mut rng);
    let mask = vec![true; toks.len()];
    let (_, g, _) = loss_and_grads(&cfg, &p, &toks, &mask, TrainPath::Sequential, false)?;
    let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
    let flat: Vec<Tensor> = p.named().into_iter().map(|(_, t)| t.clone()).collect();
    let f = |ts: &[Tensor]| {
        SstParams::from_named(&cfg, names.iter().cloned().zip(ts.iter().cloned()).collect())
            .and_then(|q| loss_value(&cfg, &q, &toks, &mask, TrainPath::Sequential))
            .unwrap_or(f64::NAN)
    };
    let numeric = finite_difference(f, &flat, 1e-5);
    let (mut worst, mut at) = (0.0f64, String::new());
    for ((name, a), n) in g.named().iter().zip(&numeric) {
        for (x, y) in a.data().iter().zip(n.data()) {
            let e = relative_error(*x, *y);
            if !(e <= worst) {
                worst = e;
                at = name.clone();
            }
        }
    }
    Ok((worst < 1e-5, format!("max relative error {worst:.2e} at {at} (tolerance 1e-5)")))
}

pub(super) fn two_pass_orders(cfg: &ModelConfig) -> Outcome {
    let base = ModelConfig { vocab: 16, ..small(cfg) };
    let p = SstParams::init(&base, 21)?;
    let toks = random_tokens(8, base.vocab, &mut ChaCha8Rng::seed_from_u64(3));
    let (mut blended, mut first, mut alphas) = (Vec::new(), Vec::new(), Vec::new());
    for scale in [0.5, 1.0, 2.0] {
        let c = ModelConfig { alpha_min: base.alpha_min * scale, alpha_max: base.alpha_max * scale, ..base.clone() };
        let s = sequential_forward(&c, &p, &toks)?;
        let t = two_pass_forward(&c, &p, &toks)?;
        blended.push((0..c.layers).map(|l| s.ffn_inputs[l].max_abs_diff(&t.ffn_inputs[l])).fold(0.0, f64::max));
        let p1 = t.pass1_outputs.as_ref().expect("two-pass records pass 1");
        first.push((0..c.layers).map(|l| s.outputs[l].max_abs_diff(&p1[l])).fold(0.0, f64::max));
        alphas.push(SstModel::new(c, p.clone())?.alphas(0)[0]);
    }
    let slope = |e: &[f64]| {
        let xs: Vec<f64> = alphas.iter().map(|a| a.ln()).collect();
        let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    };
    let (s2, s1) = (slope(&blended), slope(&first));
    let ok = (1.7..=2.3).contains(&s2) && (0.8..=1.2).contains(&s1);
    Ok((
        ok,
        format!(
            "α = {:.4}/{:.4}/{:.4}: blended slope {s2:.3} (want [1.7, 2.3]), pass-1 slope {s1:.3} (want [0.8, 1.2])",
            alphas[0], alphas[1], alphas[2]
        ),
    ))
}

pub(super) fn scan_equivalence(_: &ModelConfig) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lengths = [1, 2, 3, 17, 128];
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (t, d) = (lengths[i % lengths.len()], rng.random_range(1..=8));
        let a: Vec<f64> = (0..t * d).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = associative_scan(&Tensor::matrix(t, d, a.clone())?, &Tensor::matrix(t, d, b.clone())?)?;
        let mut state = vec![0.0; d];
        for r in 0..t {
            for c in 0..d {
                state[c] = a[r * d + c] * state[c] + b[r * d + c];
                worst = worst.max((state[c] - s.at(r, c)).abs());
            }
        }
    }
    Ok((worst <= 1e-12, format!("100 instances, max deviation {worst:.2e} (tolerance 1e-12)")))
}

pub(super) fn baseline_identity(cfg: &ModelConfig) -> Outcome {
    let zero = ModelConfig { force_alpha: Some(0.0), ..cfg.clone() };
    let model = SstModel::init(zero.clone(), 12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut forward_dev = 0.0f64;
    for _ in 0..5 {
        let toks = random_tokens(12, zero.vocab, &mut rng);
        let oracle = oracles::textbook_forward(&model, &toks);
        let tape = sequential_forward(&zero, &model.params, &toks)?;
        let (mut lsc, mut kv) = model.new_caches();
        for (t, &tok) in toks.iter().enumerate() {
            let rec = model.forward_position(tok, t, &mut lsc, &mut kv)?;
            for (v, o) in oracle[t].iter().enumerate() {
                forward_dev = forward_dev.max((rec.logits[v] - o).abs()).max((tape.logits.at(t, v) - o).abs());
            }
        }
    }

    let data = Dataset { train: copy_task(80, 4, 16, zero.vocab, 3)?, validation: Vec::new() };
    let tc = |path| TrainConfig {
        steps: 20,
        path,
        validate_every: 0,
        optim: OptimConfig { lr_base: 1e-3, total_steps: 20, ..OptimConfig::default() },
        ..TrainConfig::default()
    };
    let mut train_dev = 0.0f64;
    for c in [ModelConfig { mode: Mode::Baseline, ..cfg.clone() }, zero] {
        let init = SstParams::init(&c, 13)?;
        let a = train(&c, init.clone(), &data, &tc(TrainPath::Sequential))?;
        let b = train(&c, init, &data, &tc(TrainPath::TwoPass))?;
        train_dev = a.losses.iter().zip(&b.losses).map(|(x, y)| (x - y).abs()).fold(train_dev, f64::max);
    }
    Ok((
        forward_dev <= 1e-12 && train_dev <= 1e-10,
        format!("forward vs textbook oracle {forward_dev:.2e} (1e-12); 20-step loss trajectories {train_dev:.2e} (1e-10)"),
    ))
}

pub(super) fn determinism(cfg: &ModelConfig) -> Outcome {
    let model = SstModel::init(cfg.clone(), 7)?;
    let prompt = random_tokens(6, cfg.vocab, &mut ChaCha8Rng::seed_from_u64(6));
    let spec = TraceSpec::default();
    let first = generate(&model, &prompt, 8, 4, &spec)?;
    let mut identical = 0;
    for _ in 0..4 {
        if generate(&model, &prompt, 8, 4, &spec)? == first {
            identical += 1;
        }
    }
    let ok = identical == 4 && first.kv_checks == 8 * 4;
    Ok((ok, format!("{} of 5 runs identical; {} KV prefix checksums verified", identical + 1, first.kv_checks)))
}

pub(super) fn lipschitz(cfg: &ModelConfig) -> Outcome {
    let (m, at) = gelu_max_derivative(-6.0, 6.0, 1e-5);
    let gelu_ok = (1.12..=1.14).contains(&m) && (at - 2f64.sqrt()).abs() <= 0.05;
    let model = SstModel::init(cfg.clone(), 1)?;
    let mut worst = f64::INFINITY;
    let mut ffn_ok = true;
    for l in 0..cfg.layers {
        let r = ffn_lipschitz(&model, l, 1000, 11 + l as u64)?;
        ffn_ok &= r.empirical <= r.bound;
        worst = worst.min(r.bound - r.empirical);
    }
    Ok((
        gelu_ok && ffn_ok,
        format!("max gelu' = {m:.5} at {at:.4}; FFN estimate within bound on every layer (min slack {worst:.3})"),
    ))
}

pub(super) fn bf16_floor(cfg: &ModelConfig) -> Outcome {
    let a = bf16_round(1.0 + 2f64.powi(-7));
    let b = bf16_round(1.0 + 2f64.powi(-8));
    let ok = a == 1.0078125 && b == 1.0 && cfg.alpha_min > BF16_EPSILON;
    Ok((ok, format!("1+2⁻⁷ → {a}, 1+2⁻⁸ → {b}, α_min = {} vs ε = {BF16_EPSILON}", cfg.alpha_min)))
}

pub(super) fn gmm_pipeline(_: &ModelConfig) -> Outcome {
    let x = synthetic::planted_overlaps(20_000, 42);
    let f = gmm_fit(&x, 2, 42, GMM_MAX_ITERS)?;
    let [lo, hi] = synthetic::PLANTED_MIXTURE;
    let (c0, c1) = (&f.components[0], &f.components[1]);
    let means_ok = (c0.mean - lo.0).abs() <= 0.003 && (c1.mean - hi.0).abs() <= 0.003;
    let weights_ok = (c0.weight - lo.2).abs() <= 0.02 && (c1.weight - hi.2).abs() <= 0.02;
    let c = gmm_crossover(&f)?;
    let thresholds =
        (2..=5).map(|k| gmm_fit(&x, k, 42, GMM_MAX_ITERS).and_then(|f| stable_crossover(&f))).collect::<Result<Vec<_>>>()?;
    let spread = thresholds.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - thresholds.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = means_ok && weights_ok && (c - 0.976).abs() <= 0.005 && spread <= 0.01;
    Ok((
        ok,
        format!(
            "means {:.4}/{:.4}, weights {:.4}/{:.4}, crossover {c:.5}, K=2..5 spread {spread:.2e}",
            c0.mean, c1.mean, c0.weight, c1.weight
        ),
    ))
}

pub(super) fn statistics(_: &ModelConfig) -> Outcome {
    let binom = binomial_tail(29, 48, 0.373)?.value();
    let mc = mcnemar_exact(30, 14)?.value();
    let chi = mcnemar_chi2(42, 6)?;
    let or = odds_ratio(&[[251, 1839], [224, 6265]])?;
    let ec = 100.0 * error_correction(1282, 1250, 1319)?;
    let ok = (binom / 9.4e-4 - 1.0).abs() <= 0.05
        && (mc - 0.024).abs() <= 0.002
        && chi == 27.0
        && (or - 3.82).abs() <= 0.01
        && (ec - 46.38).abs() <= 0.01;
    Ok((ok, format!("binomial {binom:.3e}, McNemar exact {mc:.4}, χ² {chi}, OR {or:.4}, correction {ec:.3}%")))
}

pub(super) fn metric_oracles(_: &ModelConfig) -> Outcome {
    let mut mismatches = Vec::new();
    for seed in 0..50u64 {
        let trace = synthetic::random_trace(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (a, b) = (1, trace.iterations);
        let k = rng.random_range(1..=trace.d);
        let grid = overlap_grid(&trace, a, b, k)?;
        for p in 0..trace.positions {
            for l in 0..trace.layers {
                if grid.values[p][l] != oracles::overlap(&trace.hidden(a, p, l), &trace.hidden(b, p, l), k) {
                    mismatches.push(format!("trace {seed}: overlap at ({p}, {l})"));
                }
            }
        }

        for r in logit_dynamics_within(&trace, a, b)? {
            let o = oracles::logit_fields(trace.top(a, r.position), trace.top(b, r.position));
            let got = oracles::LogitFields {
                argmax_changed: r.argmax_changed,
                gap: r.gap,
                top1_shift: r.top1_shift,
                top1_shift_bound: r.top1_shift_bound,
                replacements: r.replacements,
                suppression: r.suppression,
                suppression_bound: r.suppression_bound,
                new_winner_rank: r.new_winner_rank,
            };
            if got != o {
                mismatches.push(format!("trace {seed}: logit record at {}", r.position));
            }
        }

        let mut labels: Vec<bool> = (0..trace.positions).map(|_| rng.random()).collect();
        labels[rng.random_range(0..trace.positions)] = true;
        for (l, band) in layer_profile(&grid, &labels)?.iter().enumerate() {
            let vals: Vec<f64> = (0..trace.positions).filter(|p| labels[*p]).map(|p| grid.values[p][l]).collect();
            let got = [band.p5, band.p10, band.p25, band.median, band.p75, band.p90, band.p95];
            let want = [5.0, 10.0, 25.0, 50.0, 75.0, 90.0, 95.0].map(|q| oracles::percentile(&vals, q));
            if got != want || band.n != vals.len() {
                mismatches.push(format!("trace {seed}: profile at layer {l}"));
            }
        }

        for l in 0..trace.layers {
            let got: Vec<(usize, usize, f64)> =
                l2_delta_profile(&trace, l, None)?.iter().map(|d| (d.position, d.iteration, d.delta)).collect();
            if got != oracles::l2_deltas(&trace, l) {
                mismatches.push(format!("trace {seed}: L2 deltas at layer {l}"));
            }
        }
    }
    let detail = match mismatches.first() {
        None => "50 random traces: overlap, logit fields, percentiles and L2 deltas match exactly".to_string(),
        Some(m) => format!("{} mismatches, first: {m}", mismatches.len()),
    };
    Ok((mismatches.is_empty(), detail))
}

pub(super) fn probe_pipeline(cfg: &ModelConfig) -> Outcome {
    let pcfg = ProbeTrainConfig::default();
    let planted = loocv(&synthetic::planted_probe_items(7, 16), &pcfg, default_evaluator)?;
    let loocv_ok = planted.accuracy() >= 0.95 && planted.p.value() < 1e-3;

    let mut insignificant = 0;
    for s in 0..10u64 {
        let r = loocv(&synthetic::shuffled_probe_items(7, 100 + s, 16), &pcfg, default_evaluator)?;
        if r.p.value() > 0.05 {
            insignificant += 1;
        }
    }

    let mut recovered = 0;
    for c in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(c);
        let d = 12;
        let mut wired = sample(&mut rng, d, 2 + (c as usize % 3)).into_vec();
        wired.sort_unstable();
        let xs = synthetic::gaussian_inputs(400, d, &mut rng);
        let probe = synthetic::wired_probe(d, 10, &wired, &xs, &mut rng);
        if input_dim_ablation(&probe, &xs)?.essential == wired {
            recovered += 1;
        }
    }

    let model = SstModel::init(cfg.clone(), 4)?;
    let prompt: Vec<u32> = random_tokens(4, cfg.vocab, &mut ChaCha8Rng::seed_from_u64(8));
    let turns = vec![(prompt.clone(), 5), (random_tokens(2, cfg.vocab, &mut ChaCha8Rng::seed_from_u64(9)), 4)];
    let probe = synthetic::halting_probe(&model, cfg.layers.min(3) - 1, &prompt, 3)?;
    let spec = TraceSpec::default();
    let driven = probe_driven_generate(&model, &probe, &turns, 4, &spec)?;
    let flat = generate_turns(&model, &turns, &mut Flat(3), &spec)?;
    let policy_ok = driven.iter().zip(&flat).all(|(a, b)| a.generated == b.generated)
        && driven.iter().all(|r| r.depths.iter().all(|d| *d == 3));

    let ok = loocv_ok && insignificant >= 9 && recovered == 10 && policy_ok;
    Ok((
        ok,
        format!(
            "planted LOOCV {}/{} (p = {:.1e}); {insignificant}/10 shuffles p > 0.05; {recovered}/10 ablations exact; probe-driven run {} flat depth 3",
            planted.correct,
            planted.folds.len(),
            planted.p.value(),
            if policy_ok { "matches" } else { "differs from" }
        ),
    ))
}

pub(super) fn copy_task_training(cfg: &ModelConfig) -> Outcome {
    let data = Dataset {
        train: copy_task(2000, 8, 32, cfg.vocab, 1)?,
        validation: copy_task(64, 8, 32, cfg.vocab, 2)?,
    };
    let init = SstParams::init(cfg, 0)?;
    let initial = mean_loss(cfg, &init, &data.validation, TrainPath::TwoPass)?;
    let tc = TrainConfig {
        steps: 500,
        path: TrainPath::TwoPass,
        optim: OptimConfig { lr_base: 3e-3, total_steps: 500, ..OptimConfig::default() },
        ..TrainConfig::default()
    };
    // Non-finite values and α leaving its bounds abort training with an error.
    let report = train(cfg, init, &data, &tc)?;
    let last = report.validation.last().map(|v| v.1).unwrap_or(f64::NAN);
    let ratio = last / initial;
    Ok((ratio < 0.25, format!("validation loss {initial:.3} → {last:.4} (ratio {ratio:.4}, want < 0.25)")))
}
