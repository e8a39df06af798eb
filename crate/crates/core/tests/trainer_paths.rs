use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sst_core::model::{Mode, ModelConfig, SstModel, SstParams};
use sst_core::trainer::{sequential_forward, two_pass_forward};

fn tokens(n: usize, vocab: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..vocab as u32)).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn sequential_tape_matches_cached_stack() {
    let cfg = ModelConfig::tiny();
    let model = SstModel::init(cfg.clone(), 11).unwrap();
    let toks = tokens(6, cfg.vocab, 1);
    let out = sequential_forward(&cfg, &model.params, &toks).unwrap();
    let (mut lsc, mut kv) = model.new_caches();
    for (t, &tok) in toks.iter().enumerate() {
        let rec = model.forward_position(tok, t, &mut lsc, &mut kv).unwrap();
        assert!(max_diff(&rec.logits, out.logits.row(t)) < 1e-12);
        for l in 0..cfg.layers {
            assert!(max_diff(&rec.ffn_input[l], out.ffn_inputs[l].row(t)) < 1e-12);
            assert!(max_diff(&rec.hidden[l], out.outputs[l].row(t)) < 1e-12);
        }
    }
}

#[test]
fn single_position_paths_agree() {
    let cfg = ModelConfig::tiny();
    let p = SstParams::init(&cfg, 3).unwrap();
    let a = sequential_forward(&cfg, &p, &[5]).unwrap();
    let b = two_pass_forward(&cfg, &p, &[5]).unwrap();
    assert!(a.logits.max_abs_diff(&b.logits) < 1e-15);
    assert_eq!(b.stack_passes, 2);
    assert_eq!(a.stack_passes, 1);
}

#[test]
fn forced_zero_alpha_collapses_to_baseline() {
    let cfg = ModelConfig { force_alpha: Some(0.0), ..ModelConfig::tiny() };
    let base = ModelConfig { mode: Mode::Baseline, ..ModelConfig::tiny() };
    let p = SstParams::init(&cfg, 8).unwrap();
    let toks = tokens(7, cfg.vocab, 2);
    let s = sequential_forward(&cfg, &p, &toks).unwrap();
    let t = two_pass_forward(&cfg, &p, &toks).unwrap();
    let b = sequential_forward(&base, &p, &toks).unwrap();
    assert!(s.logits.max_abs_diff(&b.logits) < 1e-12);
    assert!(t.logits.max_abs_diff(&b.logits) < 1e-12);
}

/// Blend-path error of the two-pass approximation shrinks like `α²`; the
/// unblended first pass only like `α`.
#[test]
fn two_pass_error_orders() {
    let base = ModelConfig { layers: 2, d_model: 8, n_heads: 2, d_ff: 16, vocab: 16, max_seq: 32, ..ModelConfig::default() };
    let p = SstParams::init(&base, 21).unwrap();
    let toks = tokens(8, base.vocab, 3);
    let mut blended = Vec::new();
    let mut first = Vec::new();
    for scale in [0.5, 1.0, 2.0] {
        let cfg = ModelConfig { alpha_min: base.alpha_min * scale, alpha_max: base.alpha_max * scale, ..base.clone() };
        let s = sequential_forward(&cfg, &p, &toks).unwrap();
        let t = two_pass_forward(&cfg, &p, &toks).unwrap();
        blended.push((0..cfg.layers).map(|l| s.ffn_inputs[l].max_abs_diff(&t.ffn_inputs[l])).fold(0.0, f64::max));
        let p1 = t.pass1_outputs.as_ref().unwrap();
        first.push((0..cfg.layers).map(|l| s.outputs[l].max_abs_diff(&p1[l])).fold(0.0, f64::max));
    }
    let slope = |e: &[f64]| (e[2] / e[0]).log2() / 2.0;
    assert!((1.7..=2.3).contains(&slope(&blended)), "blended slope {} from {blended:?}", slope(&blended));
    assert!((0.8..=1.2).contains(&slope(&first)), "pass-1 slope {} from {first:?}", slope(&first));
    let halving = blended[1] / blended[0];
    assert!((3.0..=5.0).contains(&halving), "halving factor {halving}");
}

#[test]
fn sequential_gradients_match_finite_differences() {
    use sst_core::numerics::{finite_difference, relative_error, Tensor};
    use sst_core::trainer::{loss_and_grads, loss_value, TrainPath};
    let cfg = ModelConfig::tiny();
    let p = SstParams::init(&cfg, 5).unwrap();
    let toks = tokens(6, cfg.vocab, 9);
    let mask = vec![true; 6];
    let (_, g, _) = loss_and_grads(&cfg, &p, &toks, &mask, TrainPath::Sequential, false).unwrap();
    let flat: Vec<Tensor> = p.named().into_iter().map(|(_, t)| t.clone()).collect();
    let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
    let f = |ts: &[Tensor]| {
        let q = SstParams::from_named(&cfg, names.iter().cloned().zip(ts.iter().cloned()).collect()).unwrap();
        loss_value(&cfg, &q, &toks, &mask, TrainPath::Sequential).unwrap()
    };
    let num = finite_difference(f, &flat, 1e-5);
    for ((n, a), nt) in g.named().iter().zip(&num) {
        let worst = a.data().iter().zip(nt.data()).map(|(x, y)| relative_error(*x, *y)).fold(0.0, f64::max);
        assert!(worst < 1e-5, "{n}: relative error {worst:e}");
    }
}

#[test]
fn ffn_lipschitz_within_budget() {
    use sst_core::model::ffn_lipschitz;
    for seed in [1, 2, 3] {
        let model = SstModel::init(ModelConfig::default(), seed).unwrap();
        for l in 0..model.config.layers {
            let r = ffn_lipschitz(&model, l, 1000, seed).unwrap();
            assert!(r.empirical <= r.bound, "{r:?}");
        }
    }
}
