use sst_core::model::{Mode, ModelConfig, SstParams};
use sst_core::trainer::{copy_task, mean_loss, train, Dataset, OptimConfig, TrainConfig, TrainPath};
use sst_core::SstError;

fn copy_data(vocab: usize) -> Dataset {
    Dataset { train: copy_task(64, 4, 8, vocab, 1).unwrap(), validation: copy_task(8, 4, 8, vocab, 2).unwrap() }
}

fn small() -> ModelConfig {
    ModelConfig { layers: 2, d_model: 16, n_heads: 2, d_ff: 32, vocab: 16, max_seq: 16, ..Default::default() }
}

fn short(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        validate_every: 2,
        optim: OptimConfig { lr_base: 1e-3, total_steps: steps, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn zero_steps_return_the_initial_parameters() {
    let cfg = small();
    let init = SstParams::init(&cfg, 4).unwrap();
    let r = train(&cfg, init.clone(), &copy_data(cfg.vocab), &short(0)).unwrap();
    assert_eq!(r.params, init);
    assert!(r.losses.is_empty() && r.validation.is_empty());
    assert_eq!(r.forward_passes, 0);
}

#[test]
fn two_pass_runs_the_stack_twice_per_example() {
    let cfg = small();
    let data = copy_data(cfg.vocab);
    let init = SstParams::init(&cfg, 1).unwrap();
    let r = train(&cfg, init.clone(), &data, &short(3)).unwrap();
    assert_eq!(r.micro_steps, 12);
    assert_eq!(r.forward_passes, 24);

    let base = ModelConfig { mode: Mode::Baseline, ..cfg.clone() };
    let r = train(&base, init.clone(), &data, &short(3)).unwrap();
    assert_eq!(r.forward_passes, 12);

    let seq = TrainConfig { path: TrainPath::Sequential, ..short(3) };
    let r = train(&cfg, init, &data, &seq).unwrap();
    assert_eq!(r.forward_passes, 12);
}

#[test]
fn stop_gradient_changes_the_update() {
    let cfg = small();
    let data = copy_data(cfg.vocab);
    let init = SstParams::init(&cfg, 2).unwrap();
    let full = train(&cfg, init.clone(), &data, &short(1)).unwrap();
    let cut = train(&cfg, init, &data, &TrainConfig { stop_grad_pass1: true, ..short(1) }).unwrap();
    // Same forward, different gradient.
    assert_eq!(full.losses, cut.losses);
    assert_ne!(full.params, cut.params);
    assert_ne!(full.steps[0].grad_norm, cut.steps[0].grad_norm);
}

#[test]
fn training_is_deterministic() {
    let cfg = small();
    let data = copy_data(cfg.vocab);
    let init = SstParams::init(&cfg, 3).unwrap();
    let a = train(&cfg, init.clone(), &data, &short(6)).unwrap();
    let b = train(&cfg, init, &data, &short(6)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.validation.iter().map(|v| v.0).collect::<Vec<_>>(), vec![2, 4, 6]);
}

#[test]
fn non_finite_loss_is_a_divergence() {
    let cfg = small();
    let mut init = SstParams::init(&cfg, 5).unwrap();
    init.embed.data_mut()[0] = f64::NAN;
    let data = Dataset { train: copy_task(4, 4, 1, cfg.vocab, 1).unwrap(), validation: Vec::new() };
    match train(&cfg, init, &data, &short(2)) {
        Err(SstError::Divergence { step: 1, .. }) => {}
        other => panic!("expected divergence at step 1, got {:?}", other.map(|r| r.losses)),
    }
}

#[test]
fn schedule_and_clipping() {
    let cfg = small();
    let init = SstParams::init(&cfg, 6).unwrap();
    let tc = TrainConfig {
        optim: OptimConfig { lr_base: 2e-3, warmup_steps: 4, total_steps: 8, clip_norm: 1e-3, ..Default::default() },
        ..short(8)
    };
    let r = train(&cfg, init, &copy_data(cfg.vocab), &tc).unwrap();
    let lrs: Vec<f64> = r.steps.iter().map(|s| s.lr_base).collect();
    let want = [5e-4, 1e-3, 1.5e-3, 2e-3, 1.7071067811865476e-3, 1e-3, 2.9289321881345254e-4, 0.0];
    for (a, b) in lrs.iter().zip(want) {
        assert!((a - b).abs() < 1e-15, "{lrs:?}");
    }
    assert!(r.steps.iter().all(|s| s.lr_stream == 1e-2));
    assert!(r.steps.iter().all(|s| s.clipped && s.grad_norm > 1e-3));
}

#[test]
fn invalid_training_configs_are_rejected() {
    let cfg = small();
    let init = SstParams::init(&cfg, 0).unwrap();
    let data = copy_data(cfg.vocab);
    assert!(matches!(
        train(&cfg, init.clone(), &data, &TrainConfig { accumulation: 0, ..short(1) }),
        Err(SstError::Config(_))
    ));
    assert!(train(&cfg, init.clone(), &Dataset::default(), &short(1)).is_err());
    let bad = ModelConfig { alpha_min: 0.2, alpha_max: 0.1, ..cfg.clone() };
    assert!(train(&bad, init, &data, &short(1)).is_err());
}

/// The state-free model learns the copy task under the same recipe.
#[test]
fn baseline_learns_copy_task() {
    let cfg = ModelConfig { mode: Mode::Baseline, ..ModelConfig::default() };
    let data = Dataset {
        train: copy_task(2000, 8, 32, cfg.vocab, 1).unwrap(),
        validation: copy_task(64, 8, 32, cfg.vocab, 2).unwrap(),
    };
    let init = SstParams::init(&cfg, 0).unwrap();
    let initial = mean_loss(&cfg, &init, &data.validation, TrainPath::TwoPass).unwrap();
    let tc = TrainConfig {
        steps: 500,
        optim: OptimConfig { lr_base: 3e-3, total_steps: 500, ..Default::default() },
        ..Default::default()
    };
    let r = train(&cfg, init, &data, &tc).unwrap();
    let last = r.validation.last().unwrap().1;
    assert!(last / initial < 0.25, "{initial} -> {last}");
}
