use sst_core::probe::{default_evaluator, loocv, ProbeTrainConfig};
use sst_core::verify::synthetic::{planted_probe_items as planted, shuffled_probe_items};

fn shuffled(seed: u64) -> Vec<sst_core::probe::ProbeItem> {
    shuffled_probe_items(7, seed, 16)
}

#[test]
fn separable_labels_are_recovered() {
    let items = planted(7, 16);
    let r = loocv(&items, &ProbeTrainConfig::default(), default_evaluator).unwrap();
    assert_eq!(r.folds.len(), 24);
    assert!(r.accuracy() >= 0.95, "accuracy {}", r.accuracy());
    assert!(r.p.value() < 1e-3, "p {}", r.p.value());
}

#[test]
fn shuffled_labels_are_not_significant() {
    let cfg = ProbeTrainConfig::default();
    let insignificant = (0..10u64)
        .filter(|s| loocv(&shuffled(100 + s), &cfg, default_evaluator).unwrap().p.value() > 0.05)
        .count();
    assert!(insignificant >= 9, "{insignificant}/10 shuffles insignificant");
}

#[test]
fn held_out_question_never_trains_its_fold() {
    let items = planted(3, 4);
    let r = loocv(&items, &ProbeTrainConfig { epochs: 2, ..Default::default() }, |_, held| {
        let q = held[0].question;
        held.iter().all(|i| i.question == q)
    })
    .unwrap();
    assert!(r.folds.iter().all(|f| f.1));
}

#[test]
fn loocv_is_deterministic() {
    let items = planted(11, 8);
    let cfg = ProbeTrainConfig { epochs: 10, ..Default::default() };
    let a = loocv(&items, &cfg, default_evaluator).unwrap();
    assert_eq!(a, loocv(&items, &cfg, default_evaluator).unwrap());
}
