use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sst_core::inference::staged_compute;
use sst_core::traceio::{save_model, TraceArchive};
use sst_core::verify::{oracles, synthetic};

const TINY: &[&str] = &["layers=2", "d_model=8", "n_heads=2", "d_ff=16", "vocab=16", "max_seq=32"];

fn sst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sst")).args(args).output().expect("binary runs")
}

fn with_sets<'a>(base: &[&'a str], sets: &[&'a str]) -> Vec<&'a str> {
    let mut v = base.to_vec();
    for s in sets {
        v.push("--set");
        v.push(s);
    }
    v
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn manifest(dir: &Path) -> BTreeMap<String, String> {
    kv_file(&dir.join("manifest.txt"))
}

fn kv_file(path: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn train_tiny(out: &Path, extra: &[&str]) -> Output {
    let mut sets = TINY.to_vec();
    sets.extend(["steps=10", "copy_count=20", "copy_len=4", "copy_alphabet=8", "copy_validation=4", "validate_every=5"]);
    sets.extend(extra);
    let o = out.to_str().unwrap();
    sst(&with_sets(&["train", "--out", o, "--seed", "3"], &sets))
}

/// Untrained tiny checkpoint plus a copy-style prompts file.
fn fixture(dir: &Path, mode: &str) -> (PathBuf, PathBuf) {
    let cfg = sst_core::model::ModelConfig { mode: mode.parse().unwrap(), ..sst_core::model::ModelConfig::tiny() };
    let model = sst_core::model::SstModel::init(cfg, 5).unwrap();
    let ckpt = dir.join(format!("{mode}.sst"));
    save_model(&model, &ckpt).unwrap();
    let prompts = dir.join("prompts.txt");
    std::fs::write(&prompts, "# copy\n1 2 3 15 | 1 2 3\n4 5 15 ; 6 15 | 6\n7 7 15 | 7 7\n").unwrap();
    (ckpt, prompts)
}

#[test]
fn no_arguments_prints_usage() {
    let o = sst(&[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("Usage"), "{}", text(&o));
}

#[test]
fn unknown_keys_are_rejected_with_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# settings\nsteps=2\nlerning_rate=0.1\n").unwrap();
    let o = sst(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("run.cfg:3: unknown key \"lerning_rate\""), "{}", text(&o));

    let o = sst(&["train", "--set", "steps=many"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("--set #1: cannot parse steps"), "{}", text(&o));

    std::fs::write(&cfg, "layers=2\nalpha_min=oops\n").unwrap();
    let o = sst(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("run.cfg:2"), "{}", text(&o));

    let o = sst(&["train", "--set", "alpha_min=0.5", "--set", "alpha_max=0.4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
}

#[test]
fn training_is_reproducible_and_mode_only_changes_the_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        let o = train_tiny(out, &["mode=sst"]);
        assert!(o.status.success(), "{}", text(&o));
    }
    assert_eq!(csv_rows(&a.join("loss.csv")).len(), 10);
    assert_eq!(csv_rows(&a.join("validation.csv")).len(), 2);
    assert_eq!(std::fs::read(a.join("checkpoint.sst")).unwrap(), std::fs::read(b.join("checkpoint.sst")).unwrap());
    assert_eq!(std::fs::read(a.join("loss.csv")).unwrap(), std::fs::read(b.join("loss.csv")).unwrap());

    let o = train_tiny(&c, &["mode=baseline"]);
    assert!(o.status.success(), "{}", text(&o));
    let (ma, mc) = (manifest(&a), manifest(&c));
    let differing: Vec<&String> =
        ma.keys().filter(|k| *k != "created" && ma.get(*k) != mc.get(*k)).collect();
    assert_eq!(differing, vec!["forward_passes", "model.mode", "overrides"]);
    assert!(mc["overrides"].ends_with("mode=baseline"));
    assert_eq!(ma["forward_passes"], "80");
    assert_eq!(mc["forward_passes"], "40");
}

#[test]
fn flat_and_staged_generation() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, prompts) = fixture(dir.path(), "sst");
    let out = dir.path().join("flat");
    let o = sst(&with_sets(
        &["generate", "--out", out.to_str().unwrap()],
        &[&format!("checkpoint={}", ckpt.display()), &format!("prompts={}", prompts.display()), "max_new=3", "repeat=3"],
    ));
    assert!(o.status.success(), "{}", text(&o));
    let rows = csv_rows(&out.join("generations.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[2] == "1"));
    let t = TraceArchive::read(&out.join("q001_t1.trace")).unwrap();
    assert_eq!((t.iterations, t.positions, t.layers), (1, 3, 2));
    assert!(manifest(&out)["outputs"].contains("q002_t0.trace"));

    let staged = dir.path().join("staged");
    let o = sst(&with_sets(
        &["generate", "--out", staged.to_str().unwrap()],
        &[
            &format!("checkpoint={}", ckpt.display()),
            &format!("prompts={}", prompts.display()),
            "policy=staged",
            "i_max=4",
            "max_new=3",
        ],
    ));
    assert!(o.status.success(), "{}", text(&o));
    let mut outcomes = vec![Vec::new(); 3];
    for k in 1..=4 {
        let rows = csv_rows(&staged.join(format!("stage{k}/generations.csv")));
        assert!(rows.iter().all(|r| r[2] == k.to_string()));
        for r in rows.iter().filter(|r| !r[4].is_empty()) {
            outcomes[r[0].parse::<usize>().unwrap()].push(r[4] == "true");
        }
    }
    let want = staged_compute(&outcomes).unwrap();
    let caps: Vec<f64> = csv_rows(&staged.join("capacity.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(caps, want);
}

#[test]
fn generation_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, prompts) = fixture(dir.path(), "sst");
    let ck = format!("checkpoint={}", ckpt.display());
    let pr = format!("prompts={}", prompts.display());
    let out = dir.path().join("x");
    let o = sst(&with_sets(&["generate", "--out", out.to_str().unwrap()], &[&ck, &pr, "policy=probe"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("probe=PATH"), "{}", text(&o));
    let o = sst(&with_sets(&["generate"], &[&pr]));
    assert_eq!(o.status.code(), Some(1));
    let o = sst(&with_sets(&["generate", "--out", out.to_str().unwrap()], &["checkpoint=/nonexistent.sst", &pr]));
    assert_eq!(o.status.code(), Some(2));
    let o = sst(&with_sets(&["generate", "--out", out.to_str().unwrap()], &[&ck, &pr, "max_new=40"]));
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn evaluate_writes_matrix_and_capacities() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, prompts) = fixture(dir.path(), "sst");
    let out = dir.path().join("eval");
    let o = sst(&with_sets(
        &["evaluate", "--out", out.to_str().unwrap()],
        &[&format!("checkpoint={}", ckpt.display()), &format!("prompts={}", prompts.display()), "i_max=3", "max_new=3"],
    ));
    assert!(o.status.success(), "{}", text(&o));
    let rows = csv_rows(&out.join("passfail.csv"));
    assert_eq!(rows.len(), 9);
    let mut flat = vec![Vec::new(); 3];
    for r in &rows {
        flat[r[0].parse::<usize>().unwrap()].push(r[2] == "true");
    }
    let caps: Vec<f64> = csv_rows(&out.join("capacity.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(caps, staged_compute(&flat).unwrap());
    assert_eq!(csv_rows(&out.join("flat_report.csv")).len(), 3);
}

#[test]
fn probe_without_must_halt_questions_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, prompts) = fixture(dir.path(), "sst");
    let out = dir.path().join("probe");
    let o = sst(&with_sets(
        &["probe", "--out", out.to_str().unwrap()],
        &[&format!("checkpoint={}", ckpt.display()), &format!("prompts={}", prompts.display()), "max_new=3"],
    ));
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let o = sst(&with_sets(
        &["probe", "--out", out.to_str().unwrap()],
        &[&format!("checkpoint={}", ckpt.display()), &format!("prompts={}", prompts.display()), "layers=5"],
    ));
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
}

#[test]
fn analyze_identical_iterations_is_all_stable() {
    // A baseline model has no state to carry, so every iteration repeats.
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, prompts) = fixture(dir.path(), "baseline");
    let gen = dir.path().join("gen");
    let o = sst(&with_sets(
        &["generate", "--out", gen.to_str().unwrap()],
        &[&format!("checkpoint={}", ckpt.display()), &format!("prompts={}", prompts.display()), "iters=2", "max_new=3"],
    ));
    assert!(o.status.success(), "{}", text(&o));
    let out = dir.path().join("an");
    let o = sst(&with_sets(
        &["analyze", "--out", out.to_str().unwrap()],
        &[&format!("traces={}", gen.display()), &format!("checkpoint={}", ckpt.display())],
    ));
    assert!(o.status.success(), "{}", text(&o));
    let summary = kv_file(&out.join("summary.txt"));
    assert_eq!(summary["low_overlap_positions"], "0");
    assert_eq!(summary["stable_positions"], "12"); // four turns, three positions each
    assert_eq!(summary["argmax_changes"], "0");
    assert!(csv_rows(&out.join("overlap_q000_t0.csv")).iter().all(|r| r[2] == "1.0"));
    assert!(csv_rows(&out.join("l2_delta.csv")).iter().all(|r| r[4] == "0.0"));
    assert!(csv_rows(&out.join("layer_profile.csv")).iter().all(|r| r[0] == "stable"));
}

#[test]
fn analyze_matches_brute_force_on_synthetic_traces() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    std::fs::create_dir(&traces).unwrap();
    // Same layer count is required for pooling; pick seeds that agree.
    let mut kept = Vec::new();
    let mut seed = 0;
    while kept.len() < 3 {
        let t = synthetic::random_trace(seed);
        if kept.first().is_none_or(|f: &TraceArchive| f.layers == t.layers) && t.d >= 4 {
            t.write(&traces.join(format!("s{seed:03}.trace"))).unwrap();
            kept.push(t);
        }
        seed += 1;
    }
    let out = dir.path().join("an");
    let o = sst(&with_sets(
        &["analyze", "--out", out.to_str().unwrap()],
        &[&format!("traces={}", traces.display()), "overlap_k=3", "iter_b=2"],
    ));
    assert!(o.status.success(), "{}", text(&o));
    let mut names: Vec<_> = std::fs::read_dir(&traces).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    for (path, t) in names.iter().zip(&kept) {
        let stem = path.file_stem().unwrap().to_string_lossy();
        for r in csv_rows(&out.join(format!("overlap_{stem}.csv"))) {
            let (p, l): (usize, usize) = (r[0].parse().unwrap(), r[1].parse().unwrap());
            let want = oracles::overlap(&t.hidden(1, p, l), &t.hidden(2, p, l), 3);
            assert_eq!(r[2].parse::<f64>().unwrap(), want);
        }
        let logit: Vec<Vec<String>> = csv_rows(&out.join("logit_dynamics.csv")).into_iter().filter(|r| r[0] == stem).collect();
        assert_eq!(logit.len(), t.positions);
        for r in logit {
            let p: usize = r[1].parse().unwrap();
            let f = oracles::logit_fields(t.top(1, p), t.top(2, p));
            assert_eq!(r[2], f.argmax_changed.to_string());
            assert_eq!(r[3].parse::<f64>().unwrap(), f.gap);
            assert_eq!(r[6], f.replacements.to_string());
        }
    }
}

#[test]
fn verify_reports_each_criterion() {
    let o = sst(&["verify", "--set", "criteria=1,4,8"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("[PASS]")).count(), 3);

    let o = sst(&["verify", "--set", "alpha_min=0.2", "--set", "criteria=1,3"]);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("[FAIL]")).count(), 2, "{out}");

    let o = sst(&["verify", "--set", "criteria=14"]);
    assert_eq!(o.status.code(), Some(1));
}
