//! Runs every acceptance criterion and prints one line per criterion.

use std::io::Write;

use sst_core::model::ModelConfig;
use sst_core::verify::run_all;

#[test]
fn acceptance() {
    let results = run_all(&ModelConfig::default());
    // Straight to stderr so the lines show up without --nocapture.
    let mut err = std::io::stderr().lock();
    for r in &results {
        writeln!(err, "{r}").unwrap();
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    assert_eq!(results.len(), 13);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn tampered_alpha_bound_fails() {
    let cfg = ModelConfig { alpha_min: 0.2, ..ModelConfig::default() };
    for id in [1, 3] {
        let r = sst_core::verify::run_one(id, &cfg).unwrap();
        assert!(!r.passed, "{r}");
    }
}
