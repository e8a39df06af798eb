use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sst_core::analysis::gmm::{gmm_crossover, gmm_fit, stable_crossover, GMM_MAX_ITERS};
use sst_core::verify::synthetic::planted_overlaps as planted;

#[test]
fn planted_mixture_is_recovered() {
    let x = planted(20_000, 42);
    let f = gmm_fit(&x, 2, 42, GMM_MAX_ITERS).unwrap();
    let (lo, hi) = (&f.components[0], &f.components[1]);
    assert!((lo.mean - 0.869).abs() < 0.003, "{lo:?}");
    assert!((hi.mean - 0.990).abs() < 0.003, "{hi:?}");
    assert!((hi.weight - 0.862).abs() < 0.02, "{hi:?}");
    let c = gmm_crossover(&f).unwrap();
    assert!((c - 0.976).abs() < 0.005, "crossover {c}");
    assert!(f.history.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
}

#[test]
fn crossover_is_stable_across_component_counts() {
    let x = planted(20_000, 42);
    let cs: Vec<f64> = (2..=5).map(|k| stable_crossover(&gmm_fit(&x, k, 42, GMM_MAX_ITERS).unwrap()).unwrap()).collect();
    let spread = cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - cs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.01, "{cs:?}");
}

#[test]
fn separated_spikes_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = Normal::new(0.2, 0.01).unwrap();
    let b = Normal::new(0.8, 0.01).unwrap();
    let x: Vec<f64> = (0..4000).map(|i| if i % 4 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) }).collect();
    let f = gmm_fit(&x, 2, 1, GMM_MAX_ITERS).unwrap();
    assert!((f.components[0].mean - 0.2).abs() < 1e-3);
    assert!((f.components[1].mean - 0.8).abs() < 1e-3);
    assert!((f.components[0].weight - 0.25).abs() < 0.01);
    assert!((gmm_crossover(&f).unwrap() - 0.5).abs() < 0.05);
}

#[test]
fn tight_cluster_with_sparse_outliers_concentrates_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = Normal::new(0.5, 0.01).unwrap();
    let x: Vec<f64> =
        (0..2000).map(|i| if i % 100 == 0 { rng.random_range(0.0..1.0) } else { n.sample(&mut rng) }).collect();
    let f = gmm_fit(&x, 2, 42, GMM_MAX_ITERS).unwrap();
    let heaviest = f.components.iter().map(|c| c.weight).fold(0.0, f64::max);
    assert!(heaviest >= 0.98, "{:?}", f.components);
}

#[test]
fn fits_are_deterministic() {
    let x = planted(2000, 9);
    assert_eq!(gmm_fit(&x, 3, 5, GMM_MAX_ITERS).unwrap(), gmm_fit(&x, 3, 5, GMM_MAX_ITERS).unwrap());
}
