use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sst_core::numerics::Tensor;
use sst_core::trainer::associative_scan;

fn random(t: usize, d: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(t, d, (0..t * d).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn scan(c: &mut Criterion) {
    let mut g = c.benchmark_group("scan");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for t in [16, 128, 512] {
        let (a, b) = (random(t, 32, 0.0, 1.0, &mut rng), random(t, 32, -1.0, 1.0, &mut rng));
        g.bench_with_input(BenchmarkId::new("associative", t), &t, |bench, _| {
            bench.iter(|| associative_scan(&a, &b).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("loop", t), &t, |bench, _| {
            bench.iter(|| {
                let mut s = vec![0.0; 32];
                let mut out = Vec::with_capacity(t * 32);
                for i in 0..t {
                    for (j, v) in s.iter_mut().enumerate() {
                        *v = a.at(i, j) * *v + b.at(i, j);
                    }
                    out.extend_from_slice(&s);
                }
                out
            })
        });
    }
    g.finish();
}

criterion_group!(benches, scan);
criterion_main!(benches);
