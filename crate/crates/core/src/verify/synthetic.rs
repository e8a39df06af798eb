//! Seeded synthetic inputs with known answers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Result, SstError};
use crate::inference::{Flat, Session, TraceSpec};
use crate::model::SstModel;
use crate::numerics::{silu, Tensor};
use crate::probe::{ProbeItem, ProbeModel};
use crate::traceio::TraceArchive;

/// Mixture of iteration-pair overlaps: `(mean, std, weight)` per component.
pub const PLANTED_MIXTURE: [(f64, f64, f64); 2] = [(0.869, 0.092, 0.138), (0.990, 0.004, 0.862)];

pub fn planted_overlaps(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [(m0, s0, _), (m1, s1, w1)] = PLANTED_MIXTURE;
    let hi = Normal::new(m1, s1).expect("std");
    let lo = Normal::new(m0, s0).expect("std");
    (0..n).map(|_| if rng.random::<f64>() < w1 { hi.sample(&mut rng) } else { lo.sample(&mut rng) }).collect()
}

/// 48 questions with up to three depth items per turn over two turns; every
/// other question ends in a MUST_HALT item whose hidden state is shifted
/// along dimension 0.
pub fn planted_probe_items(seed: u64, d: usize) -> Vec<ProbeItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    for q in 0..48 {
        let correct = rng.random_range(1..=3);
        for turn in 0..2 {
            for depth in 1..=correct {
                let must_halt = q % 2 == 0 && depth == correct;
                let mut hidden: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                if must_halt {
                    hidden[0] += 4.0;
                }
                items.push(ProbeItem { question: q, turn, depth, hidden, must_halt });
            }
        }
    }
    items
}

/// The planted items with their labels permuted.
pub fn shuffled_probe_items(seed: u64, shuffle_seed: u64, d: usize) -> Vec<ProbeItem> {
    let mut items = planted_probe_items(seed, d);
    let mut labels: Vec<bool> = items.iter().map(|i| i.must_halt).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    for (i, l) in items.iter_mut().zip(labels) {
        i.must_halt = l;
    }
    items
}

/// Probe whose first layer reads only `wired`, with the threshold centred
/// on the median logit of `inputs` so that decisions vary.
pub fn wired_probe(d: usize, m: usize, wired: &[usize], inputs: &[Vec<f64>], rng: &mut ChaCha8Rng) -> ProbeModel {
    let mut p = ProbeModel::zeros(d, m, 0);
    let mut w1 = vec![0.0; d * m];
    for &i in wired {
        for j in 0..m {
            w1[i * m + j] = rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }
    p.w1 = Tensor::matrix(d, m, w1).expect("shape");
    p.b1 = (0..m).map(|_| rng.random_range(-0.2..0.2)).collect();
    p.w2 = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut logits: Vec<f64> = inputs.iter().map(|x| p.logit(x)).collect();
    logits.sort_by(f64::total_cmp);
    if let Some(mid) = logits.get(logits.len() / 2) {
        p.b2 = p.threshold - mid;
    }
    p
}

pub fn gaussian_inputs(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

/// A one-dimension probe at `layer` that first fires at iteration `depth`
/// of the first generated position for `prompt`, if some hidden dimension
/// allows it.
pub fn halting_probe(model: &SstModel, layer: usize, prompt: &[u32], depth: usize) -> Result<ProbeModel> {
    let d = model.config.d_model;
    let run = Session::new(model).turn(prompt, 1, &mut Flat(depth), &TraceSpec { positions: Some(1), top_k: 1 })?;
    let states: Vec<&Vec<f64>> = run.records[0].iterations.iter().map(|it| &it.hidden[layer]).collect();
    let earlier = |j: usize, s: f64| states[..depth - 1].iter().map(|h| s * h[j]).fold(f64::NEG_INFINITY, f64::max);
    let (dim, sign) = (0..d)
        .flat_map(|j| [(j, 1.0), (j, -1.0)])
        .find(|&(j, s)| s * states[depth - 1][j] > earlier(j, s) + 1e-6)
        .ok_or_else(|| SstError::Contract(format!("no hidden dimension first peaks at iteration {depth}")))?;
    let cut = 0.5 * (sign * states[depth - 1][dim] + earlier(dim, sign));
    let m = 2;
    let mut probe = ProbeModel::zeros(d, m, layer);
    probe.w1.data_mut()[dim * m] = sign;
    // silu is increasing past −1.28; the offset keeps every state there.
    probe.b1[0] = 100.0;
    probe.w2[0] = 1.0;
    probe.b2 = probe.threshold - silu(cut + 100.0);
    Ok(probe)
}

/// Random trace with strictly ordered top-k lists drawn from a vocabulary.
pub fn random_trace(seed: u64) -> TraceArchive {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = rng.random_range(1..=4);
    let d = rng.random_range(4..=16);
    let positions = rng.random_range(1..=8);
    let iterations = rng.random_range(2..=4);
    let top_k = rng.random_range(2..=8);
    let vocab = 3 * top_k as u32;
    // Coarse values make magnitude ties and shared tokens common.
    let hidden: Vec<f32> =
        (0..iterations * positions * layers * d).map(|_| (rng.random_range(-8i32..=8) as f32) * 0.25).collect();
    let mut top = Vec::with_capacity(iterations * positions * top_k);
    for _ in 0..iterations * positions {
        let mut ids: Vec<u32> = (0..vocab).collect();
        ids.shuffle(&mut rng);
        let mut lps: Vec<f32> = (0..top_k).map(|_| -(rng.random_range(0..40) as f32) * 0.125).collect();
        lps.sort_by(|a, b| b.total_cmp(a));
        let mut list: Vec<(u32, f32)> = ids[..top_k].iter().copied().zip(lps).collect();
        list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        top.extend(list);
    }
    TraceArchive::new(layers, d, positions, iterations, top_k, hidden, top).expect("consistent trace")
}
