//! Deliberately plain recomputations used as references. They share no code
//! with the implementations they check.

use std::collections::HashMap;

use crate::model::SstModel;
use crate::traceio::TraceArchive;

fn rms(x: &[f64], g: &[f64]) -> Vec<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let r = (ms + 1e-6).sqrt();
    x.iter().zip(g).map(|(v, g)| v / r * g).collect()
}

fn matvec(x: &[f64], w: &crate::numerics::Tensor) -> Vec<f64> {
    (0..w.cols()).map(|j| (0..w.rows()).map(|i| x[i] * w.at(i, j)).sum()).collect()
}

fn rotate(v: &mut [f64], pos: usize, heads: usize, base: f64) {
    let hd = v.len() / heads;
    for h in 0..heads {
        for i in 0..hd / 2 {
            let angle = pos as f64 / base.powf(2.0 * i as f64 / hd as f64);
            let (a, b) = (h * hd + i, h * hd + i + hd / 2);
            let (x, y) = (v[a], v[b]);
            v[a] = x * angle.cos() - y * angle.sin();
            v[b] = x * angle.sin() + y * angle.cos();
        }
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Pre-norm decoder over the whole sequence with no cache and no state
/// stream: logits per position.
pub fn textbook_forward(model: &SstModel, tokens: &[u32]) -> Vec<Vec<f64>> {
    let cfg = &model.config;
    let p = &model.params;
    let (heads, hd) = (cfg.n_heads, cfg.head_dim());
    let mut x: Vec<Vec<f64>> = tokens.iter().map(|t| p.embed.row(*t as usize).to_vec()).collect();
    for w in &p.layers {
        let n: Vec<Vec<f64>> = x.iter().map(|r| rms(r, w.attn_norm.data())).collect();
        let q: Vec<Vec<f64>> = n
            .iter()
            .enumerate()
            .map(|(t, r)| {
                let mut v = matvec(r, &w.wq);
                rotate(&mut v, t, heads, cfg.rope_base);
                v
            })
            .collect();
        let k: Vec<Vec<f64>> = n
            .iter()
            .enumerate()
            .map(|(t, r)| {
                let mut v = matvec(r, &w.wk);
                rotate(&mut v, t, heads, cfg.rope_base);
                v
            })
            .collect();
        let v: Vec<Vec<f64>> = n.iter().map(|r| matvec(r, &w.wv)).collect();
        let mut next = Vec::with_capacity(x.len());
        for t in 0..x.len() {
            let mut mixed = vec![0.0; cfg.d_model];
            for h in 0..heads {
                let s: Vec<f64> = (0..=t)
                    .map(|j| (0..hd).map(|c| q[t][h * hd + c] * k[j][h * hd + c]).sum::<f64>() / (hd as f64).sqrt())
                    .collect();
                let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = s.iter().map(|z| (z - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for (j, ej) in e.iter().enumerate() {
                    for c in 0..hd {
                        mixed[h * hd + c] += ej / z * v[j][h * hd + c];
                    }
                }
            }
            let attn = matvec(&mixed, &w.wo);
            let h: Vec<f64> = x[t].iter().zip(&attn).map(|(a, b)| a + b).collect();
            let hn = rms(&h, w.ffn_norm.data());
            let g = matvec(&hn, &w.w_gate);
            let u = matvec(&hn, &w.w_up);
            let inner: Vec<f64> = g.iter().zip(&u).map(|(g, u)| gelu(*g) * u).collect();
            let down = matvec(&inner, &w.w_down);
            next.push(h.iter().zip(&down).map(|(a, b)| a + b).collect());
        }
        x = next;
    }
    x.iter()
        .map(|r| {
            let n = rms(r, p.final_norm.data());
            match &p.head {
                Some(head) => matvec(&n, head),
                None => (0..cfg.vocab).map(|t| p.embed.row(t).iter().zip(&n).map(|(a, b)| a * b).sum()).collect(),
            }
        })
        .collect()
}

/// Membership in the top `k` by magnitude: fewer than `k` entries beat it,
/// where beating means larger magnitude or equal magnitude at a lower index.
fn in_top_k(v: &[f64], i: usize, k: usize) -> bool {
    let beaten_by =
        (0..v.len()).filter(|&j| v[j].abs() > v[i].abs() || (v[j].abs() == v[i].abs() && j < i)).count();
    beaten_by < k
}

pub fn overlap(u: &[f64], v: &[f64], k: usize) -> f64 {
    let shared = (0..u.len()).filter(|&i| in_top_k(u, i, k) && in_top_k(v, i, k)).count();
    shared as f64 / k as f64
}

/// Field-by-field comparison record, same layout as the analysis output.
#[derive(Debug, PartialEq)]
pub struct LogitFields {
    pub argmax_changed: bool,
    pub gap: f64,
    pub top1_shift: f64,
    pub top1_shift_bound: bool,
    pub replacements: usize,
    pub suppression: f64,
    pub suppression_bound: bool,
    pub new_winner_rank: Option<usize>,
}

pub fn logit_fields(a: &[(u32, f32)], b: &[(u32, f32)]) -> LogitFields {
    let ma: HashMap<u32, (usize, f64)> = a.iter().enumerate().map(|(r, (t, lp))| (*t, (r, *lp as f64))).collect();
    let mb: HashMap<u32, f64> = b.iter().map(|(t, lp)| (*t, *lp as f64)).collect();
    let min_a = a.iter().map(|p| p.1 as f64).fold(f64::INFINITY, f64::min);
    let min_b = b.iter().map(|p| p.1 as f64).fold(f64::INFINITY, f64::min);
    let (wa, wb) = (a[0].0, b[0].0);
    let lp_wb_b = b[0].1 as f64;
    let lp_wa_a = a[0].1 as f64;
    let (top1_shift, top1_shift_bound, new_winner_rank) = match ma.get(&wb) {
        Some((r, lp)) => ((lp_wb_b - lp).abs(), false, Some(r + 1)),
        None => ((lp_wb_b - min_a).abs(), true, None),
    };
    let (suppression, suppression_bound) = match mb.get(&wa) {
        Some(lp) => (lp_wa_a - lp, false),
        None => (lp_wa_a - min_b, true),
    };
    LogitFields {
        argmax_changed: wa != wb,
        gap: lp_wa_a - a[1].1 as f64,
        top1_shift,
        top1_shift_bound,
        replacements: b.iter().filter(|(t, _)| !ma.contains_key(t)).count(),
        suppression,
        suppression_bound,
        new_winner_rank,
    }
}

/// Interpolated percentile after a selection sort.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    for i in 0..v.len() {
        let m = (i..v.len()).min_by(|a, b| v[*a].total_cmp(&v[*b])).expect("nonempty");
        v.swap(i, m);
    }
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// `‖h_i − h_{i−1}‖` for every position and successive pair, position-major.
pub fn l2_deltas(trace: &TraceArchive, layer: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for p in 0..trace.positions {
        for i in 2..=trace.iterations {
            let a = trace.hidden(i - 1, p, layer);
            let b = trace.hidden(i, p, layer);
            let mut s = 0.0;
            for c in 0..a.len() {
                s += (b[c] - a[c]) * (b[c] - a[c]);
            }
            out.push((p, i, s.sqrt()));
        }
    }
    out
}
