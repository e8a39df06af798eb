//! Wengert-list reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every primitive records its output value plus whatever it needs for the
//! vector-Jacobian product. `backward` walks the list once in reverse.
//! Constants never receive gradients; leaves always do.

use super::functions::{gelu_tanh, gelu_tanh_grad, inv_rms, sigmoid, silu, silu_grad};
use super::tensor::matmul_into;
use super::Tensor;
use crate::error::{Result, SstError};
use crate::trainer::scan::associative_scan;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Const,
    MatMul(Var, Var),
    /// a · bᵀ
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// rows of x scaled elementwise by a d-vector
    MulRow(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Gelu(Var),
    Silu(Var),
    RmsNorm { x: Var, gamma: Var, inv: Vec<f64> },
    Embed { table: Var, ids: Vec<usize> },
    Rope { x: Var, positions: Vec<usize>, heads: usize, base: f64 },
    Attention { q: Var, k: Var, v: Var, heads: usize, offset: usize, probs: Vec<f64> },
    Rows { x: Var, start: usize, len: usize },
    Concat(Vec<Var>),
    Scan { a: Var, b: Var },
    ShiftRight(Var),
    Sum(Var),
    Dot(Var, Var),
    MaskedCe { logits: Var, rows: Vec<(usize, usize)>, probs: Vec<f64> },
    BceWithLogits { logits: Var, targets: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.shapes[v.0].clone(), g.clone()).expect("gradient shape"))
    }

    /// Gradient of `v`, zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v).unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn shape_of(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Trainable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Const, false)
    }

    /// Copy of `v`'s value with the gradient path cut.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        assert_eq!(k, bv.rows(), "matmul inner extents");
        let mut out = vec![0.0; m * n];
        matmul_into(av.data(), bv.data(), &mut out, m, k, n);
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(vec![m, n], out).unwrap(), Op::MatMul(a, b), ng)
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        assert_eq!(k, bv.cols(), "matmul_t inner extents");
        let (ad, bd) = (av.data(), bv.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let ar = &ad[i * k..(i + 1) * k];
            for j in 0..n {
                let br = &bd[j * k..(j + 1) * k];
                out[i * n + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
            }
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(vec![m, n], out).unwrap(), Op::MatMulT(a, b), ng)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "elementwise shapes");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::new(av.shape().to_vec(), data).unwrap();
        let ng = self.ng(a) || self.ng(b);
        self.push(t, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn row_op(&mut self, x: Var, r: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (xv, rv) = (self.value(x), self.value(r));
        let d = xv.cols();
        assert_eq!(rv.numel(), d, "row operand length");
        let rd = rv.data();
        let data = xv.data().iter().enumerate().map(|(i, v)| f(*v, rd[i % d])).collect();
        let t = Tensor::new(xv.shape().to_vec(), data).unwrap();
        let ng = self.ng(x) || self.ng(r);
        self.push(t, op, ng)
    }

    pub fn mul_row(&mut self, x: Var, r: Var) -> Var {
        self.row_op(x, r, |a, b| a * b, Op::MulRow(x, r))
    }

    pub fn add_row(&mut self, x: Var, r: Var) -> Var {
        self.row_op(x, r, |a, b| a + b, Op::AddRow(x, r))
    }

    /// `scale * x + shift`
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| scale * v + shift).collect();
        let t = Tensor::new(xv.shape().to_vec(), data).unwrap();
        let ng = self.ng(x);
        self.push(t, Op::Affine(x, scale), ng)
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| f(*v)).collect();
        let t = Tensor::new(xv.shape().to_vec(), data).unwrap();
        let ng = self.ng(x);
        self.push(t, op, ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.map(x, gelu_tanh, Op::Gelu(x))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.map(x, silu, Op::Silu(x))
    }

    /// Row-wise RMSNorm with a shared gamma.
    pub fn rms_norm(&mut self, x: Var, gamma: Var, eps: f64) -> Var {
        let (xv, gv) = (self.value(x), self.value(gamma));
        let d = xv.cols();
        assert_eq!(gv.numel(), d, "rms_norm gamma length");
        let rows = xv.rows();
        let mut out = vec![0.0; rows * d];
        let mut inv = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let s = inv_rms(row, eps);
            inv.push(s);
            for j in 0..d {
                out[r * d + j] = gv.data()[j] * row[j] * s;
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), out).unwrap();
        let ng = self.ng(x) || self.ng(gamma);
        self.push(t, Op::RmsNorm { x, gamma, inv }, ng)
    }

    /// Gathers rows of `table` for each id.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Var {
        let tv = self.value(table);
        let d = tv.cols();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(tv.row(id));
        }
        let t = Tensor::new(vec![ids.len(), d], out).unwrap();
        let ng = self.ng(table);
        self.push(t, Op::Embed { table, ids: ids.to_vec() }, ng)
    }

    /// Rotary position embedding, half-split pairing inside each head.
    pub fn rope(&mut self, x: Var, positions: &[usize], heads: usize, base: f64) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.rows(), positions.len(), "rope positions");
        let out = rope_apply(xv.data(), xv.cols(), positions, heads, base, 1.0);
        let t = Tensor::new(xv.shape().to_vec(), out).unwrap();
        let ng = self.ng(x);
        self.push(t, Op::Rope { x, positions: positions.to_vec(), heads, base }, ng)
    }

    /// Causal multi-head attention. Query row `i` sits at absolute position
    /// `offset + i` and attends to key rows `0..=offset + i`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, offset: usize) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (tq, d) = (qv.rows(), qv.cols());
        let tk = kv.rows();
        assert!(offset + tq <= tk, "attention needs keys up to the last query");
        let hd = d / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut probs = vec![0.0; heads * tq * tk];
        let mut out = vec![0.0; tq * d];
        for h in 0..heads {
            let cols = h * hd..(h + 1) * hd;
            for i in 0..tq {
                let visible = offset + i + 1;
                let qi = &qv.row(i)[cols.clone()];
                let base = (h * tq + i) * tk;
                let mut max = f64::NEG_INFINITY;
                for j in 0..visible {
                    let kj = &kv.row(j)[cols.clone()];
                    let s = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                    probs[base + j] = s;
                    max = max.max(s);
                }
                let mut z = 0.0;
                for j in 0..visible {
                    let e = (probs[base + j] - max).exp();
                    probs[base + j] = e;
                    z += e;
                }
                for j in 0..visible {
                    probs[base + j] /= z;
                }
                let orow = &mut out[i * d + h * hd..i * d + (h + 1) * hd];
                for j in 0..visible {
                    let p = probs[base + j];
                    let vj = &vv.row(j)[cols.clone()];
                    for (o, x) in orow.iter_mut().zip(vj) {
                        *o += p * x;
                    }
                }
            }
        }
        let t = Tensor::new(vec![tq, d], out).unwrap();
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        self.push(t, Op::Attention { q, k, v, heads, offset, probs }, ng)
    }

    /// Contiguous block of rows.
    pub fn rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let d = xv.cols();
        let data = xv.data()[start * d..(start + len) * d].to_vec();
        let t = Tensor::new(vec![len, d], data).unwrap();
        let ng = self.ng(x);
        self.push(t, Op::Rows { x, start, len }, ng)
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let d = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), d, "concat column mismatch");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Tensor::new(vec![rows, d], data).unwrap(), Op::Concat(parts.to_vec()), ng)
    }

    /// `S_t = A_t ⊙ S_{t-1} + B_t`, `S_{-1} = 0`, over rows.
    pub fn scan(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "scan operand shapes");
        let s = associative_scan(av, bv).expect("scan shapes checked");
        let ng = self.ng(a) || self.ng(b);
        self.push(s, Op::Scan { a, b }, ng)
    }

    /// Row t receives row t-1; row 0 becomes zero.
    pub fn shift_right(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let d = xv.cols();
        let n = xv.numel();
        let mut data = vec![0.0; n];
        if n > d {
            data[d..].copy_from_slice(&xv.data()[..n - d]);
        }
        let t = Tensor::new(xv.shape().to_vec(), data).unwrap();
        let ng = self.ng(x);
        self.push(t, Op::ShiftRight(x), ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.numel(), bv.numel(), "dot lengths");
        let s = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).sum();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::scalar(s), Op::Dot(a, b), ng)
    }

    /// Mean negative log-likelihood over `(row, target)` pairs of a logits
    /// matrix.
    pub fn masked_ce(&mut self, logits: Var, rows: &[(usize, usize)]) -> Result<Var> {
        if rows.is_empty() {
            return Err(SstError::Contract("cross-entropy over an empty mask".into()));
        }
        let lv = self.value(logits);
        let v = lv.cols();
        let mut probs = Vec::with_capacity(rows.len() * v);
        let mut loss = 0.0;
        for &(r, target) in rows {
            let row = lv.row(r);
            let lse = super::functions::log_sum_exp(row);
            loss -= row[target] - lse;
            probs.extend(row.iter().map(|x| (x - lse).exp()));
        }
        loss /= rows.len() as f64;
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MaskedCe { logits, rows: rows.to_vec(), probs },
            ng,
        ))
    }

    /// Mean binary cross-entropy of a column of logits against 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.numel(), targets.len(), "bce lengths");
        let n = targets.len() as f64;
        let loss = lv
            .data()
            .iter()
            .zip(targets)
            .map(|(z, y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        let ng = self.ng(logits);
        self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits { logits, targets: targets.to_vec() },
            ng,
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(SstError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape_of(loss)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.ng(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        f(slot);
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf | Op::Const => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                // dA = G Bᵀ, dB = Aᵀ G
                self.accumulate(grads, *a, |ga| {
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &bv.data()[p * n..(p + 1) * n];
                            let grow = &g[i * n..(i + 1) * n];
                            ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..m {
                        for p in 0..k {
                            let aval = av.data()[i * k + p];
                            if aval == 0.0 {
                                continue;
                            }
                            let grow = &g[i * n..(i + 1) * n];
                            for (o, x) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += aval * x;
                            }
                        }
                    }
                });
            }
            Op::MatMulT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                // out = A Bᵀ: dA = G B, dB = Gᵀ A
                self.accumulate(grads, *a, |ga| {
                    matmul_into(g, bv.data(), ga, m, n, k);
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let arow = &av.data()[i * k..(i + 1) * k];
                            for (o, x) in gb[j * k..(j + 1) * k].iter_mut().zip(arow) {
                                *o += gij * x;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                self.accumulate(grads, *b, |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                self.accumulate(grads, *b, |gb| {
                    for (o, x) in gb.iter_mut().zip(g) {
                        *o -= x;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                });
            }
            Op::MulRow(x, r) => {
                let (xv, rv) = (self.value(*x).data(), self.value(*r).data());
                let d = rv.len();
                self.accumulate(grads, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * rv[i % d];
                    }
                });
                self.accumulate(grads, *r, |gr| {
                    for i in 0..g.len() {
                        gr[i % d] += g[i] * xv[i];
                    }
                });
            }
            Op::AddRow(x, r) => {
                let d = self.value(*r).numel();
                self.accumulate(grads, *x, |gx| add_into(gx, g));
                self.accumulate(grads, *r, |gr| {
                    for i in 0..g.len() {
                        gr[i % d] += g[i];
                    }
                });
            }
            Op::Affine(x, scale) => {
                self.accumulate(grads, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += scale * g[i];
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                self.accumulate(grads, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * gelu_tanh_grad(xv[i]);
                    }
                });
            }
            Op::Silu(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * silu_grad(xv[i]);
                    }
                });
            }
            Op::RmsNorm { x, gamma, inv } => {
                let xv = self.value(*x);
                let gv = self.value(*gamma).data();
                let d = xv.cols();
                self.accumulate(grads, *gamma, |gg| {
                    for (r, s) in inv.iter().enumerate() {
                        let row = xv.row(r);
                        for j in 0..d {
                            gg[j] += g[r * d + j] * row[j] * s;
                        }
                    }
                });
                self.accumulate(grads, *x, |gx| {
                    for (r, s) in inv.iter().enumerate() {
                        let row = xv.row(r);
                        let gr = &g[r * d..(r + 1) * d];
                        let dot: f64 = (0..d).map(|j| gv[j] * gr[j] * row[j]).sum();
                        let coef = s * s * s * dot / d as f64;
                        for j in 0..d {
                            gx[r * d + j] += s * gv[j] * gr[j] - coef * row[j];
                        }
                    }
                });
            }
            Op::Embed { table, ids } => {
                let d = self.value(*table).cols();
                self.accumulate(grads, *table, |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            gt[id * d + j] += g[r * d + j];
                        }
                    }
                });
            }
            Op::Rope { x, positions, heads, base } => {
                let d = node.value.cols();
                let back = rope_apply(g, d, positions, *heads, *base, -1.0);
                self.accumulate(grads, *x, |gx| add_into(gx, &back));
            }
            Op::Attention { q, k, v, heads, offset, probs } => {
                self.attention_backward(g, *q, *k, *v, *heads, *offset, probs, grads);
            }
            Op::Rows { x, start, len } => {
                let d = node.value.cols();
                self.accumulate(grads, *x, |gx| {
                    add_into(&mut gx[start * d..(start + len) * d], g);
                });
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    self.accumulate(grads, p, |gp| add_into(gp, &g[off..off + n]));
                    off += n;
                }
            }
            Op::Scan { a, b } => {
                let av = self.value(*a);
                let s = &node.value;
                let (t, d) = (av.rows(), av.cols());
                // reverse recurrence gB_t = gS_t + A_{t+1} ⊙ gB_{t+1}, run as a
                // forward scan over reversed rows
                let mut ra = vec![0.0; t * d];
                let mut rb = vec![0.0; t * d];
                for u in 0..t {
                    let src = t - 1 - u;
                    rb[u * d..(u + 1) * d].copy_from_slice(&g[src * d..(src + 1) * d]);
                    if src + 1 < t {
                        ra[u * d..(u + 1) * d].copy_from_slice(av.row(src + 1));
                    }
                }
                let ra = Tensor::new(vec![t, d], ra).unwrap();
                let rb = Tensor::new(vec![t, d], rb).unwrap();
                let rs = associative_scan(&ra, &rb).unwrap();
                let mut gb_all = vec![0.0; t * d];
                for u in 0..t {
                    let dst = t - 1 - u;
                    gb_all[dst * d..(dst + 1) * d].copy_from_slice(rs.row(u));
                }
                self.accumulate(grads, *a, |ga| {
                    for row in 1..t {
                        for j in 0..d {
                            ga[row * d + j] += gb_all[row * d + j] * s.data()[(row - 1) * d + j];
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| add_into(gb, &gb_all));
            }
            Op::ShiftRight(x) => {
                let d = node.value.cols();
                let n = g.len();
                self.accumulate(grads, *x, |gx| {
                    if n > d {
                        add_into(&mut gx[..n - d], &g[d..]);
                    }
                });
            }
            Op::Sum(x) => {
                let s = g[0];
                self.accumulate(grads, *x, |gx| gx.iter_mut().for_each(|v| *v += s));
            }
            Op::Dot(a, b) => {
                let s = g[0];
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += s * bv[i];
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..gb.len() {
                        gb[i] += s * av[i];
                    }
                });
            }
            Op::MaskedCe { logits, rows, probs } => {
                let v = self.value(*logits).cols();
                let scale = g[0] / rows.len() as f64;
                self.accumulate(grads, *logits, |gl| {
                    for (n, &(r, target)) in rows.iter().enumerate() {
                        let p = &probs[n * v..(n + 1) * v];
                        for j in 0..v {
                            gl[r * v + j] += scale * p[j];
                        }
                        gl[r * v + target] -= scale;
                    }
                });
            }
            Op::BceWithLogits { logits, targets } => {
                let z = self.value(*logits).data();
                let scale = g[0] / targets.len() as f64;
                self.accumulate(grads, *logits, |gl| {
                    for i in 0..targets.len() {
                        gl[i] += scale * (sigmoid(z[i]) - targets[i]);
                    }
                });
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        g: &[f64],
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        offset: usize,
        probs: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (tq, d, tk) = (qv.rows(), qv.cols(), kv.rows());
        let hd = d / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut gq = vec![0.0; tq * d];
        let mut gk = vec![0.0; tk * d];
        let mut gv = vec![0.0; tk * d];
        let mut dp = vec![0.0; tk];
        for h in 0..heads {
            let c0 = h * hd;
            for i in 0..tq {
                let visible = offset + i + 1;
                let base = (h * tq + i) * tk;
                let gi = &g[i * d + c0..i * d + c0 + hd];
                let mut weighted = 0.0;
                for j in 0..visible {
                    let p = probs[base + j];
                    let vj = &vv.row(j)[c0..c0 + hd];
                    dp[j] = gi.iter().zip(vj).map(|(a, b)| a * b).sum();
                    weighted += p * dp[j];
                    for (o, x) in gv[j * d + c0..j * d + c0 + hd].iter_mut().zip(gi) {
                        *o += p * x;
                    }
                }
                let qi = &qv.row(i)[c0..c0 + hd];
                for j in 0..visible {
                    let ds = probs[base + j] * (dp[j] - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj = &kv.row(j)[c0..c0 + hd];
                    for c in 0..hd {
                        gq[i * d + c0 + c] += ds * kj[c];
                        gk[j * d + c0 + c] += ds * qi[c];
                    }
                }
            }
        }
        self.accumulate(grads, q, |o| add_into(o, &gq));
        self.accumulate(grads, k, |o| add_into(o, &gk));
        self.accumulate(grads, v, |o| add_into(o, &gv));
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, x) in dst.iter_mut().zip(src) {
        *o += x;
    }
}

/// Rotates each half-split pair inside every head by `sign * pos * freq`.
pub(crate) fn rope_apply(x: &[f64], d: usize, positions: &[usize], heads: usize, base: f64, sign: f64) -> Vec<f64> {
    let hd = d / heads;
    let half = hd / 2;
    let mut out = x.to_vec();
    for (r, &pos) in positions.iter().enumerate() {
        for h in 0..heads {
            for i in 0..half {
                let freq = base.powf(-2.0 * i as f64 / hd as f64);
                let (s, c) = (sign * pos as f64 * freq).sin_cos();
                let a = r * d + h * hd + i;
                let b = a + half;
                let (x1, x2) = (x[a], x[b]);
                out[a] = x1 * c - x2 * s;
                out[b] = x1 * s + x2 * c;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::finite_difference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[3, 4]));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert!(g.wrt(x).data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn dot_swaps_operands() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = tape.leaf(Tensor::vector(vec![-1.0, 0.5, 4.0]));
        let l = tape.dot(x, y);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(x).data(), &[-1.0, 0.5, 4.0]);
        assert_eq!(g.wrt(y).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(x), Err(SstError::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let x = tape.leaf(Tensor::vector(vec![3.0, 4.0]));
        let l = tape.dot(c, x);
        let g = tape.backward(l).unwrap();
        assert!(g.get(c).is_none());
    }

    /// Each primitive against central differences through a random
    /// projection to a scalar.
    #[test]
    fn primitives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;
        let cases: Vec<(Vec<Vec<usize>>, Build)> = vec![
            (vec![vec![3, 4], vec![4, 2]], Box::new(|t, v| t.matmul(v[0], v[1]))),
            (vec![vec![3, 4], vec![5, 4]], Box::new(|t, v| t.matmul_t(v[0], v[1]))),
            (vec![vec![3, 4], vec![3, 4]], Box::new(|t, v| t.mul(v[0], v[1]))),
            (vec![vec![3, 4], vec![3, 4]], Box::new(|t, v| t.sub(v[0], v[1]))),
            (vec![vec![3, 4], vec![4]], Box::new(|t, v| t.mul_row(v[0], v[1]))),
            (vec![vec![3, 4], vec![4]], Box::new(|t, v| t.add_row(v[0], v[1]))),
            (vec![vec![2, 5]], Box::new(|t, v| t.sigmoid(v[0]))),
            (vec![vec![2, 5]], Box::new(|t, v| t.gelu(v[0]))),
            (vec![vec![2, 5]], Box::new(|t, v| t.silu(v[0]))),
            (vec![vec![2, 5]], Box::new(|t, v| t.affine(v[0], -0.3, 2.0))),
            (vec![vec![3, 6], vec![6]], Box::new(|t, v| t.rms_norm(v[0], v[1], 1e-6))),
            (vec![vec![5, 3]], Box::new(|t, v| t.embed(v[0], &[4, 0, 4, 2]))),
            (vec![vec![3, 8]], Box::new(|t, v| t.rope(v[0], &[0, 3, 7], 2, 10_000.0))),
            (
                vec![vec![3, 8], vec![5, 8], vec![5, 8]],
                Box::new(|t, v| t.attention(v[0], v[1], v[2], 2, 2)),
            ),
            (vec![vec![5, 3]], Box::new(|t, v| t.rows(v[0], 1, 3))),
            (vec![vec![2, 3], vec![1, 3]], Box::new(|t, v| t.concat(&[v[0], v[1], v[0]]))),
            (vec![vec![6, 3], vec![6, 3]], Box::new(|t, v| t.scan(v[0], v[1]))),
            (vec![vec![4, 3]], Box::new(|t, v| t.shift_right(v[0]))),
            (
                vec![vec![4, 6]],
                Box::new(|t, v| t.masked_ce(v[0], &[(0, 1), (2, 5), (3, 0)]).unwrap()),
            ),
            (vec![vec![5, 1]], Box::new(|t, v| t.bce_with_logits(v[0], &[1.0, 0.0, 1.0, 1.0, 0.0]))),
        ];
        for (ci, (shapes, build)) in cases.iter().enumerate() {
            let inputs: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
            let probe_shape = {
                let mut t = Tape::new();
                let vars: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
                let out = build(&mut t, &vars);
                t.value(out).shape().to_vec()
            };
            let proj = rand_tensor(&mut rng, &probe_shape);
            let eval = |xs: &[Tensor]| -> (f64, Vec<Tensor>) {
                let mut t = Tape::new();
                let vars: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
                let out = build(&mut t, &vars);
                let p = t.constant(proj.clone());
                let l = t.dot(out, p);
                let g = t.backward(l).unwrap();
                (t.value(l).item(), vars.iter().map(|v| g.wrt(*v)).collect())
            };
            let (_, analytic) = eval(&inputs);
            let numeric = finite_difference(|xs| eval(xs).0, &inputs, 1e-5);
            for (a, n) in analytic.iter().zip(&numeric) {
                let err = a.max_abs_diff(n);
                assert!(err < 1e-7, "case {ci}: max abs err {err}");
            }
        }
    }
}
