//! Work-efficient (Blelloch) scan of the linear recurrence
//! `S_t = A_t ⊙ S_{t-1} + B_t` and the right shift that turns inclusive
//! states into "previous position" states.
//!
//! Elements are affine maps `s ↦ A ⊙ s + B`. Applying `(A, B)` and then
//! `(A', B')` gives `(A ⊙ A', A' ⊙ B + B')`; the identity is `(1, 0)`.

use crate::error::{Result, SstError};
use crate::numerics::Tensor;

#[derive(Clone)]
struct Affine {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Affine {
    fn identity(d: usize) -> Self {
        Self { a: vec![1.0; d], b: vec![0.0; d] }
    }

    /// `self` first, then `next`.
    fn then(&self, next: &Affine) -> Affine {
        let a = self.a.iter().zip(&next.a).map(|(x, y)| x * y).collect();
        let b = self
            .b
            .iter()
            .zip(&next.a)
            .zip(&next.b)
            .map(|((b, a2), b2)| a2 * b + b2)
            .collect();
        Affine { a, b }
    }
}

/// All prefix states of the recurrence over the rows of `a` and `b`
/// (`[T × d]` each), with `S_{-1} = 0`.
pub fn associative_scan(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(SstError::Dimension(format!(
            "scan operands {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (t, d) = (a.rows(), a.cols());
    if a.numel() == 0 {
        return Ok(b.clone());
    }
    let n = t.next_power_of_two();
    let leaves: Vec<Affine> = (0..n)
        .map(|i| {
            if i < t {
                Affine { a: a.row(i).to_vec(), b: b.row(i).to_vec() }
            } else {
                Affine::identity(d)
            }
        })
        .collect();
    let mut tree = leaves.clone();

    // up-sweep: tree[i] becomes the aggregate of its block
    let mut stride = 1;
    while stride < n {
        let mut i = 2 * stride - 1;
        while i < n {
            tree[i] = tree[i - stride].then(&tree[i]);
            i += 2 * stride;
        }
        stride *= 2;
    }

    // down-sweep: exclusive prefixes
    tree[n - 1] = Affine::identity(d);
    let mut stride = n / 2;
    while stride >= 1 {
        let mut i = 2 * stride - 1;
        while i < n {
            let left = tree[i - stride].clone();
            tree[i - stride] = tree[i].clone();
            tree[i] = tree[i].then(&left);
            i += 2 * stride;
        }
        stride /= 2;
    }

    let mut out = Vec::with_capacity(t * d);
    for i in 0..t {
        // inclusive prefix applied to the zero state leaves only its offset
        out.extend(tree[i].then(&leaves[i]).b);
    }
    Tensor::new(vec![t, d], out)
}

/// Row `t` takes row `t - 1`; row 0 becomes zero.
pub fn shift_right(s: &Tensor) -> Tensor {
    let d = s.cols();
    let n = s.numel();
    let mut data = vec![0.0; n];
    if n > d {
        data[d..].copy_from_slice(&s.data()[..n - d]);
    }
    Tensor::new(s.shape().to_vec(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn loop_scan(a: &Tensor, b: &Tensor) -> Tensor {
        let (t, d) = (a.rows(), a.cols());
        let mut prev = vec![0.0; d];
        let mut out = Vec::new();
        for i in 0..t {
            for j in 0..d {
                prev[j] = a.row(i)[j] * prev[j] + b.row(i)[j];
            }
            out.extend_from_slice(&prev);
        }
        Tensor::new(vec![t, d], out).unwrap()
    }

    #[test]
    fn memoryless_when_a_is_zero() {
        let b = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = associative_scan(&Tensor::zeros(&[3, 2]), &b).unwrap();
        assert_eq!(s, b);
    }

    #[test]
    fn prefix_sum() {
        let t = 11;
        let s = associative_scan(&Tensor::filled(&[t, 1], 1.0), &Tensor::filled(&[t, 1], 1.0))
            .unwrap();
        let want: Vec<f64> = (1..=t).map(|v| v as f64).collect();
        assert_eq!(s.data(), want.as_slice());
    }

    #[test]
    fn matches_loop_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for &t in &[1usize, 2, 3, 17, 128] {
            for _ in 0..20 {
                let d = 16;
                let a = Tensor::matrix(t, d, (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .unwrap();
                let b = Tensor::matrix(t, d, (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .unwrap();
                let diff = associative_scan(&a, &b).unwrap().max_abs_diff(&loop_scan(&a, &b));
                assert!(diff < 1e-12, "T={t} diff={diff}");
            }
        }
    }

    #[test]
    fn shift_right_cases() {
        let one = Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(shift_right(&one).data(), &[0.0; 3]);
        let id = Tensor::identity(4);
        let s = shift_right(&id);
        assert_eq!(s.row(0), &[0.0; 4]);
        for r in 1..4 {
            assert_eq!(s.row(r), id.row(r - 1));
        }
    }

    #[test]
    fn shift_right_index_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::matrix(9, 5, (0..45).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let s = shift_right(&x);
        for r in 0..9 {
            for c in 0..5 {
                let want = if r == 0 { 0.0 } else { x.at(r - 1, c) };
                assert_eq!(s.at(r, c), want);
            }
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        assert!(associative_scan(&Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2, 3])).is_err());
    }
}
