//! Small dense linear algebra: power-iteration spectral norm and cyclic
//! Jacobi eigendecomposition of symmetric matrices.

use super::Tensor;

/// Power-iteration iterations used by default.
pub const POWER_ITERS: usize = 200;

/// Estimate of the largest singular value of `w` by power iteration on
/// `wᵀw`, started from the all-ones vector.
pub fn spectral_norm(w: &Tensor, iters: usize) -> f64 {
    let (m, n) = (w.rows(), w.cols());
    let data = w.data();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut wv = vec![0.0; m];
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        for i in 0..m {
            wv[i] = (0..n).map(|j| data[i * n + j] * v[j]).sum();
        }
        sigma = wv.iter().map(|x| x * x).sum::<f64>().sqrt();
        // wᵀ(wv)
        let mut next = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                next[j] += data[i * n + j] * wv[i];
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return sigma;
        }
        for (vj, nj) in v.iter_mut().zip(&next) {
            *vj = nj / norm;
        }
    }
    // one last Rayleigh read with the final vector
    for i in 0..m {
        wv[i] = (0..n).map(|j| data[i * n + j] * v[j]).sum();
    }
    sigma.max(wv.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Eigenvalues (descending) and matching unit eigenvectors (as rows) of a
/// symmetric matrix.
pub fn jacobi_eigen(a: &Tensor) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.rows();
    let mut m: Vec<f64> = a.data().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
        .collect();
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_diagonal() {
        assert!((spectral_norm(&Tensor::identity(4), POWER_ITERS) - 1.0).abs() < 1e-12);
        let d = Tensor::matrix(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((spectral_norm(&d, POWER_ITERS) - 3.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&Tensor::zeros(&[3, 3]), POWER_ITERS), 0.0);
    }

    #[test]
    fn matches_jacobi_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let w = Tensor::matrix(8, 8, (0..64).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap();
            let gram = w.transpose().matmul(&w).unwrap();
            let (vals, _) = jacobi_eigen(&gram);
            let sigma1 = vals[0].sqrt();
            let est = spectral_norm(&w, POWER_ITERS);
            assert!((est - sigma1).abs() < 1e-6, "{est} vs {sigma1}");
        }
    }

    #[test]
    fn nondecreasing_in_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let w = Tensor::matrix(6, 5, (0..30).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let mut prev = 0.0;
        for k in 1..40 {
            let s = spectral_norm(&w, k);
            assert!(s >= prev - 1e-12);
            prev = s;
        }
    }

    #[test]
    fn jacobi_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let b = Tensor::matrix(5, 5, (0..25).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let a = b.transpose().matmul(&b).unwrap();
        let (vals, vecs) = jacobi_eigen(&a);
        for (lambda, v) in vals.iter().zip(&vecs) {
            for i in 0..5 {
                let av: f64 = (0..5).map(|j| a.at(i, j) * v[j]).sum();
                assert!((av - lambda * v[i]).abs() < 1e-10);
            }
        }
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }
}
