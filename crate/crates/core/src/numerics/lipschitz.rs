//! Empirical Lipschitz estimates and the constants used to bound them.

use super::functions::gelu_tanh_grad;
use super::linalg::jacobi_eigen;
use super::tensor::Tensor;

/// Lipschitz constant of `gelu_tanh`, rounded up.
pub const GELU_LIPSCHITZ: f64 = 1.13;

/// Largest `|gelu_tanh'|` on a uniform grid over `[lo, hi]`, and where.
pub fn gelu_max_derivative(lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n)
        .map(|i| lo + i as f64 * step)
        .map(|x| (gelu_tanh_grad(x).abs(), x))
        .fold((f64::NEG_INFINITY, lo), |best, c| if c.0 > best.0 { c } else { best })
}

/// Exact largest singular value via the eigenvalues of the smaller Gram
/// matrix; unlike power iteration it never underestimates.
pub fn sigma_max(w: &Tensor) -> f64 {
    let wt = w.transpose();
    let gram = if w.rows() >= w.cols() { wt.matmul(w) } else { w.matmul(&wt) }.expect("conformable");
    let (values, _) = jacobi_eigen(&gram);
    values.first().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// `max ‖f(x) − f(y)‖ / ‖x − y‖` over the given pairs.
pub fn empirical_lipschitz<F>(f: F, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    pairs
        .iter()
        .filter(|(x, y)| x != y)
        .map(|(x, y)| dist(&f(x), &f(y)) / dist(x, y))
        .fold(0.0, f64::max)
}
