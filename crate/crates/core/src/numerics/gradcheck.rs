//! Central-difference gradient verification.

use super::Tensor;

/// Central differences of `f` with respect to every entry of every input.
pub fn finite_difference<F>(f: F, params: &[Tensor], h: f64) -> Vec<Tensor>
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Tensor::zeros(params[p].shape());
        for i in 0..params[p].numel() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + h;
            let up = f(&work);
            work[p].data_mut()[i] = orig - h;
            let down = f(&work);
            work[p].data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Per-entry relative error between two gradients,
/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Largest relative error between the analytic gradient returned by `f`
/// and central differences of its value.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> f64
where
    F: Fn(&[Tensor]) -> (f64, Vec<Tensor>),
{
    let (_, analytic) = f(params);
    let numeric = finite_difference(|p| f(p).0, params, h);
    analytic
        .iter()
        .zip(&numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()).map(|(x, y)| relative_error(*x, *y)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        // f(x) = Σ c_i x_i² + x_0 x_1
        let c = [1.5, -0.5, 2.0];
        let f = |p: &[Tensor]| {
            let x = p[0].data();
            let v = (0..3).map(|i| c[i] * x[i] * x[i]).sum::<f64>() + x[0] * x[1];
            let g = vec![2.0 * c[0] * x[0] + x[1], 2.0 * c[1] * x[1] + x[0], 2.0 * c[2] * x[2]];
            (v, vec![Tensor::vector(g)])
        };
        let err = grad_check(f, &[Tensor::vector(vec![0.3, -1.2, 2.0])], 1e-5);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let f = |p: &[Tensor]| (4.0, vec![Tensor::zeros(p[0].shape())]);
        let p = [Tensor::vector(vec![1.0, 2.0])];
        assert_eq!(grad_check(f, &p, 1e-5), 0.0);
        let fd = finite_difference(|_| 4.0, &p, 1e-5);
        assert!(fd[0].data().iter().all(|v| *v == 0.0));
    }
}
