use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SstError};
use crate::model::stack::vec_mat;
use crate::numerics::{silu, silu_grad, Tensor};
use crate::traceio::Container;

/// `ln(0.3 / 0.7)`: halt when the probe's probability exceeds 0.3.
pub const HALT_THRESHOLD: f64 = -0.8472978603872036;

/// `Linear(d, m) → SiLU → Linear(m, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel {
    /// `[d × m]`
    pub w1: Tensor,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub threshold: f64,
    /// Model layer whose hidden state the probe reads.
    pub layer: usize,
}

impl ProbeModel {
    /// Uniform `±1/√fan_in` initialisation.
    pub fn init(d: usize, m: usize, layer: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = |fan_in: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            rng.random_range(-b..b)
        };
        let w1 = Tensor::matrix(d, m, (0..d * m).map(|_| u(d)).collect()).expect("shape");
        let b1 = (0..m).map(|_| u(d)).collect();
        let w2 = (0..m).map(|_| u(m)).collect();
        let b2 = u(m);
        Self { w1, b1, w2, b2, threshold: HALT_THRESHOLD, layer }
    }

    /// All-zero weights: logit 0 everywhere.
    pub fn zeros(d: usize, m: usize, layer: usize) -> Self {
        Self { w1: Tensor::zeros(&[d, m]), b1: vec![0.0; m], w2: vec![0.0; m], b2: 0.0, threshold: HALT_THRESHOLD, layer }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        vec_mat(x, &self.w1).iter().zip(&self.b1).map(|(a, b)| a + b).collect()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.pre_activation(x).iter().zip(&self.w2).map(|(z, w)| silu(*z) * w).sum::<f64>() + self.b2
    }

    /// Halt iff the logit strictly exceeds the threshold.
    pub fn decide(&self, x: &[f64]) -> (bool, f64) {
        let l = self.logit(x);
        (l > self.threshold, l)
    }

    /// `∂logit / ∂x`.
    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let z = self.pre_activation(x);
        let coef: Vec<f64> = z.iter().zip(&self.w2).map(|(z, w)| silu_grad(*z) * w).collect();
        (0..self.input_dim()).map(|i| self.w1.row(i).iter().zip(&coef).map(|(a, c)| a * c).sum()).collect()
    }

    pub fn to_container(&self) -> Container {
        Container {
            meta: vec![
                ("kind".into(), "probe".into()),
                ("threshold".into(), format!("{:?}", self.threshold)),
                ("layer".into(), self.layer.to_string()),
                ("b2".into(), format!("{:?}", self.b2)),
            ],
            tensors: vec![
                ("w1".into(), self.w1.clone()),
                ("b1".into(), Tensor::vector(self.b1.clone())),
                ("w2".into(), Tensor::vector(self.w2.clone())),
            ],
        }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.get_meta("kind") != Some("probe") {
            return Err(SstError::Format("container does not hold a probe".into()));
        }
        let num = |k: &str| -> Result<f64> {
            c.get_meta(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| SstError::Format(format!("probe metadata {k} missing or invalid")))
        };
        let tensor = |k: &str| {
            c.tensors.iter().find(|(n, _)| n == k).map(|(_, t)| t.clone()).ok_or_else(|| SstError::Format(format!("probe tensor {k} missing")))
        };
        let (w1, b1, w2) = (tensor("w1")?, tensor("b1")?, tensor("w2")?);
        if w1.shape().len() != 2 || b1.numel() != w1.cols() || w2.numel() != w1.cols() {
            return Err(SstError::Format("probe tensor shapes disagree".into()));
        }
        Ok(Self {
            w1,
            b1: b1.into_data(),
            w2: w2.into_data(),
            b2: num("b2")?,
            threshold: num("threshold")?,
            layer: num("layer")? as usize,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_strict() {
        assert!((HALT_THRESHOLD - (0.3f64 / 0.7).ln()).abs() < 1e-16);
        let mut p = ProbeModel::zeros(3, 2, 0);
        assert_eq!(p.decide(&[1.0, 2.0, 3.0]), (true, 0.0));
        p.b2 = HALT_THRESHOLD;
        assert!(!p.decide(&[0.0; 3]).0);
        p.b2 = HALT_THRESHOLD + 1e-12;
        assert!(p.decide(&[0.0; 3]).0);
    }

    #[test]
    fn container_round_trip() {
        let p = ProbeModel::init(5, 3, 2, 9);
        assert_eq!(ProbeModel::from_container(&p.to_container()).unwrap(), p);
    }
}
