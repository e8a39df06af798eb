//! How far training moved the blend coefficients from their initial value.

use super::overlap::Band;
use crate::model::{alpha_from_logits, ModelConfig, SstParams};
use crate::numerics::{jacobi_eigen, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// Up to three principal directions in dimension space.
    pub components: Vec<Vec<f64>>,
    pub explained: Vec<f64>,
    /// Each layer's centred deviation projected onto the components.
    pub projections: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaDeviation {
    /// `α_{l,d} − α_init`, `[L][d]`.
    pub deviation: Vec<Vec<f64>>,
    pub bands: Vec<Band>,
    pub mean_abs: Vec<f64>,
    /// `None` when every layer's deviation is identical (e.g. untrained).
    pub pca: Option<Pca>,
}

/// Layers are the samples and dimensions the features.
pub fn pca(rows: &[Vec<f64>], keep: usize) -> Option<Pca> {
    let n = rows.len();
    let d = rows.first()?.len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centred: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    let mut cov = vec![0.0; d * d];
    for r in &centred {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += r[i] * r[j] / n as f64;
            }
        }
    }
    let total: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if total <= 0.0 {
        return None;
    }
    let (values, vectors) = jacobi_eigen(&Tensor::matrix(d, d, cov).expect("square"));
    let k = keep.min(d);
    let components: Vec<Vec<f64>> = (0..k).map(|i| vectors[i].clone()).collect();
    let explained = values[..k].iter().map(|v| v.max(0.0) / total).collect();
    let projections = centred
        .iter()
        .map(|r| components.iter().map(|c| c.iter().zip(r).map(|(a, b)| a * b).sum()).collect())
        .collect();
    Some(Pca { components, explained, projections })
}

pub fn alpha_deviation_summary(cfg: &ModelConfig, params: &SstParams) -> AlphaDeviation {
    let init = alpha_from_logits(&[cfg.theta_init], cfg.alpha_min, cfg.alpha_max)[0];
    let deviation: Vec<Vec<f64>> = params
        .layers
        .iter()
        .map(|l| {
            alpha_from_logits(l.blend_logits.data(), cfg.alpha_min, cfg.alpha_max).iter().map(|a| a - init).collect()
        })
        .collect();
    let bands = deviation.iter().map(|r| Band::of(r)).collect();
    let mean_abs = deviation.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64).collect();
    let pca = pca(&deviation, 3);
    AlphaDeviation { deviation, bands, mean_abs, pca }
}
