//! Exact and approximate tests, all tail sums in log space.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SstError};

/// Smallest p-value reported as a number; anything below is a bound.
pub const P_FLOOR_LOG10: f64 = -300.0;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

/// A probability kept in log10 form so tiny tails never underflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PValue {
    pub log10: f64,
}

impl PValue {
    pub fn from_ln(ln_p: f64) -> Self {
        Self { log10: ln_p.min(0.0) / std::f64::consts::LN_10 }
    }

    /// The value itself; zero when it lies below the reporting floor.
    pub fn value(&self) -> f64 {
        if self.below_floor() {
            0.0
        } else {
            10f64.powf(self.log10)
        }
    }

    pub fn below_floor(&self) -> bool {
        self.log10 < P_FLOOR_LOG10
    }
}

impl std::fmt::Display for PValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.below_floor() {
            write!(f, "<1e{}", P_FLOOR_LOG10 as i64)
        } else {
            write!(f, "{:.6e}", self.value())
        }
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `ln Σ exp(x_i)`
fn ln_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn ln_binom_pmf(k: u64, n: u64, p: f64) -> f64 {
    let lp = |x: f64, c: u64| if c == 0 { 0.0 } else { c as f64 * x.ln() };
    ln_choose(n, k) + lp(p, k) + lp(1.0 - p, n - k)
}

fn check_prob(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SstError::Contract(format!("probability {p} outside [0, 1]")))
    }
}

/// Upper tail `P(X ≥ k)` for `X ~ Binomial(n, p)`.
pub fn binomial_tail(k: u64, n: u64, p: f64) -> Result<PValue> {
    check_prob(p)?;
    if k > n {
        return Err(SstError::Contract(format!("{k} successes out of {n} trials")));
    }
    if k == 0 {
        return Ok(PValue { log10: 0.0 });
    }
    Ok(PValue::from_ln(ln_sum((k..=n).map(|i| ln_binom_pmf(i, n, p)))))
}

/// Lower tail `P(X ≤ k)`.
pub fn binomial_cdf(k: u64, n: u64, p: f64) -> Result<PValue> {
    check_prob(p)?;
    if k >= n {
        return Ok(PValue { log10: 0.0 });
    }
    Ok(PValue::from_ln(ln_sum((0..=k).map(|i| ln_binom_pmf(i, n, p)))))
}

/// Exact McNemar test: two-sided binomial test on the discordant pairs.
pub fn mcnemar_exact(b: u64, c: u64) -> Result<PValue> {
    let n = b + c;
    if n == 0 {
        return Err(SstError::UndefinedTest("no discordant pairs".into()));
    }
    let one = binomial_cdf(b.min(c), n, 0.5)?;
    Ok(PValue { log10: (one.log10 + 2f64.log10()).min(0.0) })
}

/// `(b − c)² / (b + c)`, no continuity correction.
pub fn mcnemar_chi2(b: u64, c: u64) -> Result<f64> {
    if b + c == 0 {
        return Err(SstError::UndefinedTest("no discordant pairs".into()));
    }
    let diff = b as f64 - c as f64;
    Ok(diff * diff / (b + c) as f64)
}

/// `[[a, b], [c, d]]`
pub type Table2x2 = [[u64; 2]; 2];

/// `(a·d) / (b·c)`; infinite when a zero sits in the denominator.
pub fn odds_ratio(t: &Table2x2) -> Result<f64> {
    let [[a, b], [c, d]] = *t;
    let num = (a * d) as f64;
    let den = (b * c) as f64;
    if den == 0.0 {
        if num == 0.0 {
            return Err(SstError::UndefinedTest("odds ratio 0/0".into()));
        }
        return Ok(f64::INFINITY);
    }
    Ok(num / den)
}

/// Two-sided Fisher exact test: total probability of tables with the same
/// margins that are no more likely than the observed one.
pub fn fisher_exact_2x2(t: &Table2x2) -> Result<PValue> {
    let [[a, b], [c, d]] = *t;
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    if n == 0 {
        return Err(SstError::UndefinedTest("empty table".into()));
    }
    let ln_p = |x: u64| ln_choose(r1, x) + ln_choose(r2, c1 - x) - ln_choose(n, c1);
    let lo = c1.saturating_sub(r2);
    let hi = c1.min(r1);
    let observed = ln_p(a);
    let slack = 1e-7;
    let tail = (lo..=hi).map(ln_p).filter(|lp| *lp <= observed + slack);
    Ok(PValue::from_ln(ln_sum(tail)))
}

/// Wilson score interval for `k` of `n`.
pub fn wilson_ci(k: u64, n: u64) -> Result<(f64, f64)> {
    if n == 0 || k > n {
        return Err(SstError::UndefinedTest(format!("wilson interval for {k}/{n}")));
    }
    let (nf, p) = (n as f64, k as f64 / n as f64);
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / (1.0 + z2 / nf);
    Ok(((centre - half).max(0.0), (centre + half).min(1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney U. Exact null distribution (by enumerating rank subsets,
/// ties included) when `n₁ + n₂ ≤ 20`; otherwise the normal approximation
/// with tie and continuity corrections.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    let (n1, n2) = (x.len(), y.len());
    if n1 == 0 || n2 == 0 {
        return Err(SstError::UndefinedTest("empty sample".into()));
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let mean = (n1 * n2) as f64 / 2.0;
    let n = n1 + n2;
    if n <= 20 {
        // Doubled ranks are integers; count subsets of size n1 by doubled sum.
        let twice: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = twice.iter().sum();
        let mut ways = vec![vec![0f64; max_sum + 1]; n1 + 1];
        ways[0][0] = 1.0;
        for &r in &twice {
            for c in (1..=n1).rev() {
                for s in (r..=max_sum).rev() {
                    ways[c][s] += ways[c - 1][s - r];
                }
            }
        }
        let total: f64 = ways[n1].iter().sum();
        let offset = (n1 * (n1 + 1)) as f64 / 2.0;
        let observed = (u - mean).abs();
        let extreme: f64 = ways[n1]
            .iter()
            .enumerate()
            .filter(|(s, w)| **w > 0.0 && ((*s as f64 / 2.0 - offset) - mean).abs() >= observed - 1e-9)
            .map(|(_, w)| w)
            .sum();
        return Ok(MannWhitney { u, p: (extreme / total).min(1.0), exact: true });
    }
    let nf = n as f64;
    let mut tie_term = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        tie_term += (j * j * j - j) as f64;
        i += j;
    }
    let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitney { u, p: 1.0, exact: false });
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(MannWhitney { u, p: erfc(z / std::f64::consts::SQRT_2).min(1.0), exact: false })
}

/// Linear-interpolation percentile (`q` in [0, 100]) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Pearson correlation; zero-variance inputs are an error.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(SstError::Dimension(format!("pearson on lengths {} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(SstError::UndefinedTest("correlation with a constant vector".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoted_counts() {
        let p = binomial_tail(29, 48, 0.373).unwrap().value();
        assert!((p / 9.4e-4 - 1.0).abs() < 0.05, "{p}");
        let p = mcnemar_exact(30, 14).unwrap().value();
        assert!((p - 0.024).abs() < 0.002, "{p}");
        assert_eq!(mcnemar_chi2(42, 6).unwrap(), 27.0);
        let or = odds_ratio(&[[251, 1839], [224, 6265]]).unwrap();
        assert!((or - 3.82).abs() < 0.01, "{or}");
    }

    #[test]
    fn trivial_tails() {
        assert_eq!(binomial_tail(0, 10, 0.3).unwrap().value(), 1.0);
        assert!(mcnemar_chi2(0, 0).is_err());
        assert!(mcnemar_exact(0, 0).is_err());
    }

    #[test]
    fn tiny_tail_is_bounded_not_zero() {
        let p = binomial_tail(91_300, 100_000, 0.5).unwrap();
        assert!(p.below_floor() && p.log10.is_finite());
        assert!(p.log10 < -300.0);
    }

    #[test]
    fn fisher_symmetric_table() {
        // Reference value from the hypergeometric definition by hand:
        // [[1, 0], [0, 1]] has tables {a=0, a=1}, each probability 1/2.
        assert!((fisher_exact_2x2(&[[1, 0], [0, 1]]).unwrap().value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wilson_contains_point_estimate() {
        let (lo, hi) = wilson_ci(30, 100).unwrap();
        assert!(lo < 0.3 && 0.3 < hi);
    }

    #[test]
    fn mann_whitney_singletons() {
        let r = mann_whitney_u(&[1.0], &[1.0]).unwrap();
        assert_eq!(r.u, 0.5);
        assert_eq!(r.p, 1.0);
        let r = mann_whitney_u(&[1.0], &[2.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn percentiles_interpolate() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0, 4.0], 50.0), 2.5);
        assert_eq!(percentile(&[5.0], 95.0), 5.0);
    }
}
