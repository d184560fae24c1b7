//! Small statistical toolbox: compensated sums, replica summaries, KS and
//! chi-square goodness-of-fit helpers used by the verification suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Kahan-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }

    pub fn set(&mut self, value: f64) {
        self.sum = value;
        self.comp = 0.0;
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Asymptotic Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{k-1} e^{-2 k² λ²}`.
pub fn kolmogorov_pvalue(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test against a CDF. Returns `(statistic, p-value)`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> (f64, f64) {
    let n = samples.len();
    assert!(n > 0, "empty sample");
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut d: f64 = 0.0;
    for (i, x) in samples.iter().enumerate() {
        let c = cdf(*x);
        let lo = i as f64 / n as f64;
        let hi = (i + 1) as f64 / n as f64;
        d = d.max((c - lo).abs()).max((hi - c).abs());
    }
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_pvalue(lambda))
}

/// Two-sample KS test. Returns `(statistic, p-value)`.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty(), "empty sample");
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let xa = a[i];
        let xb = b[j];
        if xa <= xb {
            i += 1;
        }
        if xb <= xa {
            j += 1;
        }
        let diff = (i as f64 / na as f64 - j as f64 / nb as f64).abs();
        d = d.max(diff);
    }
    let ne = (na as f64 * nb as f64) / (na as f64 + nb as f64);
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    (d, kolmogorov_pvalue(lambda))
}

/// Chi-square goodness-of-fit p-value for observed counts against expected
/// counts. Bins with expected count below `min_expected` are pooled into the
/// nearest kept bin. `extra_constraints` reduces the degrees of freedom beyond
/// the total-count constraint.
pub fn chi_square_pvalue(
    observed: &[f64],
    expected: &[f64],
    min_expected: f64,
    extra_constraints: usize,
) -> (f64, f64, usize) {
    assert_eq!(observed.len(), expected.len());
    let mut obs_pooled = Vec::new();
    let mut exp_pooled = Vec::new();
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        acc_o += o;
        acc_e += e;
        if acc_e >= min_expected {
            obs_pooled.push(acc_o);
            exp_pooled.push(acc_e);
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 {
        if let (Some(o), Some(e)) = (obs_pooled.last_mut(), exp_pooled.last_mut()) {
            *o += acc_o;
            *e += acc_e;
        } else {
            obs_pooled.push(acc_o);
            exp_pooled.push(acc_e);
        }
    }
    let stat: f64 = obs_pooled
        .iter()
        .zip(&exp_pooled)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = obs_pooled.len().saturating_sub(1 + extra_constraints);
    if df == 0 {
        return (stat, 1.0, 0);
    }
    let dist = ChiSquared::new(df as f64).expect("positive dof");
    (stat, 1.0 - dist.cdf(stat), df)
}

/// Poisson probability mass function, computed in log space for stability.
pub fn poisson_pmf(mean: f64, k: u64) -> f64 {
    if mean <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let lk = k as f64;
    let ln_p = -mean + lk * mean.ln() - ln_factorial(k);
    ln_p.exp()
}

pub fn ln_factorial(k: u64) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn kahan_recovers_small_increments() {
        let mut k = KahanSum::new();
        k.add(1.0);
        for _ in 0..1_000_000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-10)).abs() < 1e-14);
    }

    #[test]
    fn ks_uniform_accepts_uniform() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let mut xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let (_, p) = ks_one_sample(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn ks_rejects_wrong_law() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        let mut xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>().powi(2)).collect();
        let (_, p) = ks_one_sample(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!(p < 1e-6);
    }

    #[test]
    fn two_sample_ks_same_law() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let mut a: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let mut b: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let (_, p) = ks_two_sample(&mut a, &mut b);
        assert!(p > 0.01);
    }

    #[test]
    fn chi_square_poisson_counts() {
        let mean = 3.0;
        let n = 10_000.0;
        let expected: Vec<f64> = (0..15).map(|k| n * poisson_pmf(mean, k)).collect();
        // Feed the expected counts back: statistic 0, p-value 1.
        let (stat, p, df) = chi_square_pvalue(&expected, &expected, 5.0, 0);
        assert!(stat < 1e-12);
        assert!(p > 0.999);
        assert!(df > 3);
    }

    #[test]
    fn poisson_pmf_sums_to_one() {
        let total: f64 = (0..200).map(|k| poisson_pmf(6.5, k)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
