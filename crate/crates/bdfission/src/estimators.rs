//! Ensemble estimators: intensity, pair correlation, factorial moments, and
//! the Bogoliubov-type product functional, with sub-Poissonian envelope
//! checks.
//!
//! All estimators are pure folds over replica snapshots with commutative
//! merges, so partial aggregation parallelizes trivially and merging halves
//! reproduces the single-pass statistics exactly. Confidence intervals come
//! from replica-level batching under a normal approximation (3σ default).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{shell_volume, BoxRegion, Position};
use crate::simulator::Ensemble;
use crate::stats::mean_stderr;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("estimation window has zero volume")]
    EmptyWindow,
    #[error("no pairs available for pair-correlation estimation")]
    NoPairs,
    #[error("snapshot index {0} out of range")]
    BadSnapshot(usize),
}

/// Intensity (first correlation function) estimate per snapshot time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntensityReport {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub window_volume: f64,
}

/// Counts points of `positions` inside the box.
fn count_in(positions: &[Position], region: &BoxRegion) -> usize {
    positions.iter().filter(|p| region.contains(p)).count()
}

/// Mean count over replicas divided by `|Λ|`, with standard error, per
/// snapshot time.
pub fn intensity(e: &Ensemble, region: &BoxRegion) -> Result<IntensityReport, EstimatorError> {
    let vol = region.volume();
    if vol <= 0.0 {
        return Err(EstimatorError::EmptyWindow);
    }
    let mut times = Vec::new();
    let mut mean = Vec::new();
    let mut stderr = Vec::new();
    for (k, t) in e.snapshot_times.iter().enumerate() {
        let counts: Vec<f64> = e
            .replicas
            .iter()
            .map(|r| {
                r.snapshots
                    .get(k)
                    .map(|s| count_in(&s.positions, region) as f64)
                    .unwrap_or(0.0)
            })
            .collect();
        let (m, se) = mean_stderr(&counts);
        times.push(*t);
        mean.push(m / vol);
        stderr.push(se / vol);
    }
    Ok(IntensityReport {
        times,
        mean,
        stderr,
        window_volume: vol,
    })
}

/// Radial pair-correlation estimate at one snapshot time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCorrelationEstimate {
    pub time: f64,
    /// Bin edges, `len = bins + 1`.
    pub edges: Vec<f64>,
    /// Second correlation function per bin.
    pub k2: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Intensity over the estimation sub-window.
    pub k1: f64,
    pub k1_stderr: f64,
    /// Pairs counted in total.
    pub n_pairs: u64,
}

/// Minus-sampling pair-distance histogram at snapshot `k`: reference points
/// are restricted to the window shrunk by `margin` (the kernel cutoff), and
/// ordered-pair counts are normalized by replica count, reference volume and
/// torus shell volumes, giving an unbiased estimate of `k²(r)` under the
/// empirical law.
pub fn pair_correlation(
    e: &Ensemble,
    snapshot: usize,
    r_max: f64,
    bins: usize,
    margin: f64,
) -> Result<PairCorrelationEstimate, EstimatorError> {
    let time = *e
        .snapshot_times
        .get(snapshot)
        .ok_or(EstimatorError::BadSnapshot(snapshot))?;
    let dim = e.dimension;
    let side = e.window_side;
    let inner = BoxRegion::cube(margin, side - margin, dim).shrink(0.0);
    let inner_vol = inner.volume();
    if inner_vol <= 0.0 {
        return Err(EstimatorError::EmptyWindow);
    }
    let edges: Vec<f64> = (0..=bins).map(|i| r_max * i as f64 / bins as f64).collect();
    let torus_dist = |a: &Position, b: &Position| {
        let mut s = 0.0;
        for k in 0..dim {
            let mut d = (a[k] - b[k]).abs();
            if d > 0.5 * side {
                d = side - d;
            }
            s += d * d;
        }
        s.sqrt()
    };

    let mut per_replica: Vec<Vec<f64>> = Vec::with_capacity(e.replicas.len());
    let mut n_pairs = 0u64;
    for r in &e.replicas {
        let mut hist = vec![0.0; bins];
        if let Some(s) = r.snapshots.get(snapshot) {
            for (i, x) in s.positions.iter().enumerate() {
                if !inner.contains(x) {
                    continue;
                }
                for (j, y) in s.positions.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let d = torus_dist(x, y);
                    if d < r_max {
                        let b = ((d / r_max) * bins as f64) as usize;
                        hist[b.min(bins - 1)] += 1.0;
                        n_pairs += 1;
                    }
                }
            }
        }
        per_replica.push(hist);
    }
    if n_pairs == 0 {
        return Err(EstimatorError::NoPairs);
    }

    let mut k2 = vec![0.0; bins];
    let mut stderr = vec![0.0; bins];
    for b in 0..bins {
        let shell = shell_volume(edges[b], edges[b + 1], dim);
        let samples: Vec<f64> = per_replica
            .iter()
            .map(|h| h[b] / (inner_vol * shell))
            .collect();
        let (m, se) = mean_stderr(&samples);
        k2[b] = m;
        stderr[b] = se;
    }

    let counts: Vec<f64> = e
        .replicas
        .iter()
        .map(|r| {
            r.snapshots
                .get(snapshot)
                .map(|s| count_in(&s.positions, &inner) as f64)
                .unwrap_or(0.0)
        })
        .collect();
    let (m, se) = mean_stderr(&counts);

    Ok(PairCorrelationEstimate {
        time,
        edges,
        k2,
        stderr,
        k1: m / inner_vol,
        k1_stderr: se / inner_vol,
        n_pairs,
    })
}

/// Factorial moments of the count in a window, against a Poisson reference
/// and an optional sub-Poissonian envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorialMomentReport {
    pub window_volume: f64,
    pub times: Vec<f64>,
    /// `moments[t][m-1]` = empirical `E[N(N-1)...(N-m+1)]` at time index t.
    pub moments: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// Poisson reference `(κ̂ |Λ|)^m` built from the measured intensity.
    pub poisson_reference: Vec<Vec<f64>>,
    /// Envelope values `κ_t` (if supplied) and per-order violation flags:
    /// the moment exceeds `(κ_t |Λ|)^m` beyond 3σ.
    pub envelope: Option<Vec<f64>>,
    pub violations: Vec<Vec<bool>>,
}

/// Empirical factorial moments `E[N(N-1)…(N-m+1)]` for `m = 1..=m_max` with
/// Poisson references; `envelope[t]` supplies the sub-Poissonian bound `κ_t`.
pub fn factorial_moments(
    e: &Ensemble,
    region: &BoxRegion,
    m_max: usize,
    envelope: Option<Vec<f64>>,
) -> Result<FactorialMomentReport, EstimatorError> {
    assert!(m_max >= 1);
    let vol = region.volume();
    if vol <= 0.0 {
        return Err(EstimatorError::EmptyWindow);
    }
    let mut moments = Vec::new();
    let mut stderrs = Vec::new();
    let mut refs = Vec::new();
    let mut violations = Vec::new();
    for (k, _) in e.snapshot_times.iter().enumerate() {
        let counts: Vec<f64> = e
            .replicas
            .iter()
            .map(|r| {
                r.snapshots
                    .get(k)
                    .map(|s| count_in(&s.positions, region) as f64)
                    .unwrap_or(0.0)
            })
            .collect();
        let mut row = Vec::with_capacity(m_max);
        let mut row_se = Vec::with_capacity(m_max);
        let mut row_ref = Vec::with_capacity(m_max);
        let mut row_vi = Vec::with_capacity(m_max);
        let (mean_count, _) = mean_stderr(&counts);
        for m in 1..=m_max {
            let falling: Vec<f64> = counts
                .iter()
                .map(|&n| {
                    let mut v = 1.0;
                    for i in 0..m {
                        v *= n - i as f64;
                    }
                    v.max(0.0)
                })
                .collect();
            let (fm, se) = mean_stderr(&falling);
            row.push(fm);
            row_se.push(se);
            row_ref.push(mean_count.powi(m as i32));
            let violated = match &envelope {
                Some(env) => {
                    let bound = (env[k] * vol).powi(m as i32);
                    fm > bound + 3.0 * se
                }
                None => false,
            };
            row_vi.push(violated);
        }
        moments.push(row);
        stderrs.push(row_se);
        refs.push(row_ref);
        violations.push(row_vi);
    }
    Ok(FactorialMomentReport {
        window_volume: vol,
        times: e.snapshot_times.clone(),
        moments,
        stderr: stderrs,
        poisson_reference: refs,
        envelope,
        violations,
    })
}

/// A compactly supported test function with values in `(-1, 0]`: a constant
/// plateau or a tent profile over a box, zero outside.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaFunction {
    Constant { value: f64, support: BoxRegion },
    /// Linear ramp from `value` at the box center to 0 at the faces.
    Tent { value: f64, support: BoxRegion },
}

impl ThetaFunction {
    pub fn support(&self) -> &BoxRegion {
        match self {
            ThetaFunction::Constant { support, .. } | ThetaFunction::Tent { support, .. } => {
                support
            }
        }
    }

    pub fn peak(&self) -> f64 {
        match self {
            ThetaFunction::Constant { value, .. } | ThetaFunction::Tent { value, .. } => *value,
        }
    }

    /// Range check at construction time: values must lie in (-1, 0].
    pub fn validate(&self) -> bool {
        let v = self.peak();
        v > -1.0 && v <= 0.0
    }

    pub fn eval(&self, p: &Position) -> f64 {
        let support = self.support();
        if !support.contains(p) {
            return 0.0;
        }
        match self {
            ThetaFunction::Constant { value, .. } => *value,
            ThetaFunction::Tent { value, support } => {
                // Product ramp: 1 at center, 0 at each face.
                let mut w = 1.0;
                for k in 0..support.dim() {
                    let half = 0.5 * (support.hi[k] - support.lo[k]);
                    let center = 0.5 * (support.hi[k] + support.lo[k]);
                    w *= 1.0 - (p[k] - center).abs() / half;
                }
                value * w
            }
        }
    }

    /// `∫ θ` over its support (closed forms).
    pub fn integral(&self) -> f64 {
        match self {
            ThetaFunction::Constant { value, support } => value * support.volume(),
            ThetaFunction::Tent { value, support } => {
                // Each axis ramp integrates to half the side length.
                let mut v = *value;
                for k in 0..support.dim() {
                    v *= 0.5 * (support.hi[k] - support.lo[k]);
                }
                v
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BogoliubovReport {
    pub time: f64,
    /// Replica average of `Π_{x∈γ} (1 + θ(x))`.
    pub functional: f64,
    pub stderr: f64,
    /// Second-order truncation `1 + ∫k¹θ + ½∫∫k²θθ`, estimated from the
    /// empirical first and second factorial-moment integrals.
    pub truncation_order2: f64,
}

/// Replica average of the product functional `F^θ(γ) = Π (1 + θ(x))`, with
/// the order-2 truncation for comparison.
pub fn bogoliubov_functional(
    e: &Ensemble,
    theta: &ThetaFunction,
    snapshot: usize,
) -> Result<BogoliubovReport, EstimatorError> {
    let time = *e
        .snapshot_times
        .get(snapshot)
        .ok_or(EstimatorError::BadSnapshot(snapshot))?;
    assert!(theta.validate(), "theta must take values in (-1, 0]");
    let mut products = Vec::with_capacity(e.replicas.len());
    let mut linear = Vec::with_capacity(e.replicas.len());
    let mut quadratic = Vec::with_capacity(e.replicas.len());
    for r in &e.replicas {
        let positions: &[Position] = r
            .snapshots
            .get(snapshot)
            .map(|s| s.positions.as_slice())
            .unwrap_or(&[]);
        let values: Vec<f64> = positions.iter().map(|p| theta.eval(p)).collect();
        let product: f64 = values.iter().map(|t| 1.0 + t).product();
        debug_assert!(product > 0.0 && product <= 1.0 + 1e-12);
        products.push(product);
        let sum: f64 = values.iter().sum();
        let sum_sq: f64 = values.iter().map(|t| t * t).sum();
        linear.push(sum);
        // Σ_{x≠y} θ(x)θ(y) = (Σθ)² - Σθ².
        quadratic.push(sum * sum - sum_sq);
    }
    let (functional, stderr) = mean_stderr(&products);
    let (l1, _) = mean_stderr(&linear);
    let (l2, _) = mean_stderr(&quadratic);
    Ok(BogoliubovReport {
        time,
        functional,
        stderr,
        truncation_order2: 1.0 + l1 + 0.5 * l2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{FissionKernel, ModelParams, MortalityField, RadialKernel};
    use crate::simulator::{replicate, InitialCondition, SimConfig};
    use std::sync::Arc;

    fn pure_death_params(rate: f64) -> Arc<ModelParams> {
        Arc::new(ModelParams::new(
            1,
            MortalityField::Constant { rate },
            RadialKernel::zero(),
            FissionKernel::factorized(
                0.0,
                RadialKernel::Gaussian {
                    amplitude: 1.0,
                    scale: 0.3,
                    cutoff: 1.5,
                },
            ),
        ))
    }

    fn poisson_ensemble(intensity: f64, side: f64, replicas: usize, seed: u64) -> Ensemble {
        // Pure death with rate 0: the initial Poisson field frozen in time.
        let params = pure_death_params(0.0);
        let sim = SimConfig {
            window_side: side,
            end_time: 0.0,
            initial: InitialCondition::Poisson { intensity },
            seed,
            snapshot_times: vec![0.0],
            max_population: 1_000_000,
            record_events: false,
        };
        replicate(&sim, params, replicas)
    }

    #[test]
    fn poisson_intensity_at_time_zero() {
        let e = poisson_ensemble(2.0, 8.0, 4000, 61);
        let region = BoxRegion::cube(1.0, 7.0, 1);
        let report = intensity(&e, &region).unwrap();
        assert!(
            (report.mean[0] - 2.0).abs() < 3.0 * report.stderr[0],
            "intensity {} ± {}",
            report.mean[0],
            report.stderr[0]
        );
    }

    #[test]
    fn empty_ensemble_intensity_is_zero() {
        let e = poisson_ensemble(0.0, 8.0, 50, 62);
        let region = BoxRegion::cube(0.0, 8.0, 1);
        let report = intensity(&e, &region).unwrap();
        assert_eq!(report.mean[0], 0.0);
        let empty = BoxRegion::cube(3.0, 3.0, 1);
        assert_eq!(
            intensity(&e, &empty).unwrap_err(),
            EstimatorError::EmptyWindow
        );
    }

    #[test]
    fn thinned_intensity_decays() {
        let params = pure_death_params(1.0);
        let sim = SimConfig {
            window_side: 8.0,
            end_time: 1.0,
            initial: InitialCondition::Poisson { intensity: 2.0 },
            seed: 63,
            snapshot_times: vec![1.0],
            max_population: 1_000_000,
            record_events: false,
        };
        let e = replicate(&sim, params, 4000);
        let region = BoxRegion::cube(0.0, 8.0, 1);
        let report = intensity(&e, &region).unwrap();
        let expected = 2.0 * (-1.0f64).exp();
        assert!(
            (report.mean[0] - expected).abs() < 3.0 * report.stderr[0],
            "{} vs {expected}",
            report.mean[0]
        );
    }

    #[test]
    fn poisson_pair_correlation_is_flat() {
        let e = poisson_ensemble(2.0, 10.0, 3000, 64);
        let est = pair_correlation(&e, 0, 1.5, 6, 0.0).unwrap();
        for (b, k2) in est.k2.iter().enumerate() {
            let expected = 4.0; // κ²
            assert!(
                (k2 - expected).abs() < 3.5 * est.stderr[b].max(1e-12),
                "bin {b}: {k2} ± {}",
                est.stderr[b]
            );
        }
        assert!((est.k1 - 2.0).abs() < 3.0 * est.k1_stderr);
    }

    #[test]
    fn two_fixed_points_occupy_single_bin() {
        let params = pure_death_params(0.0);
        let sim = SimConfig {
            window_side: 10.0,
            end_time: 0.0,
            initial: InitialCondition::Points {
                points: vec![vec![4.0], vec![4.55]],
            },
            seed: 65,
            snapshot_times: vec![0.0],
            max_population: 100,
            record_events: false,
        };
        let e = replicate(&sim, params, 10);
        let est = pair_correlation(&e, 0, 1.0, 10, 0.0).unwrap();
        // Distance 0.55 lands in bin 5 of [0, 1) split into 10.
        for (b, k2) in est.k2.iter().enumerate() {
            if b == 5 {
                assert!(*k2 > 0.0);
            } else {
                assert_eq!(*k2, 0.0, "bin {b}");
            }
        }
    }

    #[test]
    fn no_pairs_is_reported() {
        let params = pure_death_params(0.0);
        let sim = SimConfig {
            window_side: 10.0,
            end_time: 0.0,
            initial: InitialCondition::Points {
                points: vec![vec![4.0]],
            },
            seed: 66,
            snapshot_times: vec![0.0],
            max_population: 100,
            record_events: false,
        };
        let e = replicate(&sim, params, 5);
        assert_eq!(
            pair_correlation(&e, 0, 1.0, 10, 0.0).unwrap_err(),
            EstimatorError::NoPairs
        );
    }

    #[test]
    fn competition_digs_short_range_dip() {
        // Strong competition at short range: k²(r0) < k¹² with CI separation.
        let params = Arc::new(ModelParams::new(
            1,
            MortalityField::Constant { rate: 0.1 },
            RadialKernel::Tophat {
                amplitude: 2.0,
                radius: 0.6,
            },
            FissionKernel::factorized(
                1.2,
                RadialKernel::Gaussian {
                    amplitude: 1.0,
                    scale: 0.6,
                    cutoff: 3.0,
                },
            ),
        ));
        let sim = SimConfig {
            window_side: 20.0,
            end_time: 6.0,
            initial: InitialCondition::Poisson { intensity: 1.0 },
            seed: 67,
            snapshot_times: vec![6.0],
            max_population: 20_000,
            record_events: false,
        };
        let e = replicate(&sim, params, 600);
        let est = pair_correlation(&e, 0, 1.2, 4, 0.6).unwrap();
        let short = est.k2[0];
        let short_se = est.stderr[0];
        let k1_sq = est.k1 * est.k1;
        assert!(
            short + 3.0 * short_se < k1_sq,
            "no dip: k2(r0) = {short} ± {short_se}, k1² = {k1_sq}"
        );
    }

    #[test]
    fn poisson_factorial_moments_match_reference() {
        let e = poisson_ensemble(2.0, 6.0, 5000, 68);
        let region = BoxRegion::cube(1.0, 4.0, 1);
        let report = factorial_moments(&e, &region, 3, None).unwrap();
        let lam: f64 = 2.0 * 3.0;
        for m in 1..=3usize {
            let got = report.moments[0][m - 1];
            let se = report.stderr[0][m - 1];
            let expected = lam.powi(m as i32);
            assert!(
                (got - expected).abs() < 3.5 * se,
                "order {m}: {got} ± {se} vs {expected}"
            );
        }
    }

    #[test]
    fn deterministic_single_particle_second_moment_vanishes() {
        let params = pure_death_params(0.0);
        let sim = SimConfig {
            window_side: 4.0,
            end_time: 0.0,
            initial: InitialCondition::Points {
                points: vec![vec![2.0]],
            },
            seed: 69,
            snapshot_times: vec![0.0],
            max_population: 10,
            record_events: false,
        };
        let e = replicate(&sim, params, 20);
        let region = BoxRegion::cube(0.0, 4.0, 1);
        let report = factorial_moments(&e, &region, 2, None).unwrap();
        assert_eq!(report.moments[0][0], 1.0);
        assert_eq!(report.moments[0][1], 0.0);
    }

    #[test]
    fn envelope_violations_flagged_only_when_exceeded() {
        let e = poisson_ensemble(2.0, 6.0, 2000, 70);
        let region = BoxRegion::cube(1.0, 4.0, 1);
        // Generous envelope: no violation.
        let ok = factorial_moments(&e, &region, 2, Some(vec![3.0])).unwrap();
        assert!(ok.violations[0].iter().all(|v| !v));
        // Impossible envelope: flagged.
        let bad = factorial_moments(&e, &region, 2, Some(vec![0.5])).unwrap();
        assert!(bad.violations[0].iter().any(|v| *v));
    }

    #[test]
    fn theta_zero_gives_exactly_one() {
        let e = poisson_ensemble(1.5, 6.0, 200, 71);
        let theta = ThetaFunction::Constant {
            value: 0.0,
            support: BoxRegion::cube(1.0, 3.0, 1),
        };
        let report = bogoliubov_functional(&e, &theta, 0).unwrap();
        assert_eq!(report.functional, 1.0);
        assert_eq!(report.stderr, 0.0);
    }

    #[test]
    fn poisson_functional_matches_exponential_formula() {
        // E F^θ = exp(κ ∫θ) for a Poisson field.
        let kappa = 1.5;
        let e = poisson_ensemble(kappa, 8.0, 6000, 72);
        let theta = ThetaFunction::Constant {
            value: -0.5,
            support: BoxRegion::cube(2.0, 5.0, 1),
        };
        let report = bogoliubov_functional(&e, &theta, 0).unwrap();
        let expected = (kappa * theta.integral()).exp();
        assert!(
            (report.functional - expected).abs() < 3.0 * report.stderr,
            "{} ± {} vs {expected}",
            report.functional,
            report.stderr
        );
        // For a weak theta the order-2 truncation tracks the exponential
        // (third-order remainder ~ |κ∫θ|³/6).
        let weak = ThetaFunction::Constant {
            value: -0.1,
            support: BoxRegion::cube(2.0, 3.5, 1),
        };
        let weak_report = bogoliubov_functional(&e, &weak, 0).unwrap();
        let weak_expected = (kappa * weak.integral()).exp();
        assert!(
            (weak_report.truncation_order2 - weak_expected).abs() < 0.01,
            "truncation {} vs {weak_expected}",
            weak_report.truncation_order2
        );
    }

    #[test]
    fn single_point_with_near_minus_one_theta() {
        let params = pure_death_params(0.0);
        let sim = SimConfig {
            window_side: 4.0,
            end_time: 0.0,
            initial: InitialCondition::Points {
                points: vec![vec![2.0]],
            },
            seed: 73,
            snapshot_times: vec![0.0],
            max_population: 10,
            record_events: false,
        };
        let e = replicate(&sim, params, 3);
        let eps = 1e-3;
        let theta = ThetaFunction::Constant {
            value: -1.0 + eps,
            support: BoxRegion::cube(0.0, 4.0, 1),
        };
        let report = bogoliubov_functional(&e, &theta, 0).unwrap();
        assert!((report.functional - eps).abs() < 1e-12);
    }

    #[test]
    fn functional_is_monotone_in_theta() {
        let e = poisson_ensemble(1.0, 6.0, 1500, 74);
        let support = BoxRegion::cube(1.0, 5.0, 1);
        let weak = ThetaFunction::Constant {
            value: -0.2,
            support: support.clone(),
        };
        let strong = ThetaFunction::Constant {
            value: -0.6,
            support,
        };
        let rw = bogoliubov_functional(&e, &weak, 0).unwrap();
        let rs = bogoliubov_functional(&e, &strong, 0).unwrap();
        assert!(rs.functional < rw.functional);
        assert!(rw.functional <= 1.0);
        assert!(rs.functional > 0.0);
    }

    #[test]
    fn merge_of_ensemble_halves_is_exact() {
        let e = poisson_ensemble(1.2, 6.0, 400, 75);
        let region = BoxRegion::cube(0.0, 6.0, 1);
        let full = intensity(&e, &region).unwrap();
        let mut left = e.clone();
        let right_replicas = left.replicas.split_off(200);
        let mut right = e.clone();
        right.replicas = right_replicas;
        // Count-sum merge: means combine by replica-weighted average.
        let nl = left.replicas.len() as f64;
        let nr = right.replicas.len() as f64;
        let il = intensity(&left, &region).unwrap();
        let ir = intensity(&right, &region).unwrap();
        let merged = (il.mean[0] * nl + ir.mean[0] * nr) / (nl + nr);
        assert!((merged - full.mean[0]).abs() < 1e-14);
    }

    #[test]
    fn tent_theta_evaluates_and_integrates() {
        let theta = ThetaFunction::Tent {
            value: -0.4,
            support: BoxRegion::cube(0.0, 2.0, 1),
        };
        assert!(theta.validate());
        assert_eq!(theta.eval(&[1.0, 0.0, 0.0]), -0.4);
        assert_eq!(theta.eval(&[2.5, 0.0, 0.0]), 0.0);
        assert!((theta.integral() + 0.4).abs() < 1e-12);
    }
}
