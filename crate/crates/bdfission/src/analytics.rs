//! Constructive constants and schedules: the domination pair `(ω, υ)` built
//! from a cell decomposition with sphere-packing bounds, Lambert-W optimized
//! existence horizons, growth constants, sub-Poissonian envelopes, and the
//! global continuation schedule whose divergent step sum extends the
//! correlation evolution to all times.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::unit_ball_volume;
use crate::kernels::{competition_lower_bound, FissionKernel, RadialKernel};
use crate::rng::replica_stream;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("Lambert W is real only for x >= -1/e (got {0})")]
    OutOfDomain(f64),
    #[error("need alpha2 > alpha1 and kappa > kappa' > 0")]
    BadOrdering,
    #[error("no probed radius gives a positive competition floor")]
    NoAdmissibleR,
    #[error("upper Riemann bound on the dispersal profile failed at the smallest cell size")]
    RiemannBoundFailed,
    #[error("omega must satisfy 0 < omega <= {0}")]
    BadOmega(f64),
    #[error("alpha0 = {alpha0} must exceed -log(omega) = {bound}")]
    AlphaTooSmall { alpha0: f64, bound: f64 },
    #[error("schedule did not reach the horizon within {0} steps")]
    HorizonNotReached(usize),
}

/// Principal branch of the Lambert W function by Halley iteration.
///
/// Initial guess: series near the branch point for `x < -0.25`, `ln`-based
/// elsewhere. The residual `|W e^W - x|` converges to machine precision
/// (relative to `|x|` once `x` is large, which is all binary64 can hold).
pub fn lambert_w0(x: f64) -> Result<f64, AnalyticsError> {
    let min_x = -(-1.0f64).exp(); // -1/e
    if x < min_x {
        return Err(AnalyticsError::OutOfDomain(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut w = if x < -0.25 {
        // Expansion around the branch point -1/e.
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 * p * p * p / 72.0
    } else if x < std::f64::consts::E {
        // Pade-ish start near zero.
        x * (1.0 - x + 1.5 * x * x) / (1.0 + 0.5 * x)
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..40 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-16 * w.abs().max(1e-16) {
            break;
        }
    }
    Ok(w)
}

/// Model constants the time-bound formulas need.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateConstants {
    /// ∫ a
    pub a_mass: f64,
    /// <b>
    pub b_mass: f64,
    /// domination slack υ
    pub upsilon: f64,
    /// sup β
    pub beta_sup: f64,
    /// sup m
    pub m_sup: f64,
    /// sup a
    pub a_sup: f64,
}

/// All time horizons of the local theory at a parameter point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeBoundReport {
    pub alpha1: f64,
    pub alpha2: f64,
    /// `T(α₂,α₁) = (α₂-α₁) / (2<b> + υ + <a> e^{α₂})`.
    pub t_scale: f64,
    /// Certified positivity horizon `τ = T/3`.
    pub tau: f64,
    /// `ϖ(α₂; B_υ) = 2<b> + υ + <a> e^{α₂}`.
    pub varpi_full: f64,
    /// `ϖ(α₂; B_{2,υ}) = 2<b> + υ`.
    pub varpi_positive: f64,
    /// `δ(α₁) = 1 + W(((2<b>+υ)/<a>) e^{-α₁-1})` — the maximizing gap.
    pub delta_alpha1: f64,
    /// `T_max(α₁) = e^{-α₁-δ(α₁)} / <a>`.
    pub t_max: f64,
    /// Exponential-moment horizon `T(κ,κ') = ((κ-κ')/<b>) e^{-κ}`.
    pub t_kappa: f64,
}

/// The maximizing scale gap `δ(α)`.
pub fn delta_gap(c: &RateConstants, alpha: f64) -> Result<f64, AnalyticsError> {
    let arg = (2.0 * c.b_mass + c.upsilon) / c.a_mass * (-alpha - 1.0).exp();
    Ok(1.0 + lambert_w0(arg)?)
}

/// `T_max(α) = e^{-α-δ(α)} / <a>`, the best horizon from level `α`.
pub fn t_max(c: &RateConstants, alpha: f64) -> Result<f64, AnalyticsError> {
    Ok((-alpha - delta_gap(c, alpha)?).exp() / c.a_mass)
}

/// `T(α₂,α₁)` and friends.
pub fn time_bounds(
    c: &RateConstants,
    alpha1: f64,
    alpha2: f64,
    kappa: f64,
    kappa_prime: f64,
) -> Result<TimeBoundReport, AnalyticsError> {
    if alpha2 <= alpha1 || kappa_prime <= 0.0 || kappa <= kappa_prime {
        return Err(AnalyticsError::BadOrdering);
    }
    let varpi_full = 2.0 * c.b_mass + c.upsilon + c.a_mass * alpha2.exp();
    let varpi_positive = 2.0 * c.b_mass + c.upsilon;
    let t_scale = (alpha2 - alpha1) / varpi_full;
    let delta_alpha1 = delta_gap(c, alpha1)?;
    Ok(TimeBoundReport {
        alpha1,
        alpha2,
        t_scale,
        tau: t_scale / 3.0,
        varpi_full,
        varpi_positive,
        delta_alpha1,
        t_max: t_max(c, alpha1)?,
        t_kappa: (kappa - kappa_prime) / c.b_mass * (-kappa).exp(),
    })
}

/// Ball-packing density in `R^d` (d <= 3 exact; above that the trivial bound
/// 1 is used, which only enlarges δ and keeps the certificate valid).
pub fn packing_constant(dim: usize) -> f64 {
    match dim {
        1 => 1.0,
        // Disc packing π/√12 and sphere packing π/√18 (Thue; Hales).
        2 => std::f64::consts::PI / 12f64.sqrt(),
        3 => std::f64::consts::PI / 18f64.sqrt(),
        _ => 1.0,
    }
}

/// `g_d(h,r) = (Δ(d)/c_d) ((h+2r)/(hr))^d`.
pub fn packing_factor(dim: usize, h: f64, r: f64) -> f64 {
    packing_constant(dim) / unit_ball_volume(dim) * ((h + 2.0 * r) / (h * r)).powi(dim as i32)
}

/// The constructive domination certificate: constants such that
/// `υ|η| + E_a(η) >= ω E_b(η)` for every finite configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominationCertificate {
    pub dimension: usize,
    pub epsilon: f64,
    /// Cell side of the Riemann cover of β's support.
    pub h: f64,
    /// Competition floor radius and value `a_r = inf_{|x|<=2r} a`.
    pub r: f64,
    pub a_r: f64,
    /// Upper Riemann sum `h^d Σ_l sup_{E_l} β` (must be `<= <b> + ε`).
    pub riemann_sum: f64,
    pub packing_factor: f64,
    /// `δ = max(β*, (<b>+ε) g_d(h,r))`.
    pub delta: f64,
    pub omega: f64,
    pub upsilon: f64,
}

/// Upper Riemann sum of β over a cubic cell cover of its support. Per-cell
/// suprema use the profile's monotonicity when available, else a dense probe
/// with the observed modulus of continuity added.
fn beta_upper_riemann(f: &FissionKernel, dim: usize, h: f64) -> f64 {
    let support = f.beta_support(dim);
    if support == 0.0 {
        return 0.0;
    }
    let cells_per_axis = (2.0 * support / h).ceil() as i64 + 1;
    let half = cells_per_axis / 2;
    let monotone = f.beta_nonincreasing(dim);
    let mut sum = 0.0;
    // Iterate the cell lattice covering [-support-h, support+h]^d.
    let mut idx = vec![-half; dim];
    loop {
        // Distance from the origin to the nearest point of the cell.
        let mut near2 = 0.0;
        let mut far2 = 0.0;
        for &i in &idx {
            let lo = i as f64 * h;
            let hi = lo + h;
            let near = if lo > 0.0 {
                lo
            } else if hi < 0.0 {
                -hi
            } else {
                0.0
            };
            let far = lo.abs().max(hi.abs());
            near2 += near * near;
            far2 += far * far;
        }
        let near = near2.sqrt();
        if near <= support {
            let sup = if monotone {
                f.beta(near, dim)
            } else {
                // Probe along the radial span of the cell.
                let far = far2.sqrt();
                let mut best: f64 = 0.0;
                for i in 0..=8 {
                    let rr = near + (far - near) * i as f64 / 8.0;
                    best = best.max(f.beta(rr, dim));
                }
                best * 1.05
            };
            sum += sup;
        }
        // Advance the lattice index.
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] <= half {
                break;
            }
            idx[k] = -half;
            k += 1;
            if k == dim {
                return sum * h.powi(dim as i32);
            }
        }
    }
}

/// Builds the certificate. Given the requested floor radius `r` (with
/// `a_r > 0`; smaller radii are probed if needed), the cell side `h` is
/// halved until the Riemann bound `h^d Σ β_l <= <b> + ε` holds, then
/// `δ = max(β*, (<b>+ε) g_d(h,r))`, `ω = min(requested, a_r/δ)` and
/// `υ = 2δω`.
pub fn domination_certificate(
    a: &RadialKernel,
    f: &FissionKernel,
    dim: usize,
    epsilon: f64,
    r_request: f64,
    h_request: f64,
    omega_request: Option<f64>,
) -> Result<DominationCertificate, AnalyticsError> {
    // Find a radius with a positive competition floor.
    let mut r = r_request;
    let mut a_r = competition_lower_bound(a, r);
    let mut probes = 0;
    while a_r <= 0.0 && probes < 16 {
        r *= 0.5;
        a_r = competition_lower_bound(a, r);
        probes += 1;
    }
    if a_r <= 0.0 {
        return Err(AnalyticsError::NoAdmissibleR);
    }

    let b_mass = f.total_mass;
    let support = f.beta_support(dim);
    let h_floor = if support > 0.0 {
        support / 1024.0
    } else {
        h_request
    };
    let mut h = h_request;
    let mut riemann = beta_upper_riemann(f, dim, h);
    while riemann > b_mass + epsilon {
        h *= 0.5;
        if h < h_floor {
            return Err(AnalyticsError::RiemannBoundFailed);
        }
        riemann = beta_upper_riemann(f, dim, h);
    }

    let g = packing_factor(dim, h, r);
    let delta = f.beta_sup(dim).max((b_mass + epsilon) * g);
    let omega_cap = a_r / delta;
    let omega = match omega_request {
        Some(w) => {
            if w <= 0.0 || w > omega_cap {
                return Err(AnalyticsError::BadOmega(omega_cap));
            }
            w
        }
        None => omega_cap,
    };
    let upsilon = 2.0 * delta * omega;
    Ok(DominationCertificate {
        dimension: dim,
        epsilon,
        h,
        r,
        a_r,
        riemann_sum: riemann,
        packing_factor: g,
        delta,
        omega,
        upsilon,
    })
}

/// Scales the slack with the coupling: if the domination holds for
/// `(ω₀, υ₀)` then it holds for `(ω, υ₀ ω/ω₀)` whenever `0 < ω <= ω₀`.
pub fn rescale_upsilon(omega0: f64, upsilon0: f64, omega: f64) -> Result<f64, AnalyticsError> {
    if omega <= 0.0 || omega > omega0 {
        return Err(AnalyticsError::BadOmega(omega0));
    }
    Ok(upsilon0 * omega / omega0)
}

/// Monte Carlo audit of a certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominationReport {
    pub samples: usize,
    pub violations: usize,
    /// min over samples of `(Φ_ω(η) + υ|η|) / |η|`.
    pub worst_margin: f64,
    pub pass: bool,
}

/// Evaluates `Φ_ω(η) = Σ_x Σ_{y≠x} [a(x-y) - ω β(x-y)]` on each sampled
/// configuration and checks `Φ_ω(η) >= -υ|η|`.
pub fn verify_domination(
    a: &RadialKernel,
    f: &FissionKernel,
    dim: usize,
    omega: f64,
    upsilon: f64,
    samples: &[Vec<crate::geometry::Position>],
    torus_side: Option<f64>,
) -> DominationReport {
    let dist = |x: &crate::geometry::Position, y: &crate::geometry::Position| match torus_side {
        Some(side) => {
            let mut s = 0.0;
            for k in 0..dim {
                let mut d = (x[k] - y[k]).abs();
                if d > 0.5 * side {
                    d = side - d;
                }
                s += d * d;
            }
            s.sqrt()
        }
        None => {
            let mut s = 0.0;
            for k in 0..dim {
                let d = x[k] - y[k];
                s += d * d;
            }
            s.sqrt()
        }
    };
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for eta in samples {
        let n = eta.len();
        if n <= 1 {
            // Empty pair sum: Φ_ω = 0 >= -υ|η| trivially.
            worst = worst.min(upsilon);
            continue;
        }
        let mut phi = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d = dist(&eta[i], &eta[j]);
                    phi += a.eval_radial(d) - omega * f.beta(d, dim);
                }
            }
        }
        let margin = (phi + upsilon * n as f64) / n as f64;
        worst = worst.min(margin);
        if margin < 0.0 {
            violations += 1;
        }
    }
    DominationReport {
        samples: samples.len(),
        violations,
        worst_margin: worst,
        pass: violations == 0,
    }
}

/// Uniform Poisson configurations on a torus for domination sweeps.
pub fn poisson_samples(
    dim: usize,
    side: f64,
    mean_size: f64,
    count: usize,
    seed: u64,
) -> Vec<Vec<crate::geometry::Position>> {
    use rand_distr::{Distribution, Poisson};
    let mut out = Vec::with_capacity(count);
    let poisson = Poisson::new(mean_size).expect("positive mean");
    for i in 0..count {
        let mut rng = replica_stream(seed, i as u64);
        let n = poisson.sample(&mut rng) as usize;
        let mut eta = Vec::with_capacity(n);
        for _ in 0..n {
            let mut p = crate::geometry::zero_position();
            for c in p.iter_mut().take(dim) {
                *c = rng.random::<f64>() * side;
            }
            eta.push(p);
        }
        out.push(eta);
    }
    out
}

/// Growth constant, invariance flag and envelope at time `t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthReport {
    /// `c = <b> + υ - m_inf`.
    pub c: f64,
    /// Strict invariance `m_inf > <b>` (equality admissible under short
    /// dispersal; surfaced as a note, not a flag).
    pub invariant: bool,
    pub invariant_note: String,
    /// `κ_t = e^{α₀ + c t}`.
    pub kappa_t: f64,
    /// Envelope `r_t(η) = ‖k₀‖_{α₀} e^{(α₀ + ct)|η|}` (description).
    pub envelope_alpha_t: f64,
    pub envelope_norm_k0: f64,
}

/// `c = <b> + υ - m_*`; requires `α₀ > -log ω`.
pub fn growth_and_envelope(
    b_mass: f64,
    m_inf: f64,
    omega: f64,
    upsilon: f64,
    alpha0: f64,
    norm_k0: f64,
    t: f64,
) -> Result<GrowthReport, AnalyticsError> {
    let bound = -omega.ln();
    if alpha0 <= bound {
        return Err(AnalyticsError::AlphaTooSmall { alpha0, bound });
    }
    let c = b_mass + upsilon - m_inf;
    let invariant = m_inf > b_mass;
    let note = if invariant {
        "strict invariance: m_* > <b>".to_string()
    } else if m_inf == b_mass {
        "boundary case m_* = <b>: invariance admissible under short dispersal only".to_string()
    } else {
        "not invariant: envelope level grows when c > 0".to_string()
    };
    Ok(GrowthReport {
        c,
        invariant,
        invariant_note: note,
        kappa_t: (alpha0 + c * t).exp(),
        envelope_alpha_t: alpha0 + c * t,
        envelope_norm_k0: norm_k0,
    })
}

/// One continuation step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub n: usize,
    /// Step length `T_n = T_max(α*_{n-1}) / 3`.
    pub t_n: f64,
    /// Envelope level `α*_n = α*_{n-1} + c T_n`.
    pub alpha_star: f64,
    /// Working level `α_n = α*_{n-1} + δ(α*_{n-1})`.
    pub alpha_n: f64,
    /// Partial sum `Σ_{k<=n} T_k`.
    pub elapsed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    pub alpha0: f64,
    pub c: f64,
    pub horizon: f64,
    pub steps: Vec<ScheduleStep>,
}

const SCHEDULE_CAP: usize = 200_000;

/// Iterates the continuation recursion from `α₀` until the partial sums pass
/// `horizon`. Asserts `α*_n < α_n` at every step.
pub fn schedule(
    c: &RateConstants,
    m_inf: f64,
    omega: f64,
    alpha0: f64,
    horizon: f64,
) -> Result<Schedule, AnalyticsError> {
    let bound = -omega.ln();
    if alpha0 <= bound {
        return Err(AnalyticsError::AlphaTooSmall { alpha0, bound });
    }
    assert!(horizon > 0.0);
    let growth = c.b_mass + c.upsilon - m_inf;
    let mut steps = Vec::new();
    let mut alpha_star = alpha0;
    let mut elapsed = 0.0;
    for n in 1..=SCHEDULE_CAP {
        let t_n = t_max(c, alpha_star)? / 3.0;
        let alpha_n = alpha_star + delta_gap(c, alpha_star)?;
        let next_star = alpha_star + growth * t_n;
        assert!(
            next_star < alpha_n,
            "continuation invariant α*_n < α_n failed at step {n}"
        );
        elapsed += t_n;
        steps.push(ScheduleStep {
            n,
            t_n,
            alpha_star: next_star,
            alpha_n,
            elapsed,
        });
        alpha_star = next_star;
        if elapsed >= horizon {
            return Ok(Schedule {
                alpha0,
                c: growth,
                horizon,
                steps,
            });
        }
    }
    Err(AnalyticsError::HorizonNotReached(SCHEDULE_CAP))
}

/// Grid classification of the dispersal regime.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum DispersalRegime {
    /// `a >= ω β` everywhere on the grid; carries the best grid-certified ω.
    Short { omega: f64 },
    /// Some grid point has `a < ω β` for every ω; carries the witness.
    Long { witness_radius: f64 },
}

/// Probes `a(x) / β(x)` on a radial grid over the support of β. This is a
/// grid heuristic, labeled as such: the true dichotomy quantifies over all
/// of `R^d`.
pub fn dispersal_regime(
    a: &RadialKernel,
    f: &FissionKernel,
    dim: usize,
    grid_points: usize,
) -> DispersalRegime {
    let support = f.beta_support(dim);
    let mut omega = f64::INFINITY;
    let mut witness = None;
    for i in 0..=grid_points {
        let r = support * i as f64 / grid_points as f64;
        let beta = f.beta(r, dim);
        if beta <= 1e-300 {
            continue;
        }
        let ratio = a.eval_radial(r) / beta;
        if ratio == 0.0 {
            witness = Some(r);
            break;
        }
        omega = omega.min(ratio);
    }
    match witness {
        Some(r) => DispersalRegime::Long { witness_radius: r },
        None => DispersalRegime::Short {
            omega: if omega.is_finite() { omega } else { 1.0 },
        },
    }
}
