//! Model ingredients: competition kernel `a`, fission kernel `b`, mortality
//! field `m`, and their validation.
//!
//! The standing assumptions are: `a` nonnegative, bounded, integrable and
//! bounded below by some `a_* > 0` on a ball; `b(x|y1,y2)` symmetric in the
//! offspring with translation-invariant total mass `<b>`; the sibling
//! dispersal profile `β(y1-y2) = ∫ b(x|y1,y2) dx` bounded with `∫β = <b>`;
//! `m` nonnegative and bounded. All continuum kernels carry a hard cutoff
//! radius so that cell-list neighbor search applies; the truncated tail mass
//! is reported by validation.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Position};
use crate::quadrature::{adaptive_simpson, integrate_radial};

const QUAD_TOL: f64 = 1e-10;
/// Resolution of the cached radial β table.
const BETA_TABLE_POINTS: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel mass is not finite")]
    NonFiniteMass,
    #[error("kernel takes a negative value ({0})")]
    NegativeKernel(f64),
    #[error("tabulated kernel without declared support")]
    MissingCutoff,
    #[error("tabulated kernel needs at least two rows")]
    ShortTable,
}

/// Radial profile with a hard cutoff; evaluation beyond the cutoff is exactly
/// zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialKernel {
    Gaussian {
        amplitude: f64,
        scale: f64,
        cutoff: f64,
    },
    Tophat {
        amplitude: f64,
        radius: f64,
    },
    Exponential {
        amplitude: f64,
        scale: f64,
        cutoff: f64,
    },
    Tabulated {
        /// Strictly increasing radii starting at 0; the last entry is the
        /// cutoff.
        radii: Vec<f64>,
        values: Vec<f64>,
    },
}

impl RadialKernel {
    pub fn zero() -> Self {
        RadialKernel::Tophat {
            amplitude: 0.0,
            radius: 1.0,
        }
    }

    /// Radius beyond which the kernel vanishes identically.
    pub fn cutoff(&self) -> f64 {
        match self {
            RadialKernel::Gaussian { cutoff, .. } | RadialKernel::Exponential { cutoff, .. } => {
                *cutoff
            }
            RadialKernel::Tophat { radius, .. } => *radius,
            RadialKernel::Tabulated { radii, .. } => radii.last().copied().unwrap_or(0.0),
        }
    }

    pub fn eval_radial(&self, r: f64) -> f64 {
        let r = r.abs();
        if r > self.cutoff() {
            return 0.0;
        }
        match self {
            RadialKernel::Gaussian {
                amplitude, scale, ..
            } => amplitude * (-0.5 * (r / scale) * (r / scale)).exp(),
            RadialKernel::Tophat { amplitude, .. } => *amplitude,
            RadialKernel::Exponential {
                amplitude, scale, ..
            } => amplitude * (-r / scale).exp(),
            RadialKernel::Tabulated { radii, values } => {
                // Linear interpolation between table rows.
                match radii.binary_search_by(|probe| probe.partial_cmp(&r).unwrap()) {
                    Ok(i) => values[i],
                    Err(0) => values[0],
                    Err(i) if i >= radii.len() => *values.last().unwrap(),
                    Err(i) => {
                        let t = (r - radii[i - 1]) / (radii[i] - radii[i - 1]);
                        values[i - 1] + t * (values[i] - values[i - 1])
                    }
                }
            }
        }
    }

    pub fn eval(&self, x: &Position, dim: usize) -> f64 {
        self.eval_radial(geometry::norm(x, dim))
    }

    /// Whether the profile is radially nonincreasing. Closed shapes are by
    /// construction; tables are scanned.
    pub fn radially_nonincreasing(&self) -> bool {
        match self {
            RadialKernel::Tabulated { values, .. } => {
                values.windows(2).all(|w| w[1] <= w[0] + 1e-15)
            }
            _ => true,
        }
    }

    /// Supremum of the profile.
    pub fn sup(&self) -> f64 {
        match self {
            RadialKernel::Tabulated { values, .. } => values.iter().cloned().fold(0.0, f64::max),
            _ => self.eval_radial(0.0),
        }
    }

    /// Total mass over `R^d`, by adaptive radial quadrature.
    pub fn mass(&self, dim: usize) -> f64 {
        integrate_radial(&|r| self.eval_radial(r), self.cutoff(), dim, QUAD_TOL)
    }

    /// Fraction of the untruncated mass lost to the cutoff, for shapes with
    /// closed-form tails; zero for compactly supported shapes.
    pub fn truncated_tail_fraction(&self, dim: usize) -> f64 {
        match self {
            RadialKernel::Gaussian { scale, cutoff, .. }
            | RadialKernel::Exponential { scale, cutoff, .. } => {
                let inside = self.mass(dim);
                let full = match self {
                    RadialKernel::Gaussian { amplitude, .. } => {
                        amplitude * (2.0 * std::f64::consts::PI).powf(dim as f64 / 2.0)
                            * scale.powi(dim as i32)
                    }
                    RadialKernel::Exponential { amplitude, .. } => {
                        // ∫ A e^{-r/s} over R^d = A s^d d! c_d  (Gamma(d) integral)
                        let fact: f64 = (1..=dim as u64).map(|k| k as f64).product();
                        amplitude
                            * scale.powi(dim as i32)
                            * fact
                            * geometry::unit_ball_volume(dim)
                        * { let _ = cutoff; 1.0 }
                    }
                    _ => unreachable!(),
                };
                ((full - inside) / full).max(0.0)
            }
            _ => 0.0,
        }
    }

    fn check_nonnegative(&self) -> Result<(), KernelError> {
        if let RadialKernel::Tabulated { radii, values } = self {
            if radii.len() < 2 || values.len() != radii.len() {
                return Err(KernelError::ShortTable);
            }
            if radii.windows(2).any(|w| w[1] <= w[0]) {
                return Err(KernelError::MissingCutoff);
            }
            if let Some(v) = values.iter().find(|v| **v < 0.0 || !v.is_finite()) {
                return Err(KernelError::NegativeKernel(*v));
            }
        } else {
            let amp = match self {
                RadialKernel::Gaussian { amplitude, .. }
                | RadialKernel::Tophat { amplitude, .. }
                | RadialKernel::Exponential { amplitude, .. } => *amplitude,
                RadialKernel::Tabulated { .. } => unreachable!(),
            };
            if amp < 0.0 || !amp.is_finite() {
                return Err(KernelError::NegativeKernel(amp));
            }
        }
        Ok(())
    }
}

/// Offspring dispersal: a normalized radial density, or a point mass at the
/// parent (the degenerate limit, useful for desk checks).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dispersal {
    Density { profile: RadialKernel },
    PointMass,
}

/// Precomputed inverse-CDF table for sampling the radial displacement length.
#[derive(Debug, Clone)]
struct RadialSampler {
    /// radius at quantile i / (len-1)
    quantiles: Vec<f64>,
}

impl RadialSampler {
    fn build(profile: &RadialKernel, dim: usize) -> Self {
        let cutoff = profile.cutoff();
        let n = 4096usize;
        let d = dim as i32;
        let weight = |r: f64| profile.eval_radial(r) * r.powi(d - 1);
        // Cumulative integral on a fine grid, then invert.
        let grid: Vec<f64> = (0..=n).map(|i| cutoff * i as f64 / n as f64).collect();
        let mut cdf = vec![0.0; n + 1];
        for i in 1..=n {
            cdf[i] = cdf[i - 1] + adaptive_simpson(&weight, grid[i - 1], grid[i], 1e-12);
        }
        let total = cdf[n];
        assert!(
            total.is_finite() && total > 0.0,
            "dispersal profile has zero mass"
        );
        let m = 4096usize;
        let mut quantiles = Vec::with_capacity(m + 1);
        let mut j = 0usize;
        for i in 0..=m {
            let target = total * i as f64 / m as f64;
            while j < n && cdf[j + 1] < target {
                j += 1;
            }
            let (c0, c1) = (cdf[j], cdf[j + 1]);
            let t = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
            quantiles.push(grid[j] + t * (grid[j + 1] - grid[j]));
        }
        Self { quantiles }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * (self.quantiles.len() - 1) as f64;
        let i = (u as usize).min(self.quantiles.len() - 2);
        let t = u - i as f64;
        self.quantiles[i] + t * (self.quantiles[i + 1] - self.quantiles[i])
    }
}

/// Cached β profile: uniform radial grid with cubic (Catmull-Rom)
/// interpolation between quadrature-computed nodes.
#[derive(Debug, Clone)]
struct BetaTable {
    support: f64,
    values: Vec<f64>,
}

impl BetaTable {
    fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.support {
            return 0.0;
        }
        let n = self.values.len() - 1;
        let x = r / self.support * n as f64;
        let i = (x as usize).min(n - 1);
        let t = x - i as f64;
        let p1 = self.values[i];
        let p2 = self.values[i + 1];
        let p0 = if i == 0 { p1 } else { self.values[i - 1] };
        let p3 = if i + 2 > n { p2 } else { self.values[i + 2] };
        let v = 0.5
            * (2.0 * p1
                + (p2 - p0) * t
                + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
                + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t * t * t);
        v.max(0.0)
    }
}

/// Fission kernel `b(x|y1,y2)`, symmetric in the offspring by construction.
///
/// `factorized`: `b = <b> q(y1-x) q(y2-x)` for a normalized dispersal `q`.
/// `bolker_pacala`: one offspring buds at the parent, the other at
/// `x + ξ` with `ξ ~ β/<b>`, the pair uniformly swapped — the distributional
/// kernel `b = ½(δ(x-y1) + δ(x-y2)) β(y1-y2)`.
///
/// `sigma > 0` multiplies the density by `φ_σ(y1) φ_σ(y2)` with
/// `φ_σ(x) = exp(-σ|x|²)`; sampling then rejects against the unmollified
/// sampler. Only the smooth displacement profile `β` (scaled by `<b>`) is
/// exposed as a function — sampling needs no density.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum FissionVariant {
    Factorized { dispersal: Dispersal },
    BolkerPacala { dispersal: Dispersal },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FissionKernel {
    pub total_mass: f64,
    #[serde(flatten)]
    pub variant: FissionVariant,
    #[serde(default)]
    pub sigma: f64,
    #[serde(skip)]
    normalization: OnceLock<f64>,
    #[serde(skip)]
    beta_table: OnceLock<BetaTable>,
    #[serde(skip)]
    sampler: OnceLock<Option<RadialSampler>>,
}

impl FissionKernel {
    pub fn new(total_mass: f64, variant: FissionVariant) -> Self {
        Self {
            total_mass,
            variant,
            sigma: 0.0,
            normalization: OnceLock::new(),
            beta_table: OnceLock::new(),
            sampler: OnceLock::new(),
        }
    }

    pub fn factorized(total_mass: f64, dispersal_profile: RadialKernel) -> Self {
        Self::new(
            total_mass,
            FissionVariant::Factorized {
                dispersal: Dispersal::Density {
                    profile: dispersal_profile,
                },
            },
        )
    }

    pub fn bolker_pacala(total_mass: f64, dispersal_profile: RadialKernel) -> Self {
        Self::new(
            total_mass,
            FissionVariant::BolkerPacala {
                dispersal: Dispersal::Density {
                    profile: dispersal_profile,
                },
            },
        )
    }

    pub fn dispersal(&self) -> &Dispersal {
        match &self.variant {
            FissionVariant::Factorized { dispersal } | FissionVariant::BolkerPacala { dispersal } => {
                dispersal
            }
        }
    }

    fn dispersal_profile(&self) -> Option<&RadialKernel> {
        match self.dispersal() {
            Dispersal::Density { profile } => Some(profile),
            Dispersal::PointMass => None,
        }
    }

    /// Mass of the raw dispersal profile, used to normalize it to a density.
    fn normalization(&self, dim: usize) -> f64 {
        *self.normalization.get_or_init(|| match self.dispersal_profile() {
            Some(p) => p.mass(dim),
            None => 1.0,
        })
    }

    /// Normalized dispersal density at displacement length `r`.
    pub fn dispersal_density(&self, r: f64, dim: usize) -> f64 {
        match self.dispersal_profile() {
            Some(p) => p.eval_radial(r) / self.normalization(dim),
            None => 0.0,
        }
    }

    /// Radius beyond which β vanishes.
    pub fn beta_support(&self, _dim: usize) -> f64 {
        match (&self.variant, self.dispersal_profile()) {
            (FissionVariant::Factorized { .. }, Some(p)) => 2.0 * p.cutoff(),
            (FissionVariant::BolkerPacala { .. }, Some(p)) => p.cutoff(),
            (_, None) => 0.0,
        }
    }

    /// Sibling displacement rate-density `β(u)`, `u = y1 - y2` (the smooth
    /// part, scaled so that `∫ β = <b>`). For the factorized variant this is
    /// `<b> (q ⋆ q)(u)`; for Bolker-Pacala it is `<b>` times the dispersal
    /// density itself.
    pub fn beta(&self, u: f64, dim: usize) -> f64 {
        match &self.variant {
            FissionVariant::BolkerPacala { .. } => self.total_mass * self.dispersal_density(u, dim),
            FissionVariant::Factorized { .. } => {
                if self.dispersal_profile().is_none() {
                    return 0.0;
                }
                let table = self.beta_table.get_or_init(|| {
                    let support = self.beta_support(dim);
                    let values = (0..=BETA_TABLE_POINTS)
                        .map(|i| {
                            let r = support * i as f64 / BETA_TABLE_POINTS as f64;
                            self.beta_autocorrelation(r, dim)
                        })
                        .collect();
                    BetaTable { support, values }
                });
                table.eval(u)
            }
        }
    }

    /// Direct quadrature of `<b> (q ⋆ q)(u)`; exact but slow, backs the cached
    /// table and the validation integral.
    pub fn beta_autocorrelation(&self, u: f64, dim: usize) -> f64 {
        let q = match self.dispersal_profile() {
            Some(p) => p,
            None => return 0.0,
        };
        let norm = self.normalization(dim);
        let cut = q.cutoff();
        let dens = |r: f64| q.eval_radial(r) / norm;
        let value = match dim {
            1 => adaptive_simpson(
                &|z: f64| dens(z) * dens(z - u),
                (u - cut).max(-cut),
                cut.min(u + cut),
                1e-12,
            ),
            2 => {
                // polar: ∫ q(ρ) ρ ∫_0^{2π} q(|ρe_φ - u e_1|) dφ dρ
                adaptive_simpson(
                    &|rho: f64| {
                        if rho == 0.0 {
                            return 0.0;
                        }
                        let inner = adaptive_simpson(
                            &|phi: f64| {
                                let dist =
                                    (rho * rho + u * u - 2.0 * rho * u * phi.cos()).max(0.0).sqrt();
                                dens(dist)
                            },
                            0.0,
                            std::f64::consts::PI,
                            1e-11,
                        );
                        2.0 * dens(rho) * rho * inner
                    },
                    0.0,
                    cut,
                    1e-10,
                )
            }
            3 => adaptive_simpson(
                &|rho: f64| {
                    if rho == 0.0 {
                        return 0.0;
                    }
                    let inner = adaptive_simpson(
                        &|theta: f64| {
                            let dist = (rho * rho + u * u - 2.0 * rho * u * theta.cos())
                                .max(0.0)
                                .sqrt();
                            dens(dist) * theta.sin()
                        },
                        0.0,
                        std::f64::consts::PI,
                        1e-11,
                    );
                    2.0 * std::f64::consts::PI * dens(rho) * rho * rho * inner
                },
                0.0,
                cut,
                1e-10,
            ),
            d => panic!("dimension {d} not supported"),
        };
        self.total_mass * value.max(0.0)
    }

    /// Supremum of β over its support (grid probe; exact at 0 for
    /// nonincreasing profiles).
    pub fn beta_sup(&self, dim: usize) -> f64 {
        let support = self.beta_support(dim);
        if support == 0.0 {
            return 0.0;
        }
        (0..=256)
            .map(|i| self.beta(support * i as f64 / 256.0, dim))
            .fold(0.0, f64::max)
    }

    /// `∫ β(u) du` over `R^d` by quadrature against the cached profile.
    pub fn beta_mass(&self, dim: usize) -> f64 {
        let support = self.beta_support(dim);
        if support == 0.0 {
            return 0.0;
        }
        integrate_radial(&|r| self.beta(r, dim), support, dim, 1e-11)
    }

    /// Whether the cached β profile is radially nonincreasing (scanned).
    pub fn beta_nonincreasing(&self, dim: usize) -> bool {
        let support = self.beta_support(dim);
        if support == 0.0 {
            return true;
        }
        let probes: Vec<f64> = (0..=512)
            .map(|i| self.beta(support * i as f64 / 512.0, dim))
            .collect();
        probes.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
    }

    fn sampler(&self, dim: usize) -> Option<&RadialSampler> {
        self.sampler
            .get_or_init(|| self.dispersal_profile().map(|p| RadialSampler::build(p, dim)))
            .as_ref()
    }

    fn sample_displacement<R: Rng>(&self, dim: usize, rng: &mut R) -> Position {
        let mut out = geometry::zero_position();
        let sampler = match self.sampler(dim) {
            Some(s) => s,
            None => return out,
        };
        let r = sampler.sample(rng);
        match dim {
            1 => {
                out[0] = if rng.random::<bool>() { r } else { -r };
            }
            2 => {
                let phi = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
                out[0] = r * phi.cos();
                out[1] = r * phi.sin();
            }
            3 => {
                let cos_t = rng.random::<f64>() * 2.0 - 1.0;
                let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
                let phi = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
                out[0] = r * sin_t * phi.cos();
                out[1] = r * sin_t * phi.sin();
                out[2] = r * cos_t;
            }
            d => panic!("dimension {d} not supported"),
        }
        out
    }

    /// Draws an exchangeable offspring pair for a parent at `x`, distributed
    /// as `b(x|·,·)/<b>`. Mollified kernels (σ > 0) sample by rejection with
    /// acceptance `φ_σ(y1) φ_σ(y2)`.
    pub fn sample_offspring<R: Rng>(&self, x: &Position, dim: usize, rng: &mut R) -> (Position, Position) {
        const MAX_REJECTS: u32 = 1_000_000;
        for _ in 0..MAX_REJECTS {
            let (y1, y2) = self.sample_offspring_raw(x, dim, rng);
            if self.sigma == 0.0 {
                return (y1, y2);
            }
            let accept = phi_sigma(self.sigma, &y1, dim) * phi_sigma(self.sigma, &y2, dim);
            if rng.random::<f64>() < accept {
                return (y1, y2);
            }
        }
        panic!("mollified rejection sampling failed to accept; sigma too large for this window");
    }

    fn sample_offspring_raw<R: Rng>(&self, x: &Position, dim: usize, rng: &mut R) -> (Position, Position) {
        match &self.variant {
            FissionVariant::Factorized { .. } => {
                let d1 = self.sample_displacement(dim, rng);
                let d2 = self.sample_displacement(dim, rng);
                let mut y1 = *x;
                let mut y2 = *x;
                for k in 0..dim {
                    y1[k] += d1[k];
                    y2[k] += d2[k];
                }
                (y1, y2)
            }
            FissionVariant::BolkerPacala { .. } => {
                let d = self.sample_displacement(dim, rng);
                let mut y2 = *x;
                for k in 0..dim {
                    y2[k] += d[k];
                }
                if rng.random::<bool>() {
                    (*x, y2)
                } else {
                    (y2, *x)
                }
            }
        }
    }

    /// Returns the kernel with density multiplied by `φ_σ(y1) φ_σ(y2)`.
    /// σ = 0 returns an identical kernel.
    pub fn mollify(&self, sigma: f64) -> FissionKernel {
        assert!(sigma >= 0.0, "sigma must be nonnegative");
        let mut out = FissionKernel::new(self.total_mass, self.variant.clone());
        out.sigma = self.sigma + sigma;
        out
    }

    fn check(&self, dim: usize) -> Result<(), KernelError> {
        if !self.total_mass.is_finite() {
            return Err(KernelError::NonFiniteMass);
        }
        if self.total_mass < 0.0 {
            return Err(KernelError::NegativeKernel(self.total_mass));
        }
        if let Some(p) = self.dispersal_profile() {
            p.check_nonnegative()?;
            let mass = p.mass(dim);
            if !mass.is_finite() || mass <= 0.0 {
                return Err(KernelError::NonFiniteMass);
            }
        }
        Ok(())
    }
}

/// The σ-mollifier `φ_σ(x) = exp(-σ|x|²)`; `φ_0 ≡ 1`.
pub fn phi_sigma(sigma: f64, x: &Position, dim: usize) -> f64 {
    let n2: f64 = x[..dim].iter().map(|c| c * c).sum();
    (-sigma * n2).exp()
}

/// Mortality rate field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MortalityField {
    Constant { rate: f64 },
    /// Piecewise-constant on a periodic grid over `[0, side)^d`.
    TabulatedOnGrid {
        side: f64,
        cells_per_axis: usize,
        values: Vec<f64>,
    },
}

impl MortalityField {
    pub fn eval(&self, x: &Position, dim: usize) -> f64 {
        match self {
            MortalityField::Constant { rate } => *rate,
            MortalityField::TabulatedOnGrid {
                side,
                cells_per_axis,
                values,
            } => {
                let n = *cells_per_axis;
                let mut idx = 0usize;
                for k in 0..dim {
                    let mut c = (x[k].rem_euclid(*side) / side * n as f64) as usize;
                    if c >= n {
                        c = n - 1;
                    }
                    idx = idx * n + c;
                }
                values[idx]
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            MortalityField::Constant { rate } => *rate,
            MortalityField::TabulatedOnGrid { values, .. } => {
                values.iter().cloned().fold(0.0, f64::max)
            }
        }
    }

    pub fn inf(&self) -> f64 {
        match self {
            MortalityField::Constant { rate } => *rate,
            MortalityField::TabulatedOnGrid { values, .. } => {
                values.iter().cloned().fold(f64::INFINITY, f64::min)
            }
        }
    }

    fn check(&self) -> Result<(), KernelError> {
        let bad = match self {
            MortalityField::Constant { rate } => (*rate < 0.0 || !rate.is_finite()).then_some(*rate),
            MortalityField::TabulatedOnGrid { values, .. } => values
                .iter()
                .find(|v| **v < 0.0 || !v.is_finite())
                .copied(),
        };
        match bad {
            Some(v) => Err(KernelError::NegativeKernel(v)),
            None => Ok(()),
        }
    }
}

/// Derived constants cached by validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConstants {
    /// sup a
    pub a_sup: f64,
    /// ∫ a
    pub a_mass: f64,
    /// lower competition bound on the ball of radius 2r
    pub a_lower: f64,
    /// radius certifying `a_lower`
    pub r: f64,
    /// <b>
    pub b_mass: f64,
    /// sup β
    pub beta_sup: f64,
    /// sup m
    pub m_sup: f64,
    /// inf m
    pub m_inf: f64,
}

/// The full parameter triple `(m, a, b)` plus the dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub dimension: usize,
    pub mortality: MortalityField,
    pub competition: RadialKernel,
    pub fission: FissionKernel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationItem {
    pub item: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub items: Vec<ValidationItem>,
    pub constants: ModelConstants,
    pub competition_tail_fraction: f64,
    pub dispersal_tail_fraction: f64,
    /// |∫β - <b>| / <b> from quadrature of the β profile.
    pub beta_mass_rel_error: f64,
}

impl ModelParams {
    pub fn new(
        dimension: usize,
        mortality: MortalityField,
        competition: RadialKernel,
        fission: FissionKernel,
    ) -> Self {
        assert!((1..=3).contains(&dimension), "dimension must be 1, 2 or 3");
        Self {
            dimension,
            mortality,
            competition,
            fission,
        }
    }

    pub fn total_fission_rate(&self) -> f64 {
        self.fission.total_mass
    }

    /// A radius `r` with `a_r = inf_{|x|<=2r} a > 0`, probing halving radii
    /// from `cutoff/2` and keeping the probe with the best `r · a_r`
    /// trade-off (a large ball with a vanishing floor is useless downstream,
    /// and vice versa). Returns `(r, a_r)`; `a_r = 0` if every probe fails.
    pub fn admissible_radius(&self) -> (f64, f64) {
        let cutoff = self.competition.cutoff();
        let mut r = 0.5 * cutoff;
        let mut best = (0.0, 0.0);
        for _ in 0..12 {
            let a_r = competition_lower_bound(&self.competition, r);
            if a_r * r > best.0 * best.1 {
                best = (r, a_r);
            }
            r *= 0.5;
        }
        best
    }

    pub fn constants(&self) -> ModelConstants {
        let (r, a_lower) = self.admissible_radius();
        ModelConstants {
            a_sup: self.competition.sup(),
            a_mass: self.competition.mass(self.dimension),
            a_lower,
            r,
            b_mass: self.fission.total_mass,
            beta_sup: self.fission.beta_sup(self.dimension),
            m_sup: self.mortality.sup(),
            m_inf: self.mortality.inf(),
        }
    }
}

/// `a_r = inf_{|x| <= 2r} a(x)`. For radially nonincreasing profiles this is
/// `a(2r)` exactly; tabulated profiles take a grid minimum with a
/// modulus-of-continuity margin.
pub fn competition_lower_bound(a: &RadialKernel, r: f64) -> f64 {
    if 2.0 * r > a.cutoff() {
        return 0.0;
    }
    if a.radially_nonincreasing() {
        return a.eval_radial(2.0 * r);
    }
    let n = 512;
    let mut min = f64::INFINITY;
    let mut max_step: f64 = 0.0;
    let mut prev = a.eval_radial(0.0);
    for i in 0..=n {
        let x = 2.0 * r * i as f64 / n as f64;
        let v = a.eval_radial(x);
        min = min.min(v);
        max_step = max_step.max((v - prev).abs());
        prev = v;
    }
    (min - max_step).max(0.0)
}

/// Checks items (i)-(iv) of the standing assumptions and reports the derived
/// constants.
pub fn validate_params(p: &ModelParams) -> Result<ValidationReport, KernelError> {
    p.competition.check_nonnegative()?;
    p.fission.check(p.dimension)?;
    p.mortality.check()?;

    let consts = p.constants();
    if !consts.a_mass.is_finite() || !consts.b_mass.is_finite() {
        return Err(KernelError::NonFiniteMass);
    }

    let mut items = Vec::new();
    let item_i = consts.a_sup.is_finite() && consts.a_mass.is_finite();
    items.push(ValidationItem {
        item: "(i) competition integrable and bounded".into(),
        pass: item_i,
        detail: format!("a* = {:.6e}, <a> = {:.6e}", consts.a_sup, consts.a_mass),
    });
    let item_ii = consts.a_lower > 0.0;
    items.push(ValidationItem {
        item: "(ii) competition bounded below near the origin".into(),
        pass: item_ii,
        detail: if item_ii {
            format!("a_r = {:.6e} at r = {:.6e}", consts.a_lower, consts.r)
        } else {
            "no probed r with a_r > 0".into()
        },
    });
    let item_iii = consts.b_mass.is_finite() && consts.b_mass >= 0.0;
    items.push(ValidationItem {
        item: "(iii) fission mass finite, offspring-symmetric".into(),
        pass: item_iii,
        detail: format!("<b> = {:.6e} (symmetric by construction)", consts.b_mass),
    });
    let beta_mass = p.fission.beta_mass(p.dimension);
    let beta_rel = if consts.b_mass > 0.0 {
        (beta_mass - consts.b_mass).abs() / consts.b_mass
    } else {
        0.0
    };
    let item_iv = consts.beta_sup.is_finite() && beta_rel < 1e-8;
    items.push(ValidationItem {
        item: "(iv) dispersal profile bounded with mass <b>".into(),
        pass: item_iv,
        detail: format!(
            "beta* = {:.6e}, ∫β = {:.10e} vs <b> = {:.10e} (rel err {:.2e})",
            consts.beta_sup, beta_mass, consts.b_mass, beta_rel
        ),
    });

    Ok(ValidationReport {
        pass: items.iter().all(|i| i.pass),
        items,
        competition_tail_fraction: p.competition.truncated_tail_fraction(p.dimension),
        dispersal_tail_fraction: p
            .fission
            .dispersal_profile()
            .map(|q| q.truncated_tail_fraction(p.dimension))
            .unwrap_or(0.0),
        beta_mass_rel_error: beta_rel,
        constants: consts,
    })
}
