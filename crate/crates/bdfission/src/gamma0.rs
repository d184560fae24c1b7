//! Exact combinatorial calculus on finite configurations over a small site
//! set.
//!
//! The continuum objects are replaced by their discrete surrogates:
//! integrals over `R^d` become sums over sites, finite configurations become
//! multisets of sites (repeats allowed — the Lebesgue-Poisson sum ranges over
//! tuples), and the reference measure gives the multiset `η` weight
//! `1/∏_s mult_s(η)!`. Simple-subset restrictions apply only where the
//! continuum configuration is simple (the K-transform input). All operator
//! identities checked here — the K-transform pairing, the generator/correlation
//! duality, the Möbius inversion between densities and correlation functions —
//! hold *exactly* at these sizes, which is the point of the module.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum Gamma0Error {
    #[error("operation needs values up to size {needed} but the table caps at {cap}")]
    TruncationOverflow { needed: usize, cap: usize },
    #[error("tables live on different spaces")]
    SpaceMismatch,
}

/// A multiset over sites `0..m_sites`, stored as a sorted site list.
pub type Multiset = Vec<u8>;

/// Enumeration of all multisets of size `<= n_max` over `m_sites` sites,
/// with index maps both ways. Ordered by size, then lexicographically.
#[derive(Debug)]
pub struct MultisetSpace {
    pub m_sites: usize,
    pub n_max: usize,
    states: Vec<Multiset>,
    index: HashMap<Multiset, usize>,
}

impl MultisetSpace {
    pub fn new(m_sites: usize, n_max: usize) -> Arc<Self> {
        let mut states = vec![Vec::new()];
        for n in 1..=n_max {
            let mut current: Multiset = Vec::with_capacity(n);
            gen_sorted(m_sites as u8, n, 0, &mut current, &mut states);
        }
        states.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Arc::new(Self {
            m_sites,
            n_max,
            states,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Multiset] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &Multiset {
        &self.states[i]
    }

    pub fn index_of(&self, eta: &[u8]) -> Option<usize> {
        self.index.get(eta).copied()
    }
}

fn gen_sorted(m: u8, n: usize, start: u8, current: &mut Multiset, out: &mut Vec<Multiset>) {
    if current.len() == n {
        out.push(current.clone());
        return;
    }
    for s in start..m {
        current.push(s);
        gen_sorted(m, n, s, current, out);
        current.pop();
    }
}

/// Lebesgue-Poisson weight of a multiset: `1/∏_s mult_s!`. Summing
/// `w(η) G(η)` over multisets of size n equals `(1/n!) Σ_{tuples} G`.
pub fn lp_weight(eta: &[u8]) -> f64 {
    let mut w = 1.0;
    let mut run = 1u64;
    for i in 1..eta.len() {
        if eta[i] == eta[i - 1] {
            run += 1;
            w /= run as f64;
        } else {
            run = 1;
        }
    }
    w
}

/// Inserts a site into a sorted multiset.
pub fn ms_insert(eta: &[u8], site: u8) -> Multiset {
    let mut out = Vec::with_capacity(eta.len() + 1);
    let pos = eta.partition_point(|&s| s <= site);
    out.extend_from_slice(&eta[..pos]);
    out.push(site);
    out.extend_from_slice(&eta[pos..]);
    out
}

/// Removes one occurrence of a site (which must be present).
pub fn ms_remove(eta: &[u8], site: u8) -> Multiset {
    let pos = eta.iter().position(|&s| s == site).expect("site present");
    let mut out = eta.to_vec();
    out.remove(pos);
    out
}

/// Multiset union (adds multiplicities).
pub fn ms_union(a: &[u8], b: &[u8]) -> Multiset {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Per-site multiplicities.
pub fn ms_counts(eta: &[u8], m_sites: usize) -> Vec<u32> {
    let mut c = vec![0u32; m_sites];
    for &s in eta {
        c[s as usize] += 1;
    }
    c
}

/// Whether the multiset is simple (no repeated site).
pub fn ms_simple(eta: &[u8]) -> bool {
    eta.windows(2).all(|w| w[0] != w[1])
}

/// A real-valued symmetric function on multisets up to the space cap.
#[derive(Debug, Clone)]
pub struct Gamma0Function {
    pub space: Arc<MultisetSpace>,
    pub values: Vec<f64>,
}

impl Gamma0Function {
    pub fn zeros(space: Arc<MultisetSpace>) -> Self {
        let n = space.len();
        Self {
            space,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn<F: FnMut(&[u8]) -> f64>(space: Arc<MultisetSpace>, mut f: F) -> Self {
        let values = space.states().iter().map(|s| f(s)).collect();
        Self { space, values }
    }

    pub fn value(&self, eta: &[u8]) -> f64 {
        match self.space.index_of(eta) {
            Some(i) => self.values[i],
            None => 0.0,
        }
    }

    /// Value with an explicit overflow error when `eta` exceeds the cap.
    pub fn value_checked(&self, eta: &[u8]) -> Result<f64, Gamma0Error> {
        if eta.len() > self.space.n_max {
            return Err(Gamma0Error::TruncationOverflow {
                needed: eta.len(),
                cap: self.space.n_max,
            });
        }
        Ok(self.value(eta))
    }
}

/// Discrete Lebesgue-Poisson sum of `G` up to size `n_cap`:
/// `G(∅) + Σ_n (1/n!) Σ_{(x_1..x_n)} G(x_1..x_n)` over ordered tuples.
pub fn lp_sum(g: &Gamma0Function, n_cap: usize) -> Result<f64, Gamma0Error> {
    if n_cap > g.space.n_max {
        return Err(Gamma0Error::TruncationOverflow {
            needed: n_cap,
            cap: g.space.n_max,
        });
    }
    let mut total = 0.0;
    for (i, eta) in g.space.states().iter().enumerate() {
        if eta.len() <= n_cap {
            total += lp_weight(eta) * g.values[i];
        }
    }
    Ok(total)
}

/// The λ-weighted pairing `<<G, k>> = Σ_η w(η) G(η) k(η)` up to `n_cap`.
pub fn pairing(g: &Gamma0Function, k: &Gamma0Function, n_cap: usize) -> Result<f64, Gamma0Error> {
    if g.space.m_sites != k.space.m_sites {
        return Err(Gamma0Error::SpaceMismatch);
    }
    if n_cap > g.space.n_max || n_cap > k.space.n_max {
        return Err(Gamma0Error::TruncationOverflow {
            needed: n_cap,
            cap: g.space.n_max.min(k.space.n_max),
        });
    }
    let mut total = 0.0;
    for (i, eta) in g.space.states().iter().enumerate() {
        if eta.len() <= n_cap {
            total += lp_weight(eta) * g.values[i] * k.value(eta);
        }
    }
    Ok(total)
}

/// K-transform at a *simple* configuration: `(KG)(γ) = Σ_{η ⊆ γ} G(η)` over
/// all `2^|γ|` subsets.
pub fn k_transform(g: &Gamma0Function, gamma: &[u8]) -> f64 {
    assert!(ms_simple(gamma), "K-transform input must be simple");
    let n = gamma.len();
    let mut total = 0.0;
    let mut subset: Multiset = Vec::with_capacity(n);
    for mask in 0u32..(1 << n) {
        subset.clear();
        for (b, &site) in gamma.iter().enumerate() {
            if mask & (1 << b) != 0 {
                subset.push(site);
            }
        }
        total += g.value(&subset);
    }
    total
}

/// Correlation function from a density: `k(η) = Σ_ξ w(ξ) R(η ⊎ ξ)`, the
/// discrete analog of integrating the density over added configurations.
/// `k(∅)` is the total mass of `R`.
pub fn correlation_from_density(r: &Gamma0Function) -> Gamma0Function {
    let space = r.space.clone();
    let mut out = Gamma0Function::zeros(space.clone());
    for (i, eta) in space.states().iter().enumerate() {
        let mut total = 0.0;
        for xi in space.states() {
            if eta.len() + xi.len() > space.n_max {
                continue;
            }
            total += lp_weight(xi) * r.value(&ms_union(eta, xi));
        }
        out.values[i] = total;
    }
    out
}

/// Möbius inverse of [`correlation_from_density`]:
/// `R(η) = Σ_ξ (-1)^{|ξ|} w(ξ) k(η ⊎ ξ)`. The round trip is the identity.
pub fn density_from_correlation(k: &Gamma0Function) -> Gamma0Function {
    let space = k.space.clone();
    let mut out = Gamma0Function::zeros(space.clone());
    for (i, eta) in space.states().iter().enumerate() {
        let mut total = 0.0;
        for xi in space.states() {
            if eta.len() + xi.len() > space.n_max {
                continue;
            }
            let sign = if xi.len() % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * lp_weight(xi) * k.value(&ms_union(eta, xi));
        }
        out.values[i] = total;
    }
    out
}

/// Discrete model ingredients: symmetric competition matrix, mortality
/// vector, and per-parent fission matrices `b_x(j,k)` (symmetric in `(j,k)`)
/// with row masses `Σ_{j,k} b_x(j,k)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteSpace {
    pub m_sites: usize,
    /// `a[x][y]`, flattened row-major, symmetric, nonnegative.
    pub competition: Vec<f64>,
    pub mortality: Vec<f64>,
    /// `b[x][j][k]`, flattened as `x * M² + j * M + k`.
    pub fission: Vec<f64>,
}

impl DiscreteSpace {
    pub fn new(
        m_sites: usize,
        competition: Vec<f64>,
        mortality: Vec<f64>,
        fission: Vec<f64>,
    ) -> Self {
        assert_eq!(competition.len(), m_sites * m_sites);
        assert_eq!(mortality.len(), m_sites);
        assert_eq!(fission.len(), m_sites * m_sites * m_sites);
        let s = Self {
            m_sites,
            competition,
            mortality,
            fission,
        };
        for x in 0..m_sites {
            for y in 0..m_sites {
                assert!(
                    (s.a(x, y) - s.a(y, x)).abs() < 1e-14,
                    "competition matrix must be symmetric"
                );
                assert!(s.a(x, y) >= 0.0);
                for z in 0..m_sites {
                    assert!(
                        (s.b(x, y, z) - s.b(x, z, y)).abs() < 1e-14,
                        "fission must be symmetric in the offspring"
                    );
                    assert!(s.b(x, y, z) >= 0.0);
                }
            }
        }
        s
    }

    pub fn a(&self, x: usize, y: usize) -> f64 {
        self.competition[x * self.m_sites + y]
    }

    pub fn m(&self, x: usize) -> f64 {
        self.mortality[x]
    }

    pub fn b(&self, x: usize, j: usize, k: usize) -> f64 {
        self.fission[(x * self.m_sites + j) * self.m_sites + k]
    }

    /// `<b>_x = Σ_{j,k} b_x(j,k)` over ordered offspring pairs.
    pub fn b_mass(&self, x: usize) -> f64 {
        let m = self.m_sites;
        (0..m)
            .flat_map(|j| (0..m).map(move |k| (j, k)))
            .map(|(j, k)| self.b(x, j, k))
            .sum()
    }

    /// `β(j,k) = Σ_x b_x(j,k)` — the discrete sibling displacement profile.
    pub fn beta(&self, j: usize, k: usize) -> f64 {
        (0..self.m_sites).map(|x| self.b(x, j, k)).sum()
    }

    /// Competition load on a particle at site `x` from the multiset `eta`
    /// (which does not contain the particle itself).
    pub fn e_a(&self, x: usize, eta: &[u8]) -> f64 {
        eta.iter().map(|&y| self.a(x, y as usize)).sum()
    }

    /// `E_a(η) = Σ_{x∈η} E_a(x, η\x)` over occurrences.
    pub fn e_a_total(&self, eta: &[u8]) -> f64 {
        let mut total = 0.0;
        for (i, &x) in eta.iter().enumerate() {
            for (j, &y) in eta.iter().enumerate() {
                if i != j {
                    total += self.a(x as usize, y as usize);
                }
            }
        }
        total
    }

    /// `E_b(η) = Σ_{x∈η} Σ_{y∈η\x} β(x,y)`.
    pub fn e_b_total(&self, eta: &[u8]) -> f64 {
        let mut total = 0.0;
        for (i, &x) in eta.iter().enumerate() {
            for (j, &y) in eta.iter().enumerate() {
                if i != j {
                    total += self.beta(x as usize, y as usize);
                }
            }
        }
        total
    }

    /// `M(η)`.
    pub fn m_total(&self, eta: &[u8]) -> f64 {
        eta.iter().map(|&x| self.m(x as usize)).sum()
    }

    /// Total event rate `Ψ(η) = M(η) + E_a(η) + Σ_{x∈η} <b>_x`.
    pub fn psi(&self, eta: &[u8]) -> f64 {
        self.m_total(eta)
            + self.e_a_total(eta)
            + eta.iter().map(|&x| self.b_mass(x as usize)).sum::<f64>()
    }
}

/// The generator on observables:
/// `(LF)(γ) = Σ_x (m + E_a)[F(γ\x) - F(γ)] + Σ_x Σ_{j,k} b_x(j,k)[F(γ\x ⊎ {j,k}) - F(γ)]`.
///
/// Output is defined up to `out_cap`; the input must reach `out_cap + 1`
/// (fission grows the configuration).
pub fn apply_generator(
    d: &DiscreteSpace,
    f: &Gamma0Function,
    out_cap: usize,
) -> Result<Gamma0Function, Gamma0Error> {
    if f.space.n_max < out_cap + 1 {
        return Err(Gamma0Error::TruncationOverflow {
            needed: out_cap + 1,
            cap: f.space.n_max,
        });
    }
    let space = f.space.clone();
    let m = d.m_sites;
    let mut out = Gamma0Function::zeros(space.clone());
    for (i, eta) in space.states().iter().enumerate() {
        if eta.len() > out_cap {
            continue;
        }
        let f_eta = f.values[i];
        let mut acc = 0.0;
        let counts = ms_counts(eta, m);
        for (x, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let removed = ms_remove(eta, x as u8);
            let death_rate = c as f64 * (d.m(x) + d.e_a(x, &removed));
            acc += death_rate * (f.value(&removed) - f_eta);
            for j in 0..m {
                for k in 0..m {
                    let rate = c as f64 * d.b(x, j, k);
                    if rate == 0.0 {
                        continue;
                    }
                    let target = ms_insert(&ms_insert(&removed, j as u8), k as u8);
                    acc += rate * (f.value(&target) - f_eta);
                }
            }
        }
        out.values[i] = acc;
    }
    Ok(out)
}

/// The forward (Fokker-Planck) action on point weights over multisets:
/// `(L*μ)(η) = -Ψ(η)μ(η) + Σ_ξ Ξ(η|ξ) μ(ξ)`, with the kernel pushing death
/// and fission flows out of each source. Adjoint to [`apply_generator`]
/// under the plain sum `Σ_η F(η) μ(η)`, exactly.
///
/// Fission out of a multiset of size `n` lands at size `n + 1`, so the
/// support of `μ` must stay one level below `out_cap`.
pub fn apply_fokker_planck(
    d: &DiscreteSpace,
    mu: &Gamma0Function,
    out_cap: usize,
) -> Result<Gamma0Function, Gamma0Error> {
    let support_max = mu
        .space
        .states()
        .iter()
        .zip(&mu.values)
        .filter(|(_, v)| **v != 0.0)
        .map(|(s, _)| s.len())
        .max()
        .unwrap_or(0);
    if out_cap < support_max + 1 || mu.space.n_max < out_cap {
        return Err(Gamma0Error::TruncationOverflow {
            needed: support_max + 1,
            cap: out_cap.min(mu.space.n_max),
        });
    }
    let space = mu.space.clone();
    let m = d.m_sites;
    let mut out = Gamma0Function::zeros(space.clone());
    for (i, xi) in space.states().iter().enumerate() {
        let w = mu.values[i];
        if w == 0.0 {
            continue;
        }
        out.values[i] -= d.psi(xi) * w;
        let counts = ms_counts(xi, m);
        for (x, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let removed = ms_remove(xi, x as u8);
            let death_rate = c as f64 * (d.m(x) + d.e_a(x, &removed));
            if death_rate != 0.0 {
                let idx = space.index_of(&removed).expect("smaller multiset indexed");
                out.values[idx] += death_rate * w;
            }
            for j in 0..m {
                for k in 0..m {
                    let rate = c as f64 * d.b(x, j, k);
                    if rate == 0.0 {
                        continue;
                    }
                    let target = ms_insert(&ms_insert(&removed, j as u8), k as u8);
                    let idx =
                        space
                            .index_of(&target)
                            .ok_or(Gamma0Error::TruncationOverflow {
                                needed: target.len(),
                                cap: space.n_max,
                            })?;
                    out.values[idx] += rate * w;
                }
            }
        }
    }
    Ok(out)
}

/// The correlation-function evolution operator, in its four-term form:
///
/// ```text
/// (A1 k)(η) = -Ψ(η) k(η)
/// (A2 k)(η) = Σ_x Σ_{y1 ≠ y2 ∈ η} b_x(y1,y2) k(η ⊎ x \ {y1,y2})
/// (B1 k)(η) = -Σ_x E_a(x, η) k(η ⊎ x)
/// (B2 k)(η) = 2 Σ_x Σ_{y2} Σ_{y1 ∈ η} b_x(y1,y2) k(η ⊎ x \ y1)
/// ```
///
/// The input must reach `out_cap + 1`. `(L^Δ k)(∅) = 0` for every `k`.
pub fn apply_l_delta(
    d: &DiscreteSpace,
    k: &Gamma0Function,
    out_cap: usize,
) -> Result<Gamma0Function, Gamma0Error> {
    if k.space.n_max < out_cap + 1 {
        return Err(Gamma0Error::TruncationOverflow {
            needed: out_cap + 1,
            cap: k.space.n_max,
        });
    }
    let space = k.space.clone();
    let m = d.m_sites;
    let mut out = Gamma0Function::zeros(space.clone());
    for (i, eta) in space.states().iter().enumerate() {
        if eta.len() > out_cap {
            continue;
        }
        let counts = ms_counts(eta, m);
        let mut acc = -d.psi(eta) * k.values[i];

        // A2: replace an ordered pair of occupants by a new parent site.
        for (y1, &c1) in counts.iter().enumerate() {
            if c1 == 0 {
                continue;
            }
            let minus_y1 = ms_remove(eta, y1 as u8);
            let inner = ms_counts(&minus_y1, m);
            for (y2, &c2) in inner.iter().enumerate() {
                if c2 == 0 {
                    continue;
                }
                let pair_count = (c1 * c2) as f64;
                let reduced = ms_remove(&minus_y1, y2 as u8);
                for x in 0..m {
                    let rate = d.b(x, y1, y2);
                    if rate != 0.0 {
                        acc += pair_count * rate * k.value(&ms_insert(&reduced, x as u8));
                    }
                }
            }
        }

        // B1: competition against an added particle.
        for x in 0..m {
            let load = d.e_a(x, eta);
            if load != 0.0 {
                acc -= load * k.value(&ms_insert(eta, x as u8));
            }
        }

        // B2: one occupant replaced by the parent, the sibling integrated out.
        for (y1, &c1) in counts.iter().enumerate() {
            if c1 == 0 {
                continue;
            }
            let swapped_base = ms_remove(eta, y1 as u8);
            for x in 0..m {
                let b_row: f64 = (0..m).map(|y2| d.b(x, y1, y2)).sum();
                if b_row != 0.0 {
                    acc += 2.0 * c1 as f64 * b_row * k.value(&ms_insert(&swapped_base, x as u8));
                }
            }
        }

        out.values[i] = acc;
    }
    Ok(out)
}

/// Zeroes a density outside `Γ_Λ` (multisets supported on the flagged sites)
/// and above size `n_keep`, and returns the truncation together with its
/// correlation function.
pub fn local_truncation(
    r: &Gamma0Function,
    lambda_sites: &[bool],
    n_keep: usize,
) -> (Gamma0Function, Gamma0Function) {
    let space = r.space.clone();
    let mut truncated = Gamma0Function::zeros(space.clone());
    for (i, eta) in space.states().iter().enumerate() {
        let inside = eta.iter().all(|&s| lambda_sites[s as usize]);
        if inside && eta.len() <= n_keep {
            truncated.values[i] = r.values[i];
        }
    }
    let q0 = correlation_from_density(&truncated);
    (truncated, q0)
}

/// The scale norm `‖k‖_α = max_η e^{-α|η|} |k(η)|` over represented
/// multisets.
pub fn k_alpha_norm(k: &Gamma0Function, alpha: f64) -> f64 {
    k.space
        .states()
        .iter()
        .zip(&k.values)
        .map(|(eta, v)| (-alpha * eta.len() as f64).exp() * v.abs())
        .fold(0.0, f64::max)
}

/// `e(θ; η) = ∏_{x∈η} θ(x)` with multiplicity.
pub fn e_theta(theta: &[f64], eta: &[u8]) -> f64 {
    eta.iter().map(|&s| theta[s as usize]).product()
}

/// `F^θ(γ) = ∏_{x∈γ} (1 + θ(x))` with multiplicity.
pub fn f_theta(theta: &[f64], eta: &[u8]) -> f64 {
    eta.iter().map(|&s| 1.0 + theta[s as usize]).product()
}
