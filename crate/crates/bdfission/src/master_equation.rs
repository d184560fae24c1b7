//! Finite-system Fokker-Planck evolution as a truncated continuous-time
//! Markov chain over discrete configurations.
//!
//! States are the multisets of size `<= N_max` over `M` sites plus one
//! absorbing overflow sink; fission out of a size-`N_max` state routes to the
//! sink, which keeps every generator column summing to zero exactly (the
//! semigroup stays stochastic) at the price of a reported truncation leak.
//! Integration is fixed-step RK4 on `Ṗ = QP`; a dense matrix-exponential
//! oracle backs the tests for small instances, and a direct-method stochastic
//! simulation of the same chain supports the simulator/master cross-checks.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gamma0::{ms_insert, ms_remove, DiscreteSpace, MultisetSpace};
use crate::rng::replica_stream;
use crate::stats::KahanSum;

#[derive(Debug, Error, PartialEq)]
pub enum MasterError {
    #[error("state space would exceed {0} states")]
    SizeOverflow(usize),
    #[error("step dt·max|Q_ii| = {0} exceeds 0.5")]
    StepTooLarge(f64),
}

const MAX_STATES: usize = 1_000_000;

/// Enumerated multisets plus the absorbing sink (the last index).
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub space: Arc<MultisetSpace>,
    pub n_states: usize,
}

impl StateSpace {
    pub fn sink(&self) -> usize {
        self.n_states - 1
    }

    pub fn size_of(&self, idx: usize) -> Option<usize> {
        if idx == self.sink() {
            None
        } else {
            Some(self.space.state(idx).len())
        }
    }
}

/// Enumerates all multisets of size `0..=n_max` over `m_sites` sites plus the
/// sink. The count is `Σ_n C(M+n-1, n) + 1`.
pub fn enumerate_states(m_sites: usize, n_max: usize) -> Result<StateSpace, MasterError> {
    // Stars-and-bars count, checked before materializing.
    let mut count: usize = 0;
    let mut level: f64 = 1.0;
    for n in 0..=n_max {
        if n > 0 {
            level *= (m_sites + n - 1) as f64 / n as f64;
        }
        count += level.round() as usize;
        if count > MAX_STATES {
            return Err(MasterError::SizeOverflow(MAX_STATES));
        }
    }
    let space = MultisetSpace::new(m_sites, n_max);
    debug_assert_eq!(space.len(), count);
    Ok(StateSpace {
        n_states: space.len() + 1,
        space,
    })
}

/// Sparse column-stochastic rate matrix: `Q[i][j]` is the flow `j -> i`,
/// columns sum to zero exactly.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub n: usize,
    /// Per source column: list of (target, rate), diagonal excluded.
    pub columns: Vec<Vec<(usize, f64)>>,
    /// Diagonal entries (= -column off-diagonal sum).
    pub diagonal: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn max_exit_rate(&self) -> f64 {
        self.diagonal.iter().map(|d| -d).fold(0.0, f64::max)
    }

    /// `y = Q p`.
    pub fn apply(&self, p: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (j, col) in self.columns.iter().enumerate() {
            let pj = p[j];
            if pj == 0.0 {
                continue;
            }
            y[j] += self.diagonal[j] * pj;
            for &(i, rate) in col {
                y[i] += rate * pj;
            }
        }
    }

    /// Exact column sums (diagonal included); all zero for a stochastic
    /// generator.
    pub fn column_sums(&self) -> Vec<f64> {
        self.columns
            .iter()
            .zip(&self.diagonal)
            .map(|(col, d)| {
                let mut s = KahanSum::new();
                s.add(*d);
                for &(_, r) in col {
                    s.add(r);
                }
                s.value()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut q = vec![0.0; n * n];
        for (j, col) in self.columns.iter().enumerate() {
            q[j * n + j] = self.diagonal[j];
            for &(i, r) in col {
                q[i * n + j] += r;
            }
        }
        q
    }
}

/// Builds the truncated generator: death `η -> η\x` at rate
/// `m(x) + E_a(x, η\x)` per occurrence, fission `η -> η\x ⊎ {j,k}` at the
/// offspring-pair rates (row mass `<b>_x` per occurrence), overflow mass to
/// the sink.
pub fn build_generator(d: &DiscreteSpace, ss: &StateSpace) -> GeneratorMatrix {
    let n = ss.n_states;
    let sink = ss.sink();
    let m = d.m_sites;
    let mut columns = vec![Vec::new(); n];
    let mut diagonal = vec![0.0; n];
    for (idx, eta) in ss.space.states().iter().enumerate() {
        let mut out_total = KahanSum::new();
        let counts = crate::gamma0::ms_counts(eta, m);
        let mut col = Vec::new();
        for (x, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let removed = ms_remove(eta, x as u8);
            let death = c as f64 * (d.m(x) + d.e_a(x, &removed));
            if death > 0.0 {
                let target = ss.space.index_of(&removed).expect("indexed");
                col.push((target, death));
                out_total.add(death);
            }
            // Unordered offspring pairs: rate 2 b_x(j,k) for j<k, b_x(j,j)
            // on the diagonal; totals match the ordered double sum <b>_x.
            for j in 0..m {
                for k in j..m {
                    let rate = if j == k {
                        c as f64 * d.b(x, j, k)
                    } else {
                        2.0 * c as f64 * d.b(x, j, k)
                    };
                    if rate == 0.0 {
                        continue;
                    }
                    let grown = ms_insert(&ms_insert(&removed, j as u8), k as u8);
                    let target = ss.space.index_of(&grown).unwrap_or(sink);
                    col.push((target, rate));
                    out_total.add(rate);
                }
            }
        }
        // Merge duplicate targets (several channels can land on one state).
        col.sort_by_key(|(t, _)| *t);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
        for (t, r) in col {
            match merged.last_mut() {
                Some((lt, lr)) if *lt == t => *lr += r,
                _ => merged.push((t, r)),
            }
        }
        columns[idx] = merged;
        diagonal[idx] = -out_total.value();
    }
    GeneratorMatrix {
        n,
        columns,
        diagonal,
    }
}

/// Probability weights over the truncated states plus the sink.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionVector {
    pub time: f64,
    pub probabilities: Vec<f64>,
    /// Total negative mass clipped to zero so far (audit trail).
    pub clipped: f64,
}

impl DistributionVector {
    pub fn point_mass(ss: &StateSpace, eta: &[u8]) -> Self {
        let mut p = vec![0.0; ss.n_states];
        let idx = ss.space.index_of(eta).expect("state inside truncation");
        p[idx] = 1.0;
        Self {
            time: 0.0,
            probabilities: p,
            clipped: 0.0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        let mut s = KahanSum::new();
        for p in &self.probabilities {
            s.add(*p);
        }
        s.value()
    }

    pub fn sink_mass(&self, ss: &StateSpace) -> f64 {
        self.probabilities[ss.sink()]
    }

    /// Marginal law of the population size `N` (sink excluded).
    pub fn population_marginal(&self, ss: &StateSpace) -> Vec<f64> {
        let n_max = ss.space.n_max;
        let mut out = vec![0.0; n_max + 1];
        for (i, p) in self.probabilities.iter().enumerate() {
            if let Some(sz) = ss.size_of(i) {
                out[sz] += p;
            }
        }
        out
    }
}

/// Fourth-order fixed-step integration of `Ṗ = QP` to time `t`. The step
/// must satisfy `dt · max|Q_ii| <= 0.5`; entries are clipped at `-1e-12`
/// with an audit, and total mass is conserved to the reported tolerance.
pub fn evolve(
    p0: &DistributionVector,
    q: &GeneratorMatrix,
    t: f64,
    dt: f64,
) -> Result<DistributionVector, MasterError> {
    assert!(t >= 0.0 && dt > 0.0);
    let stiffness = dt * q.max_exit_rate();
    if stiffness > 0.5 {
        return Err(MasterError::StepTooLarge(stiffness));
    }
    let n = q.n;
    let mut p = p0.probabilities.clone();
    let mut clipped = p0.clipped;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    let steps = (t / dt).ceil() as u64;
    let mut remaining = t;
    for _ in 0..steps {
        let h = dt.min(remaining);
        remaining -= h;
        q.apply(&p, &mut k1);
        for i in 0..n {
            tmp[i] = p[i] + 0.5 * h * k1[i];
        }
        q.apply(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = p[i] + 0.5 * h * k2[i];
        }
        q.apply(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = p[i] + h * k3[i];
        }
        q.apply(&tmp, &mut k4);
        for i in 0..n {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for v in p.iter_mut() {
            if *v < 0.0 {
                debug_assert!(*v > -1e-12, "negative probability {v}");
                clipped -= *v;
                *v = 0.0;
            }
        }
    }
    Ok(DistributionVector {
        time: p0.time + t,
        probabilities: p,
        clipped,
    })
}

/// Default RK4 step for a generator: `0.1 / max|Q_ii|`.
pub fn default_step(q: &GeneratorMatrix) -> f64 {
    let m = q.max_exit_rate();
    if m > 0.0 {
        0.1 / m
    } else {
        0.1
    }
}

/// Moments `Σ_η χ_m(|η|) P(η)` for `χ_m(n) = (1+n)^m`, `m = 1..m_max`; the
/// sink is excluded and its mass reported separately.
pub fn moments(p: &DistributionVector, ss: &StateSpace, m_max: usize) -> (Vec<f64>, f64) {
    let mut out = vec![0.0; m_max];
    for (i, prob) in p.probabilities.iter().enumerate() {
        if let Some(sz) = ss.size_of(i) {
            for (m, slot) in out.iter_mut().enumerate() {
                *slot += (1.0 + sz as f64).powi(m as i32 + 1) * prob;
            }
        }
    }
    (out, p.sink_mass(ss))
}

/// Exponential moment `Σ_η e^{κ|η|} P(η)`, sink excluded.
pub fn exp_moment(p: &DistributionVector, ss: &StateSpace, kappa: f64) -> f64 {
    p.probabilities
        .iter()
        .enumerate()
        .filter_map(|(i, prob)| ss.size_of(i).map(|sz| (kappa * sz as f64).exp() * prob))
        .sum()
}

/// Mean population `Σ_η |η| P(η)`, sink excluded.
pub fn mean_population(p: &DistributionVector, ss: &StateSpace) -> f64 {
    p.probabilities
        .iter()
        .enumerate()
        .filter_map(|(i, prob)| ss.size_of(i).map(|sz| sz as f64 * prob))
        .sum()
}

/// Dense matrix exponential by scaling-and-squaring with a Taylor core;
/// test-oracle path for systems up to ~500 states.
pub fn expm_dense(q: &GeneratorMatrix, t: f64) -> Vec<f64> {
    let n = q.n;
    assert!(n <= 512, "dense exponential limited to small instances");
    let mut a = q.to_dense();
    for v in a.iter_mut() {
        *v *= t;
    }
    // Scale so the 1-norm is below 0.5, exponentiate, square back.
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    while norm1 / 2f64.powi(squarings as i32) > 0.5 {
        squarings += 1;
    }
    let scale = 2f64.powi(-(squarings as i32));
    for v in a.iter_mut() {
        *v *= scale;
    }
    // Taylor series to machine precision at ||A|| <= 0.5.
    let mut result = vec![0.0; n * n];
    for i in 0..n {
        result[i * n + i] = 1.0;
    }
    let mut term = result.clone();
    for k in 1..=24 {
        term = mat_mul(&term, &a, n);
        for v in term.iter_mut() {
            *v /= k as f64;
        }
        for (r, u) in result.iter_mut().zip(&term) {
            *r += u;
        }
    }
    for _ in 0..squarings {
        result = mat_mul(&result, &result, n);
    }
    result
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// Applies a dense propagator to a distribution.
pub fn apply_dense(p: &[f64], e: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..n {
        let row = &e[i * n..(i + 1) * n];
        out[i] = row.iter().zip(p).map(|(a, b)| a * b).sum();
    }
    out
}

/// Direct-method stochastic simulation of the same discrete chain (sites as
/// positions, matrix kernels), for simulator/master cross-checks. Returns
/// the population at `t_end`. No size cap: the walk is exact.
pub fn discrete_ssa(
    d: &DiscreteSpace,
    initial: &[u8],
    t_end: f64,
    seed: u64,
    guard: usize,
) -> usize {
    let mut rng = replica_stream(seed, 0);
    let m = d.m_sites;
    // State as per-site counts.
    let mut counts = vec![0u32; m];
    for &s in initial {
        counts[s as usize] += 1;
    }
    let mut t = 0.0;
    loop {
        let n_total: u32 = counts.iter().sum();
        if n_total == 0 || n_total as usize >= guard {
            return n_total as usize;
        }
        // Per-site death and fission rates.
        let mut total = 0.0;
        let mut death = vec![0.0; m];
        let mut fission = vec![0.0; m];
        for x in 0..m {
            let c = counts[x] as f64;
            if c == 0.0 {
                continue;
            }
            // E_a of one occupant at x against the rest.
            let mut load = 0.0;
            for y in 0..m {
                let others = if x == y {
                    counts[y] as f64 - 1.0
                } else {
                    counts[y] as f64
                };
                load += others * d.a(x, y);
            }
            death[x] = c * (d.m(x) + load);
            fission[x] = c * d.b_mass(x);
            total += death[x] + fission[x];
        }
        if total <= 0.0 {
            return n_total as usize;
        }
        let mut u = rng.random::<f64>();
        if u == 0.0 {
            u = f64::MIN_POSITIVE;
        }
        t -= u.ln() / total;
        if t > t_end {
            return n_total as usize;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut done = false;
        for x in 0..m {
            if pick < death[x] {
                counts[x] -= 1;
                done = true;
                break;
            }
            pick -= death[x];
            if pick < fission[x] {
                // Offspring pair proportional to b_x(j,k) over ordered pairs.
                let mut v = rng.random::<f64>() * d.b_mass(x);
                'outer: for j in 0..m {
                    for k in 0..m {
                        v -= d.b(x, j, k);
                        if v < 0.0 {
                            counts[x] -= 1;
                            counts[j] += 1;
                            counts[k] += 1;
                            break 'outer;
                        }
                    }
                }
                done = true;
                break;
            }
            pick -= fission[x];
        }
        debug_assert!(done, "event selection fell through");
    }
}
