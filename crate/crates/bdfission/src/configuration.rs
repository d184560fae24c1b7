//! Finite point configurations on a periodic window with an incremental
//! cache of per-particle and aggregate event rates.
//!
//! The cache tracks, for every particle, `m(x)` and the competition load
//! `E_a(x, γ\x) = Σ_y a(x-y)`, plus the aggregates `M(γ)`, `E_a(γ)`, the
//! total fission mass `<b>|γ|` and the grand total `Ψ(γ)` — the total event
//! rate out of γ. Totals use Kahan-compensated accumulation and are rebuilt
//! from scratch every `REBUILD_PERIOD` mutations to bound drift.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Position};
use crate::kernels::ModelParams;
use crate::stats::KahanSum;

const REBUILD_PERIOD: u64 = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("point lies outside the window")]
    OutOfWindow,
    #[error("no particle with index {0}")]
    BadIndex(usize),
    #[error("cell size {cell} does not divide window side {side} into an integer grid")]
    BadCellGrid { cell: f64, side: f64 },
}

/// Periodic cubic window `[0, L)^d` with a cell grid for neighbor search.
///
/// The cell size must be at least the competition cutoff so that all
/// interacting pairs sit in adjacent cells; minimum-image distances are used
/// throughout.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TorusWindow {
    pub side: f64,
    pub dim: usize,
    pub cells_per_axis: usize,
}

impl TorusWindow {
    /// Builds a window whose cell size is the largest divisor of `side` that
    /// is `>= min_cell` (at least one cell per axis).
    pub fn new(side: f64, dim: usize, min_cell: f64) -> Result<Self, ConfigError> {
        if side <= 0.0 || !(1..=3).contains(&dim) {
            return Err(ConfigError::BadCellGrid {
                cell: min_cell,
                side,
            });
        }
        let mut cells = if min_cell <= 0.0 {
            8
        } else {
            (side / min_cell).floor() as usize
        };
        cells = cells.clamp(1, 64);
        Ok(Self {
            side,
            dim,
            cells_per_axis: cells,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.side / self.cells_per_axis as f64
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn contains(&self, p: &Position) -> bool {
        p[..self.dim].iter().all(|c| *c >= 0.0 && *c < self.side)
    }

    /// Wraps a point of `R^d` onto the torus.
    pub fn wrap(&self, p: &Position) -> Position {
        let mut out = geometry::zero_position();
        for k in 0..self.dim {
            out[k] = p[k].rem_euclid(self.side);
            if out[k] >= self.side {
                out[k] = 0.0;
            }
        }
        out
    }

    /// Minimum-image distance.
    pub fn distance(&self, a: &Position, b: &Position) -> f64 {
        let mut s = 0.0;
        for k in 0..self.dim {
            let mut d = (a[k] - b[k]).abs();
            if d > 0.5 * self.side {
                d = self.side - d;
            }
            s += d * d;
        }
        s.sqrt()
    }

    fn cell_of(&self, p: &Position) -> usize {
        let n = self.cells_per_axis;
        let mut idx = 0usize;
        for k in 0..self.dim {
            let mut c = (p[k] / self.side * n as f64) as usize;
            if c >= n {
                c = n - 1;
            }
            idx = idx * n + c;
        }
        idx
    }

    fn n_cells(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    /// Distinct cell indices of the 3^d neighborhood around `cell`
    /// (periodic; deduplicated when the grid is narrow).
    fn neighbor_cells(&self, cell: usize) -> Vec<usize> {
        let n = self.cells_per_axis as isize;
        let mut coords = [0isize; 3];
        let mut rest = cell;
        for k in (0..self.dim).rev() {
            coords[k] = (rest % self.cells_per_axis) as isize;
            rest /= self.cells_per_axis;
        }
        let offsets: &[isize] = if n == 1 {
            &[0]
        } else if n == 2 {
            &[0, 1]
        } else {
            &[-1, 0, 1]
        };
        // Cartesian product over per-axis offsets.
        let mut out = vec![0usize];
        for k in 0..self.dim {
            let mut next = Vec::with_capacity(out.len() * offsets.len());
            for idx in &out {
                for off in offsets {
                    let c = (coords[k] + off).rem_euclid(n) as usize;
                    next.push(idx * self.cells_per_axis + c);
                }
            }
            out = next;
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Aggregate energies of a configuration: `(E_a, E_b, M, Ψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    pub competition: f64,
    pub dispersal: f64,
    pub mortality: f64,
    pub total_rate: f64,
}

/// A finite particle configuration with incremental rate bookkeeping.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub window: TorusWindow,
    params: Arc<ModelParams>,
    positions: Vec<Position>,
    /// m(x) per particle.
    mortality: Vec<f64>,
    /// E_a(x, γ\x) per particle.
    competition: Vec<f64>,
    /// cell id per particle.
    cell_of: Vec<usize>,
    cells: Vec<Vec<usize>>,
    m_total: KahanSum,
    comp_total: KahanSum,
    mutations: u64,
    /// Largest relative drift observed between incremental and rebuilt totals.
    pub max_observed_drift: f64,
}

impl Configuration {
    pub fn new(window: TorusWindow, params: Arc<ModelParams>) -> Self {
        let n_cells = window.n_cells();
        Self {
            window,
            params,
            positions: Vec::new(),
            mortality: Vec::new(),
            competition: Vec::new(),
            cell_of: Vec::new(),
            cells: vec![Vec::new(); n_cells],
            m_total: KahanSum::new(),
            comp_total: KahanSum::new(),
            mutations: 0,
            max_observed_drift: 0.0,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> &Position {
        &self.positions[i]
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    /// Death-rate components of particle `i`: `(m(x), E_a(x, γ\x))`.
    pub fn death_components(&self, i: usize) -> (f64, f64) {
        (self.mortality[i], self.competition[i].max(0.0))
    }

    /// `M(γ)` — total independent mortality.
    pub fn mortality_total(&self) -> f64 {
        self.m_total.value()
    }

    /// `E_a(γ)` — total competition.
    pub fn competition_total(&self) -> f64 {
        self.comp_total.value().max(0.0)
    }

    /// `<b>|γ|` — total fission rate.
    pub fn fission_total(&self) -> f64 {
        self.params.total_fission_rate() * self.len() as f64
    }

    /// Grand total event rate `Ψ(γ) = M + E_a + <b>|γ|`.
    pub fn total_rate(&self) -> f64 {
        self.mortality_total() + self.competition_total() + self.fission_total()
    }

    fn neighbors_within_cutoff(&self, x: &Position) -> Vec<(usize, f64)> {
        let cutoff = self.params.competition.cutoff();
        let mut out = Vec::new();
        for cell in self.window.neighbor_cells(self.window.cell_of(x)) {
            for &j in &self.cells[cell] {
                let d = self.window.distance(x, &self.positions[j]);
                if d <= cutoff {
                    out.push((j, d));
                }
            }
        }
        out
    }

    /// Inserts a particle; the cache updates in O(neighbors).
    pub fn insert(&mut self, x: Position) -> Result<usize, ConfigError> {
        if !self.window.contains(&x) {
            return Err(ConfigError::OutOfWindow);
        }
        let a = &self.params.competition;
        let dim = self.params.dimension;
        let mut own_comp = 0.0;
        for (j, d) in self.neighbors_within_cutoff(&x) {
            let v = a.eval_radial(d);
            if v != 0.0 {
                self.competition[j] += v;
                own_comp += v;
                self.comp_total.add(2.0 * v);
            }
        }
        let m = self.params.mortality.eval(&x, dim);
        let cell = self.window.cell_of(&x);
        let idx = self.positions.len();
        self.positions.push(x);
        self.mortality.push(m);
        self.competition.push(own_comp);
        self.cell_of.push(cell);
        self.cells[cell].push(idx);
        self.m_total.add(m);
        self.bump();
        Ok(idx)
    }

    /// Removes particle `i` (O(1) swap-remove; the last particle takes
    /// index `i`).
    pub fn remove(&mut self, i: usize) -> Result<Position, ConfigError> {
        if i >= self.positions.len() {
            return Err(ConfigError::BadIndex(i));
        }
        let x = self.positions[i];
        // Unlink from the cell first so the neighbor scan skips it.
        self.unlink_from_cell(i);
        for (j, d) in self.neighbors_within_cutoff(&x) {
            let v = self.params.competition.eval_radial(d);
            if v != 0.0 {
                self.competition[j] -= v;
                self.comp_total.add(-2.0 * v);
            }
        }
        self.m_total.add(-self.mortality[i]);
        let last = self.positions.len() - 1;
        if i != last {
            // Remap the swapped-in particle inside its cell.
            let cell = self.cell_of[last];
            if let Some(slot) = self.cells[cell].iter_mut().find(|s| **s == last) {
                *slot = i;
            }
        }
        self.positions.swap_remove(i);
        self.mortality.swap_remove(i);
        self.competition.swap_remove(i);
        self.cell_of.swap_remove(i);
        self.bump();
        Ok(x)
    }

    fn unlink_from_cell(&mut self, i: usize) {
        let cell = self.cell_of[i];
        if let Some(pos) = self.cells[cell].iter().position(|&j| j == i) {
            self.cells[cell].swap_remove(pos);
        }
    }

    fn bump(&mut self) {
        self.mutations += 1;
        if self.mutations % REBUILD_PERIOD == 0 {
            self.rebuild();
        }
    }

    /// Full O(n²) recomputation of the cache; records the observed drift.
    pub fn rebuild(&mut self) {
        let before = self.total_rate();
        let a = &self.params.competition;
        let cutoff = a.cutoff();
        let n = self.positions.len();
        let mut comp = vec![0.0; n];
        let mut comp_total = KahanSum::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.window.distance(&self.positions[i], &self.positions[j]);
                if d <= cutoff {
                    let v = a.eval_radial(d);
                    comp[i] += v;
                    comp[j] += v;
                    comp_total.add(2.0 * v);
                }
            }
        }
        let mut m_total = KahanSum::new();
        for m in &self.mortality {
            m_total.add(*m);
        }
        self.competition = comp;
        self.comp_total = comp_total;
        self.m_total = m_total;
        let after = self.total_rate();
        if after > 0.0 {
            let drift = (before - after).abs() / after.max(1.0);
            if drift > self.max_observed_drift {
                self.max_observed_drift = drift;
            }
        }
    }

    /// The four aggregates `(E_a, E_b, M, Ψ)`. `E_b` is a direct double pair
    /// sum of β (not cached; β support may exceed the cell size).
    pub fn energies(&self) -> Energies {
        let dim = self.params.dimension;
        let f = &self.params.fission;
        let n = self.positions.len();
        let mut dispersal = KahanSum::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.window.distance(&self.positions[i], &self.positions[j]);
                dispersal.add(2.0 * f.beta(d, dim));
            }
        }
        Energies {
            competition: self.competition_total(),
            dispersal: dispersal.value(),
            mortality: self.mortality_total(),
            total_rate: self.total_rate(),
        }
    }

    /// Brute-force recomputation of all per-particle competition loads, for
    /// verification.
    pub fn brute_force_competition(&self) -> Vec<f64> {
        let a = &self.params.competition;
        let n = self.positions.len();
        let mut comp = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d = self.window.distance(&self.positions[i], &self.positions[j]);
                    comp[i] += a.eval_radial(d);
                }
            }
        }
        comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{FissionKernel, MortalityField, RadialKernel};
    use rand::Rng;

    fn desk_params() -> Arc<ModelParams> {
        Arc::new(ModelParams::new(
            1,
            MortalityField::Constant { rate: 0.5 },
            RadialKernel::Tophat {
                amplitude: 0.3,
                radius: 1.0,
            },
            FissionKernel::factorized(
                0.8,
                RadialKernel::Gaussian {
                    amplitude: 1.0,
                    scale: 0.3,
                    cutoff: 1.5,
                },
            ),
        ))
    }

    fn window() -> TorusWindow {
        TorusWindow::new(10.0, 1, 1.5).unwrap()
    }

    fn at(x: f64) -> Position {
        [x, 0.0, 0.0]
    }

    #[test]
    fn insert_into_empty_has_no_competition() {
        let mut g = Configuration::new(window(), desk_params());
        g.insert(at(2.0)).unwrap();
        assert_eq!(g.competition_total(), 0.0);
        let expected = 0.5 + 0.8;
        assert!((g.total_rate() - expected).abs() < 1e-12);
    }

    #[test]
    fn second_insert_adds_pair_rate_to_both() {
        let mut g = Configuration::new(window(), desk_params());
        g.insert(at(2.0)).unwrap();
        g.insert(at(2.5)).unwrap();
        // tophat a = 0.3 within radius 1
        assert!((g.death_components(0).1 - 0.3).abs() < 1e-12);
        assert!((g.death_components(1).1 - 0.3).abs() < 1e-12);
        assert!((g.competition_total() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn insert_then_remove_restores_totals() {
        let mut g = Configuration::new(window(), desk_params());
        g.insert(at(1.0)).unwrap();
        g.insert(at(1.4)).unwrap();
        g.insert(at(7.0)).unwrap();
        let before = g.total_rate();
        let idx = g.insert(at(1.2)).unwrap();
        g.remove(idx).unwrap();
        assert!((g.total_rate() - before).abs() <= 1e-12 * before.max(1.0));
    }

    #[test]
    fn remove_only_point_leaves_zero_rate() {
        let mut g = Configuration::new(window(), desk_params());
        let i = g.insert(at(3.0)).unwrap();
        g.remove(i).unwrap();
        assert!(g.is_empty());
        assert!(g.total_rate().abs() < 1e-15);
    }

    #[test]
    fn out_of_window_and_bad_index_are_rejected() {
        let mut g = Configuration::new(window(), desk_params());
        assert_eq!(g.insert(at(-0.1)), Err(ConfigError::OutOfWindow));
        assert_eq!(g.insert(at(10.0)), Err(ConfigError::OutOfWindow));
        assert_eq!(g.remove(0), Err(ConfigError::BadIndex(0)));
    }

    #[test]
    fn random_inserts_match_brute_force() {
        let mut g = Configuration::new(window(), desk_params());
        let mut rng = crate::rng::replica_stream(41, 0);
        for _ in 0..50 {
            g.insert(at(rng.random::<f64>() * 10.0)).unwrap();
        }
        let brute = g.brute_force_competition();
        for i in 0..g.len() {
            let cached = g.death_components(i).1;
            assert!(
                (cached - brute[i]).abs() <= 1e-9 * brute[i].max(1.0),
                "particle {i}: {cached} vs {brute:?}"
            );
        }
        let total: f64 = brute.iter().sum();
        assert!((g.competition_total() - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn random_insert_remove_sequence_matches_brute_force() {
        let mut g = Configuration::new(window(), desk_params());
        let mut rng = crate::rng::replica_stream(43, 0);
        for step in 0..1000 {
            if g.is_empty() || rng.random::<f64>() < 0.6 {
                g.insert(at(rng.random::<f64>() * 10.0)).unwrap();
            } else {
                let i = rng.random_range(0..g.len());
                g.remove(i).unwrap();
            }
            if step % 100 == 99 {
                let brute = g.brute_force_competition();
                let total: f64 = brute.iter().sum();
                assert!(
                    (g.competition_total() - total).abs() <= 1e-9 * total.max(1.0),
                    "step {step}"
                );
            }
        }
    }

    #[test]
    fn energies_on_pairs() {
        let params = desk_params();
        let mut g = Configuration::new(window(), params.clone());
        let e = g.energies();
        assert_eq!((e.competition, e.dispersal, e.mortality), (0.0, 0.0, 0.0));
        g.insert(at(2.0)).unwrap();
        let e = g.energies();
        assert_eq!(e.competition, 0.0);
        assert_eq!(e.dispersal, 0.0);
        g.insert(at(2.4)).unwrap();
        let e = g.energies();
        let u = 0.4;
        assert!((e.competition - 2.0 * 0.3).abs() < 1e-12);
        let beta = params.fission.beta(u, 1);
        assert!((e.dispersal - 2.0 * beta).abs() < 1e-12 * beta.max(1.0));
        assert!((e.total_rate - g.total_rate()).abs() < 1e-12);
    }

    #[test]
    fn poisson_sample_energies_match_brute_force() {
        let params = desk_params();
        let mut g = Configuration::new(window(), params.clone());
        let mut rng = crate::rng::replica_stream(47, 0);
        for _ in 0..100 {
            g.insert(at(rng.random::<f64>() * 10.0)).unwrap();
        }
        let mut ea = 0.0;
        for i in 0..g.len() {
            for j in 0..g.len() {
                if i != j {
                    let d = g.window.distance(g.position(i), g.position(j));
                    ea += params.competition.eval_radial(d);
                }
            }
        }
        let e = g.energies();
        assert!((e.competition - ea).abs() <= 1e-9 * ea.max(1.0));
    }

    #[test]
    fn minimum_image_symmetry_and_bound() {
        let w = window();
        let mut rng = crate::rng::replica_stream(51, 0);
        for _ in 0..200 {
            let a = at(rng.random::<f64>() * 10.0);
            let b = at(rng.random::<f64>() * 10.0);
            let d1 = w.distance(&a, &b);
            let d2 = w.distance(&b, &a);
            assert_eq!(d1, d2);
            assert!(d1 <= w.side * (w.dim as f64).sqrt() / 2.0 + 1e-12);
        }
    }

    #[test]
    fn cell_list_visits_every_cutoff_pair() {
        // Exhaustive completeness check in d = 2 at n = 200.
        let params = Arc::new(ModelParams::new(
            2,
            MortalityField::Constant { rate: 0.1 },
            RadialKernel::Tophat {
                amplitude: 1.0,
                radius: 0.8,
            },
            FissionKernel::factorized(
                0.5,
                RadialKernel::Gaussian {
                    amplitude: 1.0,
                    scale: 0.2,
                    cutoff: 1.0,
                },
            ),
        ));
        let w = TorusWindow::new(6.0, 2, 1.0).unwrap();
        let mut g = Configuration::new(w, params);
        let mut rng = crate::rng::replica_stream(53, 0);
        for _ in 0..200 {
            g.insert([
                rng.random::<f64>() * 6.0,
                rng.random::<f64>() * 6.0,
                0.0,
            ])
            .unwrap();
        }
        let brute = g.brute_force_competition();
        for i in 0..g.len() {
            assert!(
                (g.death_components(i).1 - brute[i]).abs() <= 1e-9 * brute[i].max(1.0),
                "particle {i}"
            );
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            /// After an arbitrary op sequence the cached totals equal the
            /// brute-force recomputation.
            #[test]
            fn cache_matches_brute_force(ops in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..120)) {
                let mut g = Configuration::new(window(), desk_params());
                for (coin, pos) in ops {
                    if g.is_empty() || coin < 0.6 {
                        g.insert(at(pos * 10.0)).unwrap();
                    } else {
                        let i = (coin * 1e6) as usize % g.len();
                        g.remove(i).unwrap();
                    }
                }
                let brute = g.brute_force_competition();
                let total: f64 = brute.iter().sum();
                prop_assert!((g.competition_total() - total).abs() <= 1e-9 * total.max(1.0));
                let psi = g.mortality_total() + total + g.fission_total();
                prop_assert!((g.total_rate() - psi).abs() <= 1e-9 * psi.max(1.0));
            }
        }
    }

    #[test]
    fn drift_stays_bounded_over_long_sequences() {
        let mut g = Configuration::new(window(), desk_params());
        let mut rng = crate::rng::replica_stream(57, 0);
        for _ in 0..25_000 {
            if g.len() < 5 || rng.random::<f64>() < 0.5 {
                g.insert(at(rng.random::<f64>() * 10.0)).unwrap();
            } else {
                let i = rng.random_range(0..g.len());
                g.remove(i).unwrap();
            }
        }
        assert!(g.max_observed_drift < 1e-9, "drift {}", g.max_observed_drift);
    }
}
