//! Spatial birth-death dynamics with competition and binary fission.
//!
//! A particle at `x` dies at rate `m(x) + sum_y a(x-y)` (independent mortality
//! plus pairwise competition) and splits at total rate `<b>` into two offspring
//! placed by the fission kernel `b(x|y1,y2)`, disappearing itself. The crate
//! provides four cooperating layers:
//!
//! * [`kernels`] / [`configuration`] / [`simulator`] — model ingredients, a
//!   periodic window with incremental rate caches, and an exact (direct-method)
//!   Gillespie engine with reproducible seeded ensembles;
//! * [`estimators`] — intensity, pair correlation, factorial moments and the
//!   Bogoliubov-type functional on ensembles, with sub-Poissonian envelope
//!   checks;
//! * [`gamma0`] / [`master_equation`] — exact enumeration oracles for the
//!   operator calculus on finite configurations, and a truncated
//!   continuous-time Markov chain realizing the finite-system Fokker-Planck
//!   evolution;
//! * [`analytics`] — every constructive constant of the theory: the domination
//!   pair, Lambert-W optimized time horizons, growth constants and the global
//!   continuation schedule.
//!
//! The `bdfission` binary exposes the batch front door (`simulate`, `analyze`,
//! `master`, `constants`, `verify`); runnable demos live under `examples/`.

pub mod analytics;
pub mod cli;
pub mod configuration;
pub mod estimators;
pub mod gamma0;
pub mod geometry;
pub mod kernels;
pub mod master_equation;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use configuration::{Configuration, TorusWindow};
pub use kernels::{FissionKernel, ModelParams, MortalityField, RadialKernel};
pub use simulator::{Ensemble, SimConfig, Trajectory};
