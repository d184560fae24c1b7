//! Exact continuous-time simulation of the birth-death-fission jump process.
//!
//! Direct (Gillespie) method: the waiting time is exponential at the total
//! rate `Ψ(γ)`, the event is a death of particle `x` with probability
//! `(m(x) + E_a(x, γ\x)) / Ψ` and otherwise a fission at the uniform
//! per-particle rate `<b>`, in which the parent disappears and two offspring
//! appear at kernel-sampled positions (net +1). Rates come from the
//! incremental cache, so no thinning or rejection is needed.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::configuration::{Configuration, TorusWindow};
use crate::geometry::{zero_position, Position};
use crate::kernels::ModelParams;
use crate::rng::replica_stream;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("configuration is empty; no event to sample")]
    EmptyConfiguration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Death,
    Fission,
}

/// One jump of the process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub parent: Position,
    pub offspring: Option<(Position, Position)>,
    pub population_after: usize,
}

/// Initial condition: Poisson field of the given intensity, or an explicit
/// point list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Poisson { intensity: f64 },
    Points { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub window_side: f64,
    pub end_time: f64,
    pub initial: InitialCondition,
    pub seed: u64,
    /// Times at which configuration snapshots are recorded.
    pub snapshot_times: Vec<f64>,
    /// Hard cap on the population; hitting it stops the replica.
    pub max_population: usize,
    /// Keep the full event log (memory-heavy for large ensembles).
    pub record_events: bool,
}

impl SimConfig {
    pub fn new(window_side: f64, end_time: f64, initial: InitialCondition, seed: u64) -> Self {
        Self {
            window_side,
            end_time,
            initial,
            seed,
            snapshot_times: vec![end_time],
            max_population: 1_000_000,
            record_events: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EndTime,
    Extinct,
    GuardTripped,
}

/// Positions at a fixed time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub positions: Vec<Position>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub events: Vec<EventRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_positions: Vec<Position>,
    pub final_time: f64,
    pub n_events: u64,
    pub termination: Termination,
    /// Largest relative disagreement between the cached total rate and a full
    /// recomputation, observed at rebuild points.
    pub max_rate_drift: f64,
}

impl Trajectory {
    pub fn population_at(&self, time: f64) -> Option<usize> {
        self.snapshots
            .iter()
            .find(|s| (s.time - time).abs() < 1e-12)
            .map(|s| s.positions.len())
    }
}

/// Samples the next event out of `γ`. The waiting time is
/// `Exponential(Ψ(γ))`; the configuration is mutated accordingly.
pub fn next_event(
    config: &mut Configuration,
    rng: &mut ChaCha12Rng,
    now: f64,
) -> Result<EventRecord, SimError> {
    if config.is_empty() {
        return Err(SimError::EmptyConfiguration);
    }
    let total = config.total_rate();
    let wait = exponential(rng, total);
    Ok(apply_event(config, rng, now + wait))
}

/// Selects and applies the event at `time`, the waiting time having been
/// drawn already.
fn apply_event(config: &mut Configuration, rng: &mut ChaCha12Rng, time: f64) -> EventRecord {
    let total = config.total_rate();
    // Select the event by a proportional scan: first the death weights
    // m(x) + E_a(x), then the uniform fission weight <b> per particle.
    let death_total = config.mortality_total() + config.competition_total();
    let u = rng.random::<f64>() * total;
    if u < death_total {
        let mut acc = 0.0;
        let mut chosen = config.len() - 1;
        for i in 0..config.len() {
            let (m, c) = config.death_components(i);
            acc += m + c;
            if u < acc {
                chosen = i;
                break;
            }
        }
        let parent = *config.position(chosen);
        config.remove(chosen).expect("index in range");
        EventRecord {
            time,
            kind: EventKind::Death,
            parent,
            offspring: None,
            population_after: config.len(),
        }
    } else {
        let chosen = ((u - death_total) / config.params().total_fission_rate()) as usize;
        let chosen = chosen.min(config.len() - 1);
        let parent = *config.position(chosen);
        let dim = config.params().dimension;
        let (raw1, raw2) = {
            let params = config.params();
            params.fission.sample_offspring(&parent, dim, rng)
        };
        let y1 = config.window.wrap(&raw1);
        let y2 = config.window.wrap(&raw2);
        config.remove(chosen).expect("index in range");
        config.insert(y1).expect("wrapped into window");
        config.insert(y2).expect("wrapped into window");
        EventRecord {
            time,
            kind: EventKind::Fission,
            parent,
            offspring: Some((y1, y2)),
            population_after: config.len(),
        }
    }
}

fn exponential(rng: &mut ChaCha12Rng, rate: f64) -> f64 {
    let mut u = rng.random::<f64>();
    if u == 0.0 {
        u = f64::MIN_POSITIVE;
    }
    -u.ln() / rate
}

fn sample_initial(
    config: &mut Configuration,
    initial: &InitialCondition,
    rng: &mut ChaCha12Rng,
) {
    let dim = config.params().dimension;
    let side = config.window.side;
    match initial {
        InitialCondition::Poisson { intensity } => {
            let mean = intensity * config.window.volume();
            let n = if mean > 0.0 {
                Poisson::new(mean).expect("positive mean").sample(rng) as usize
            } else {
                0
            };
            for _ in 0..n {
                let mut p = zero_position();
                for c in p.iter_mut().take(dim) {
                    *c = rng.random::<f64>() * side;
                }
                config.insert(p).expect("uniform point in window");
            }
        }
        InitialCondition::Points { points } => {
            for pt in points {
                let mut p = zero_position();
                for (k, c) in pt.iter().take(dim).enumerate() {
                    p[k] = *c;
                }
                let p = config.window.wrap(&p);
                config.insert(p).expect("wrapped into window");
            }
        }
    }
}

/// Runs one trajectory to the end time, extinction, or the population guard.
/// Deterministic given the seed.
pub fn run(sim: &SimConfig, params: Arc<ModelParams>) -> Trajectory {
    let min_cell = params
        .competition
        .cutoff()
        .max(params.fission.beta_support(params.dimension) * 0.5);
    let window = TorusWindow::new(sim.window_side, params.dimension, min_cell)
        .expect("valid window geometry");
    let mut rng = replica_stream(sim.seed, 0);
    let mut config = Configuration::new(window, params);
    sample_initial(&mut config, &sim.initial, &mut rng);

    let mut snapshot_times = sim.snapshot_times.clone();
    snapshot_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    snapshot_times.retain(|t| *t <= sim.end_time + 1e-12);

    let mut events = Vec::new();
    let mut snapshots = Vec::new();
    let mut next_snap = 0usize;
    let mut t = 0.0;
    let mut n_events = 0u64;
    let termination;

    macro_rules! emit_snapshots_until {
        ($time:expr) => {
            while next_snap < snapshot_times.len() && snapshot_times[next_snap] <= $time {
                snapshots.push(Snapshot {
                    time: snapshot_times[next_snap],
                    positions: config.positions().to_vec(),
                });
                next_snap += 1;
            }
        };
    }

    loop {
        if config.is_empty() {
            emit_snapshots_until!(sim.end_time + 1.0);
            t = sim.end_time;
            termination = Termination::Extinct;
            break;
        }
        if config.len() >= sim.max_population {
            emit_snapshots_until!(t);
            termination = Termination::GuardTripped;
            break;
        }
        let total = config.total_rate();
        if total <= 0.0 {
            // Frozen configuration (all rates zero): nothing ever happens.
            emit_snapshots_until!(sim.end_time + 1.0);
            t = sim.end_time;
            termination = Termination::EndTime;
            break;
        }
        // Draw the waiting time first so snapshots falling inside the
        // holding interval record the pre-event configuration.
        let event_time = t + exponential(&mut rng, total);
        if event_time > sim.end_time {
            emit_snapshots_until!(sim.end_time);
            t = sim.end_time;
            termination = Termination::EndTime;
            break;
        }
        emit_snapshots_until!(event_time);
        let record = apply_event(&mut config, &mut rng, event_time);
        t = event_time;
        n_events += 1;
        if sim.record_events {
            events.push(record);
        }
    }
    emit_snapshots_until!(sim.end_time);

    Trajectory {
        seed: sim.seed,
        events,
        snapshots,
        final_positions: config.positions().to_vec(),
        final_time: t,
        n_events,
        termination,
        max_rate_drift: config.max_observed_drift,
    }
}

/// An ensemble of independent replicas with a common snapshot schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ensemble {
    pub master_seed: u64,
    pub snapshot_times: Vec<f64>,
    pub replicas: Vec<Trajectory>,
    pub dimension: usize,
    pub window_side: f64,
}

impl Ensemble {
    /// Populations per replica at snapshot index `k`.
    pub fn populations_at(&self, k: usize) -> Vec<f64> {
        self.replicas
            .iter()
            .map(|t| t.snapshots.get(k).map(|s| s.positions.len()).unwrap_or(0) as f64)
            .collect()
    }
}

/// Runs `n` independent replicas with decorrelated streams derived from the
/// master seed. Results are identical regardless of thread count: replica
/// `i` always uses stream `i`.
pub fn replicate(sim: &SimConfig, params: Arc<ModelParams>, n: usize) -> Ensemble {
    let mut snapshot_times = sim.snapshot_times.clone();
    snapshot_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let replicas: Vec<Trajectory> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut local = sim.clone();
            local.seed = derived_seed(sim.seed, i);
            run(&local, params.clone())
        })
        .collect();
    Ensemble {
        master_seed: sim.seed,
        snapshot_times,
        replicas,
        dimension: params.dimension,
        window_side: sim.window_side,
    }
}

/// Seed of replica `i` under master seed `s` (splitmix-style mix).
pub fn derived_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{FissionKernel, MortalityField, RadialKernel};
    use crate::stats::{ks_one_sample, mean_stderr};

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

    fn pure_fission_params(mass: f64) -> Arc<ModelParams> {
        Arc::new(ModelParams::new(
            1,
            MortalityField::Constant { rate: 0.0 },
            RadialKernel::zero(),
            FissionKernel::factorized(
                mass,
                RadialKernel::Gaussian {
                    amplitude: 1.0,
                    scale: 0.3,
                    cutoff: 1.5,
                },
            ),
        ))
    }

    #[test]
    fn single_particle_lifetime_is_exponential() {
        let params = pure_death_params(1.7);
        let n = 10_000;
        let mut lifetimes = Vec::with_capacity(n);
        let window = TorusWindow::new(10.0, 1, 1.5).unwrap();
        for i in 0..n {
            let mut rng = replica_stream(900 + i as u64, 0);
            let mut config = Configuration::new(window, params.clone());
            config.insert([5.0, 0.0, 0.0]).unwrap();
            let ev = next_event(&mut config, &mut rng, 0.0).unwrap();
            assert_eq!(ev.kind, EventKind::Death);
            lifetimes.push(ev.time);
        }
        let (_, p) = ks_one_sample(&mut lifetimes, |t| 1.0 - (-1.7 * t).exp());
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn pure_fission_every_event_increments_population() {
        let params = pure_fission_params(1.0);
        let mut sim = SimConfig::new(
            10.0,
            1.0,
            InitialCondition::Points {
                points: vec![vec![5.0]],
            },
            7,
        );
        sim.record_events = true;
        let traj = run(&sim, params);
        assert!(traj.n_events > 0);
        let mut pop = 1usize;
        for ev in &traj.events {
            assert_eq!(ev.kind, EventKind::Fission);
            pop += 1;
            assert_eq!(ev.population_after, pop);
        }
    }

    #[test]
    fn two_particle_death_probability_matches_rates() {
        // Two particles at distance u: either death has probability
        // (m + a(u)) / Ψ per event.
        let params = Arc::new(ModelParams::new(
            1,
            MortalityField::Constant { rate: 0.4 },
            RadialKernel::Tophat {
                amplitude: 0.6,
                radius: 1.0,
            },
            FissionKernel::factorized(
                0.5,
                RadialKernel::Gaussian {
                    amplitude: 1.0,
                    scale: 0.3,
                    cutoff: 1.5,
                },
            ),
        ));
        let window = TorusWindow::new(10.0, 1, 1.5).unwrap();
        let n = 20_000;
        let mut deaths = 0usize;
        for i in 0..n {
            let mut rng = replica_stream(3_000 + i as u64, 0);
            let mut config = Configuration::new(window, params.clone());
            config.insert([5.0, 0.0, 0.0]).unwrap();
            config.insert([5.5, 0.0, 0.0]).unwrap();
            let psi = config.total_rate();
            assert!((psi - (2.0 * 0.4 + 2.0 * 0.6 + 2.0 * 0.5)).abs() < 1e-12);
            let ev = next_event(&mut config, &mut rng, 0.0).unwrap();
            if ev.kind == EventKind::Death {
                deaths += 1;
            }
        }
        let p_death = 2.0 * (0.4 + 0.6) / 3.0;
        let got = deaths as f64 / n as f64;
        let se = (p_death * (1.0 - p_death) / n as f64).sqrt();
        assert!(
            (got - p_death).abs() < 4.0 * se,
            "death fraction {got} vs {p_death}"
        );
    }

    #[test]
    fn end_time_zero_returns_initial_condition() {
        let params = pure_death_params(1.0);
        let sim = SimConfig::new(
            10.0,
            0.0,
            InitialCondition::Points {
                points: vec![vec![1.0], vec![2.0]],
            },
            1,
        );
        let traj = run(&sim, params);
        assert_eq!(traj.n_events, 0);
        assert_eq!(traj.final_positions.len(), 2);
        assert_eq!(traj.population_at(0.0), Some(2));
    }

    #[test]
    fn branching_mean_matches_exponential_growth() {
        // Pure fission <b> = 1, N0 = 10, t = 1: E N_t = 10 e.
        let params = pure_fission_params(1.0);
        let sim = SimConfig {
            window_side: 10.0,
            end_time: 1.0,
            initial: InitialCondition::Points {
                points: (0..10).map(|i| vec![i as f64]).collect(),
            },
            seed: 99,
            snapshot_times: vec![1.0],
            max_population: 100_000,
            record_events: false,
        };
        let ensemble = replicate(&sim, params, 2_000);
        let pops = ensemble.populations_at(0);
        let (mean, se) = mean_stderr(&pops);
        let expected = 10.0 * std::f64::consts::E;
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean} vs {expected} (se {se})"
        );
    }

    #[test]
    fn pure_death_population_thins_poisson() {
        let params = pure_death_params(1.0);
        let sim = SimConfig {
            window_side: 5.0,
            end_time: 1.0,
            initial: InitialCondition::Poisson { intensity: 2.0 },
            seed: 11,
            snapshot_times: vec![1.0],
            max_population: 100_000,
            record_events: false,
        };
        let ensemble = replicate(&sim, params, 4_000);
        let pops = ensemble.populations_at(0);
        let (mean, se) = mean_stderr(&pops);
        let expected = 2.0 * 5.0 * (-1.0f64).exp();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn replicate_is_deterministic_and_order_independent() {
        let params = pure_fission_params(0.8);
        let sim = SimConfig {
            window_side: 10.0,
            end_time: 0.5,
            initial: InitialCondition::Poisson { intensity: 0.5 },
            seed: 4242,
            snapshot_times: vec![0.25, 0.5],
            max_population: 10_000,
            record_events: false,
        };
        let a = replicate(&sim, params.clone(), 64);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = single.install(|| replicate(&sim, params.clone(), 64));
        for (x, y) in a.replicas.iter().zip(&b.replicas) {
            assert_eq!(x.seed, y.seed);
            assert_eq!(x.n_events, y.n_events);
            assert_eq!(x.final_positions, y.final_positions);
        }
        // n = 1 equals a direct run with the derived seed.
        let one = replicate(&sim, params.clone(), 1);
        let mut direct_cfg = sim.clone();
        direct_cfg.seed = derived_seed(sim.seed, 0);
        let direct = run(&direct_cfg, params);
        assert_eq!(one.replicas[0].final_positions, direct.final_positions);
    }

    #[test]
    fn guard_trips_on_runaway_growth() {
        let params = pure_fission_params(5.0);
        let sim = SimConfig {
            window_side: 10.0,
            end_time: 50.0,
            initial: InitialCondition::Points {
                points: vec![vec![5.0]],
            },
            seed: 3,
            snapshot_times: vec![],
            max_population: 200,
            record_events: false,
        };
        let traj = run(&sim, params);
        assert_eq!(traj.termination, Termination::GuardTripped);
        assert_eq!(traj.final_positions.len(), 200);
    }

    #[test]
    fn rate_bookkeeping_stays_tight() {
        let params = Arc::new(ModelParams::new(
            1,
            MortalityField::Constant { rate: 0.2 },
            RadialKernel::Tophat {
                amplitude: 0.05,
                radius: 1.0,
            },
            FissionKernel::factorized(
                2.0,
                RadialKernel::Gaussian {
                    amplitude: 1.0,
                    scale: 0.3,
                    cutoff: 1.5,
                },
            ),
        ));
        let sim = SimConfig {
            window_side: 40.0,
            end_time: 10.0,
            initial: InitialCondition::Poisson { intensity: 4.0 },
            seed: 8,
            snapshot_times: vec![],
            max_population: 5_000,
            record_events: false,
        };
        let traj = run(&sim, params);
        // Enough mutations to cross several rebuild points (every 10^4).
        assert!(traj.n_events > 10_000, "events {}", traj.n_events);
        assert!(traj.max_rate_drift < 1e-9, "drift {}", traj.max_rate_drift);
    }
}
