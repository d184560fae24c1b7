//! Pure fission is a binary branching process: the ensemble mean population
//! grows as N₀ e^{<b> t}. Runs a seeded ensemble and compares.
//!
//! ```sh
//! cargo run --release --example branching_growth
//! ```

use std::sync::Arc;

use bdfission::kernels::{FissionKernel, ModelParams, MortalityField, RadialKernel};
use bdfission::simulator::{replicate, InitialCondition, SimConfig};
use bdfission::stats::mean_stderr;

fn main() {
    let b_mass = 1.0;
    let n0 = 10usize;
    let params = Arc::new(ModelParams::new(
        1,
        MortalityField::Constant { rate: 0.0 },
        RadialKernel::zero(),
        FissionKernel::factorized(
            b_mass,
            RadialKernel::Gaussian {
                amplitude: 1.0,
                scale: 0.3,
                cutoff: 1.5,
            },
        ),
    ));
    let times = vec![0.25, 0.5, 0.75, 1.0];
    let sim = SimConfig {
        window_side: 10.0,
        end_time: 1.0,
        initial: InitialCondition::Points {
            points: (0..n0).map(|i| vec![i as f64]).collect(),
        },
        seed: 2024,
        snapshot_times: times.clone(),
        max_population: 100_000,
        record_events: false,
    };
    let replicas = 5_000;
    println!("pure fission, <b> = {b_mass}, N0 = {n0}, {replicas} replicas");
    println!("{:>6} {:>12} {:>10} {:>12} {:>8}", "t", "mean N_t", "std err", "N0 e^t", "dev/σ");
    let ensemble = replicate(&sim, params, replicas);
    for (k, t) in times.iter().enumerate() {
        let pops = ensemble.populations_at(k);
        let (mean, se) = mean_stderr(&pops);
        let expected = n0 as f64 * (b_mass * t).exp();
        println!(
            "{t:>6.2} {mean:>12.4} {se:>10.4} {expected:>12.4} {:>8.2}",
            (mean - expected) / se
        );
    }
}
