//! Two routes to the same law: the truncated master equation integrated by
//! RK4 and the exact direct-method simulation of the identical discrete
//! chain. Prints the population law side by side and the total-variation
//! distance.
//!
//! ```sh
//! cargo run --release --example master_vs_gillespie
//! ```

use bdfission::gamma0::DiscreteSpace;
use bdfission::master_equation::{
    build_generator, default_step, discrete_ssa, enumerate_states, evolve, DistributionVector,
};

fn main() {
    // Two sites with asymmetric rates.
    let d = DiscreteSpace::new(
        2,
        vec![0.2, 0.1, 0.1, 0.3],
        vec![0.5, 0.7],
        vec![
            0.15, 0.05, 0.05, 0.25, // b_0
            0.1, 0.2, 0.2, 0.1, // b_1
        ],
    );
    let initial: Vec<u8> = vec![0, 1];
    let t = 0.5;

    let ss = enumerate_states(2, 10).unwrap();
    let q = build_generator(&d, &ss);
    let p0 = DistributionVector::point_mass(&ss, &initial);
    let p = evolve(&p0, &q, t, default_step(&q)).unwrap();
    let marginal = p.population_marginal(&ss);
    println!(
        "master equation: {} states, mass {:.12}, truncation leak {:.2e}",
        ss.n_states,
        p.total_mass(),
        p.sink_mass(&ss)
    );

    let replicas = 50_000usize;
    let mut counts = vec![0.0; marginal.len() + 1];
    for i in 0..replicas {
        let n = discrete_ssa(&d, &initial, t, 1_000 + i as u64, 10_000);
        counts[n.min(marginal.len())] += 1.0;
    }

    println!("\nlaw of N at t = {t} ({replicas} replicas):");
    println!("{:>4} {:>12} {:>12}", "n", "master", "simulated");
    let mut tv = 0.0;
    for n in 0..marginal.len() {
        let sim = counts[n] / replicas as f64;
        tv += (sim - marginal[n]).abs();
        if marginal[n] > 1e-6 || sim > 0.0 {
            println!("{n:>4} {:>12.6} {sim:>12.6}", marginal[n]);
        }
    }
    tv *= 0.5;
    println!("\ntotal-variation distance: {tv:.5}");
}
