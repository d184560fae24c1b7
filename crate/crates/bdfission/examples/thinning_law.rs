//! Pure death thins a Poisson field into a Poisson field: the intensity
//! decays as κ e^{-mt} and the count law stays Poisson. Checks both with a
//! chi-square fit.
//!
//! ```sh
//! cargo run --release --example thinning_law
//! ```

use std::sync::Arc;

use bdfission::estimators::intensity;
use bdfission::geometry::BoxRegion;
use bdfission::kernels::{FissionKernel, ModelParams, MortalityField, RadialKernel};
use bdfission::simulator::{replicate, InitialCondition, SimConfig};
use bdfission::stats::{chi_square_pvalue, poisson_pmf};

fn main() {
    let kappa = 2.0;
    let m_rate = 1.0;
    let side = 5.0;
    let t = 1.0;
    let params = Arc::new(ModelParams::new(
        1,
        MortalityField::Constant { rate: m_rate },
        RadialKernel::zero(),
        FissionKernel::factorized(
            0.0,
            RadialKernel::Gaussian {
                amplitude: 1.0,
                scale: 0.3,
                cutoff: 1.5,
            },
        ),
    ));
    let sim = SimConfig {
        window_side: side,
        end_time: t,
        initial: InitialCondition::Poisson { intensity: kappa },
        seed: 31,
        snapshot_times: vec![t],
        max_population: 100_000,
        record_events: false,
    };
    let replicas = 10_000usize;
    let ensemble = replicate(&sim, params, replicas);

    let region = BoxRegion::cube(0.0, side, 1);
    let rho = intensity(&ensemble, &region).unwrap();
    println!(
        "intensity at t = {t}: {:.4} ± {:.4}   (κ e^(-mt) = {:.4})",
        rho.mean[0],
        rho.stderr[0],
        kappa * (-m_rate * t).exp()
    );

    let mean_count = kappa * side * (-m_rate * t).exp();
    let pops = ensemble.populations_at(0);
    let max_n = pops.iter().cloned().fold(0.0, f64::max) as usize;
    let mut observed = vec![0.0; max_n + 1];
    for n in &pops {
        observed[*n as usize] += 1.0;
    }
    let expected: Vec<f64> = (0..=max_n as u64)
        .map(|k| replicas as f64 * poisson_pmf(mean_count, k))
        .collect();
    println!("\ncounts vs the Poisson reference (mean {mean_count:.3}):");
    println!("{:>4} {:>10} {:>10}", "n", "observed", "expected");
    for n in 0..=max_n.min(12) {
        println!("{n:>4} {:>10.0} {:>10.1}", observed[n], expected[n]);
    }
    let (stat, p, df) = chi_square_pvalue(&observed, &expected, 5.0, 0);
    println!("\nchi-square = {stat:.2} on {df} dof, p = {p:.4}");
}
