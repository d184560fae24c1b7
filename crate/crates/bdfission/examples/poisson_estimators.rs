//! Estimator sanity on a Poisson field: intensity, factorial moments
//! against the Poisson identity, and the product functional against
//! exp(κ ∫θ).
//!
//! ```sh
//! cargo run --release --example poisson_estimators
//! ```

use std::sync::Arc;

use bdfission::estimators::{bogoliubov_functional, factorial_moments, intensity, ThetaFunction};
use bdfission::geometry::BoxRegion;
use bdfission::kernels::{FissionKernel, ModelParams, MortalityField, RadialKernel};
use bdfission::simulator::{replicate, InitialCondition, SimConfig};

fn main() {
    let kappa = 2.0;
    let side = 8.0;
    // A frozen Poisson field: all rates zero.
    let params = Arc::new(ModelParams::new(
        1,
        MortalityField::Constant { rate: 0.0 },
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
        end_time: 0.0,
        initial: InitialCondition::Poisson { intensity: kappa },
        seed: 515,
        snapshot_times: vec![0.0],
        max_population: 100_000,
        record_events: false,
    };
    let ensemble = replicate(&sim, params, 20_000);

    let region = BoxRegion::cube(1.0, 6.0, 1);
    let rho = intensity(&ensemble, &region).unwrap();
    println!(
        "intensity over Λ = [1,6): {:.4} ± {:.4}   (κ = {kappa})",
        rho.mean[0], rho.stderr[0]
    );

    let fm = factorial_moments(&ensemble, &region, 3, None).unwrap();
    println!("\nfactorial moments vs the Poisson identity (κ|Λ|)^m:");
    let lam = kappa * region.volume();
    for m in 1..=3usize {
        println!(
            "  order {m}: {:>10.3} ± {:>7.3}   reference {:>10.3}",
            fm.moments[0][m - 1],
            fm.stderr[0][m - 1],
            lam.powi(m as i32)
        );
    }

    let theta = ThetaFunction::Constant {
        value: -0.5,
        support: BoxRegion::cube(2.0, 5.0, 1),
    };
    let report = bogoliubov_functional(&ensemble, &theta, 0).unwrap();
    let expected = (kappa * theta.integral()).exp();
    println!("\nproduct functional with θ = -0.5 on [2,5):");
    println!(
        "  E Π(1+θ(x)) = {:.5} ± {:.5}   exp(κ∫θ) = {:.5}",
        report.functional, report.stderr, expected
    );
    println!("  order-2 truncation: {:.5}", report.truncation_order2);
}
