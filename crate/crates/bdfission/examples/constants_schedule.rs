//! The full constants pipeline: domination certificate from the cell
//! decomposition, Lambert-W optimized horizons, the growth constant, the
//! dispersal-regime tag, and the continuation schedule out to a horizon.
//!
//! ```sh
//! cargo run --example constants_schedule
//! ```

use bdfission::analytics::{
    delta_gap, dispersal_regime, domination_certificate, lambert_w0, poisson_samples, schedule,
    time_bounds, verify_domination, DispersalRegime, RateConstants,
};
use bdfission::kernels::{FissionKernel, RadialKernel};

fn main() {
    let a = RadialKernel::Tophat {
        amplitude: 1.0,
        radius: 1.0,
    };
    let f = FissionKernel::factorized(
        1.0,
        RadialKernel::Gaussian {
            amplitude: 1.0,
            scale: 0.4,
            cutoff: 2.0,
        },
    );

    println!("Lambert W spot checks: W(0) = {}, W(e) = {:.12}, W(1) = {:.10}",
        lambert_w0(0.0).unwrap(),
        lambert_w0(std::f64::consts::E).unwrap(),
        lambert_w0(1.0).unwrap(),
    );

    let cert = domination_certificate(&a, &f, 1, 0.05, 0.5, 0.5, None).unwrap();
    println!("\ndomination certificate:");
    println!("  cell side h     = {:.5}", cert.h);
    println!("  floor a_r       = {:.4} at r = {:.3}", cert.a_r, cert.r);
    println!("  Riemann sum     = {:.5} (must be <= <b> + ε = {:.3})",
        cert.riemann_sum, f.total_mass + cert.epsilon);
    println!("  packing factor  = {:.4}", cert.packing_factor);
    println!("  delta           = {:.4}", cert.delta);
    println!("  omega, upsilon  = {:.5}, {:.5}", cert.omega, cert.upsilon);

    let samples = poisson_samples(1, 12.0, 30.0, 2_000, 7);
    let audit = verify_domination(&a, &f, 1, cert.omega, cert.upsilon, &samples, Some(12.0));
    println!(
        "  Monte Carlo audit: {} violations in {} samples, worst margin {:.4}",
        audit.violations, audit.samples, audit.worst_margin
    );

    let rc = RateConstants {
        a_mass: 2.0,
        b_mass: f.total_mass,
        upsilon: cert.upsilon,
        beta_sup: f.beta_sup(1),
        m_sup: 2.0,
        a_sup: 1.0,
    };
    let alpha0 = -cert.omega.ln() + 0.2;
    let delta = delta_gap(&rc, alpha0).unwrap();
    let bounds = time_bounds(&rc, alpha0, alpha0 + delta, 1.0, 0.5).unwrap();
    println!("\ntime bounds at alpha0 = {alpha0:.4}:");
    println!("  delta(alpha0)  = {delta:.5}");
    println!("  T(a0+δ, a0)    = {:.5}  (= T_max: {:.5})", bounds.t_scale, bounds.t_max);
    println!("  tau = T/3      = {:.5}", bounds.tau);
    println!("  exp-moment horizon T(κ,κ') = {:.5}", bounds.t_kappa);

    match dispersal_regime(&a, &f, 1, 512) {
        DispersalRegime::Short { omega } => {
            println!("\ndispersal regime (grid heuristic): short, omega = {omega:.4}")
        }
        DispersalRegime::Long { witness_radius } => {
            println!("\ndispersal regime (grid heuristic): long, witness at r = {witness_radius:.4}")
        }
    }

    let m_inf = 2.0;
    let sched = schedule(&rc, m_inf, cert.omega, alpha0, 5.0).unwrap();
    println!(
        "\ncontinuation schedule to horizon 5 (c = {:.4}): {} steps",
        sched.c,
        sched.steps.len()
    );
    println!("{:>4} {:>12} {:>12} {:>12} {:>12}", "n", "T_n", "alpha*_n", "alpha_n", "sum T");
    for s in sched.steps.iter().take(5) {
        println!(
            "{:>4} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            s.n, s.t_n, s.alpha_star, s.alpha_n, s.elapsed
        );
    }
    if sched.steps.len() > 5 {
        let last = sched.steps.last().unwrap();
        println!("  ...");
        println!(
            "{:>4} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            last.n, last.t_n, last.alpha_star, last.alpha_n, last.elapsed
        );
    }
}
