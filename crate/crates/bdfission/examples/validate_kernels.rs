//! Declare a model, validate its ingredients and print the derived
//! constants, including the effect of mollifying the fission kernel.
//!
//! ```sh
//! cargo run --example validate_kernels
//! ```

use bdfission::kernels::{
    validate_params, FissionKernel, ModelParams, MortalityField, RadialKernel,
};

fn main() {
    let params = ModelParams::new(
        1,
        MortalityField::Constant { rate: 1.0 },
        RadialKernel::Gaussian {
            amplitude: 1.0,
            scale: 1.0,
            cutoff: 5.0,
        },
        FissionKernel::factorized(
            2.0,
            RadialKernel::Gaussian {
                amplitude: 1.0,
                scale: 0.5,
                cutoff: 3.0,
            },
        ),
    );

    let report = validate_params(&params).expect("well-formed kernels");
    println!("validation: {}", if report.pass { "PASS" } else { "FAIL" });
    for item in &report.items {
        println!(
            "  [{}] {} — {}",
            if item.pass { "ok" } else { "bad" },
            item.item,
            item.detail
        );
    }
    let c = &report.constants;
    println!();
    println!("derived constants:");
    println!("  a*        = {:.6}", c.a_sup);
    println!("  <a>       = {:.6}", c.a_mass);
    println!("  a_r       = {:.6} at r = {:.4}", c.a_lower, c.r);
    println!("  <b>       = {:.6}", c.b_mass);
    println!("  beta*     = {:.6}", c.beta_sup);
    println!("  m*, m_*   = {:.4}, {:.4}", c.m_sup, c.m_inf);
    println!(
        "  truncated tails: competition {:.2e}, dispersal {:.2e}",
        report.competition_tail_fraction, report.dispersal_tail_fraction
    );
    println!(
        "  |∫β - <b>| / <b> = {:.2e}",
        report.beta_mass_rel_error
    );

    // β at a few displacements vs the closed-form convolution of the
    // dispersal density (q ⋆ q is a Gaussian of doubled variance).
    println!();
    println!("sibling displacement profile:");
    let s = 0.5f64;
    let var = 2.0 * s * s;
    for u in [0.0, 0.25, 0.5, 1.0, 2.0] {
        let closed =
            2.0 * (-0.5 * u * u / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        println!(
            "  beta({u:.2}) = {:.6}   closed form {:.6}",
            params.fission.beta(u, 1),
            closed
        );
    }

    // Mollification shrinks the kernel mass strictly.
    let sigma = 0.5;
    let mollified = params.fission.mollify(sigma);
    println!();
    println!(
        "mollified kernel (sigma = {sigma}): sampling now rejects against exp(-σ|y|²) weights; \
         phi_sigma(0) = 1, total mass strictly below <b> = {}",
        params.fission.total_mass
    );
    let mut rng = bdfission::rng::replica_stream(7, 0);
    let (y1, y2) = mollified.sample_offspring(&[0.0, 0.0, 0.0], 1, &mut rng);
    println!("  one mollified offspring pair at the origin: ({:.4}, {:.4})", y1[0], y2[0]);
}
