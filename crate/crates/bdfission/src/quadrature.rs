//! Adaptive Simpson quadrature, one-dimensional and tensorized up to d = 3.

/// Recursive adaptive Simpson on `[a, b]` with mixed absolute/relative
/// tolerance. The classic error estimate `(S_left + S_right - S)/15` drives
/// the refinement.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    let scale = tol * whole.abs().max(1e-300) + tol;
    if depth == 0 || err.abs() <= 15.0 * scale.min(tol * (1.0 + whole.abs())) {
        return left + right + err / 15.0;
    }
    adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integral of a radial profile over `R^d`: `S_{d-1} ∫_0^R g(r) r^{d-1} dr`.
pub fn integrate_radial<F: Fn(f64) -> f64>(g: &F, radius: f64, dim: usize, tol: f64) -> f64 {
    let area = crate::geometry::unit_sphere_area(dim);
    let d = dim as i32;
    area * adaptive_simpson(&|r: f64| g(r) * r.powi(d - 1), 0.0, radius, tol)
}

/// Tensorized adaptive Simpson over the box `[lo, hi]^dim`.
pub fn integrate_box<F: Fn(&[f64]) -> f64 + Sync>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    tol: f64,
) -> f64 {
    match lo.len() {
        1 => adaptive_simpson(&|x| f(&[x]), lo[0], hi[0], tol),
        2 => adaptive_simpson(
            &|x| adaptive_simpson(&|y| f(&[x, y]), lo[1], hi[1], tol), // inner
            lo[0],
            hi[0],
            tol,
        ),
        3 => adaptive_simpson(
            &|x| {
                adaptive_simpson(
                    &|y| adaptive_simpson(&|z| f(&[x, y, z]), lo[2], hi[2], tol),
                    lo[1],
                    hi[1],
                    tol,
                )
            },
            lo[0],
            hi[0],
            tol,
        ),
        d => panic!("dimension {d} not supported"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive_simpson(&|x| 3.0 * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass_in_one_dim() {
        let v = adaptive_simpson(&|x: f64| (-0.5 * x * x).exp(), -8.0, 8.0, 1e-12);
        assert!((v - (2.0 * PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn radial_tophat_matches_ball_volume() {
        for d in 1..=3 {
            let v = integrate_radial(&|_| 1.0, 1.0, d, 1e-12);
            assert!((v - crate::geometry::unit_ball_volume(d)).abs() < 1e-10);
        }
    }

    #[test]
    fn box_gaussian_in_two_dims() {
        let f = |x: &[f64]| (-x[0] * x[0] - x[1] * x[1]).exp();
        let v = integrate_box(&f, &[-6.0, -6.0], &[6.0, 6.0], 1e-10);
        assert!((v - PI).abs() < 1e-8);
    }
}
