//! Points and axis-aligned boxes in up to three dimensions.
//!
//! Positions are stored as fixed `[f64; 3]` arrays with the active dimension
//! carried separately; unused coordinates stay at zero.

use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 3;

/// A point in `R^d`, `d <= 3`; coordinates beyond `d` are zero.
pub type Position = [f64; MAX_DIM];

pub fn zero_position() -> Position {
    [0.0; MAX_DIM]
}

/// Euclidean norm of the first `dim` coordinates.
pub fn norm(p: &Position, dim: usize) -> f64 {
    p[..dim].iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn sub(a: &Position, b: &Position, dim: usize) -> Position {
    let mut out = zero_position();
    for k in 0..dim {
        out[k] = a[k] - b[k];
    }
    out
}

/// Axis-aligned box, used as the estimation window `Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn cube(lo: f64, hi: f64, dim: usize) -> Self {
        Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l).max(0.0))
            .product()
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0..self.dim()).all(|k| p[k] >= self.lo[k] && p[k] < self.hi[k])
    }

    /// Shrinks every face inward by `margin`; collapses to an empty box if the
    /// margin exceeds the half-width.
    pub fn shrink(&self, margin: f64) -> Self {
        Self {
            lo: self.lo.iter().map(|l| l + margin).collect(),
            hi: self.hi.iter().map(|h| h - margin).collect(),
        }
    }
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => panic!("dimension {dim} not supported"),
    }
}

/// Surface area of the unit sphere in `R^d` (boundary of the unit ball).
pub fn unit_sphere_area(dim: usize) -> f64 {
    dim as f64 * unit_ball_volume(dim)
}

/// Volume of the spherical shell `r_lo <= |x| < r_hi` in `R^d`.
pub fn shell_volume(r_lo: f64, r_hi: f64, dim: usize) -> f64 {
    unit_ball_volume(dim) * (r_hi.powi(dim as i32) - r_lo.powi(dim as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_volume_and_shrink() {
        let b = BoxRegion::cube(0.0, 4.0, 2);
        assert_eq!(b.volume(), 16.0);
        assert_eq!(b.shrink(1.0).volume(), 4.0);
        assert_eq!(b.shrink(3.0).volume(), 0.0);
    }

    #[test]
    fn shell_volumes_sum_to_ball() {
        let total: f64 = (0..10)
            .map(|i| shell_volume(i as f64 * 0.1, (i + 1) as f64 * 0.1, 3))
            .sum();
        assert!((total - unit_ball_volume(3)).abs() < 1e-12);
    }
}
