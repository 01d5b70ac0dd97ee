//! Shared fixtures for the criterion benchmarks.

use plate_core::{GridSpec, SpectralField};

/// Smooth Gaussian bump of amplitude `amp` on `grid`.
pub fn gaussian(grid: GridSpec, amp: f64, width: f64) -> SpectralField {
    SpectralField::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        amp * (-r2 / (2.0 * width * width)).exp()
    })
    .expect("sample count matches grid")
}

pub fn square_grid(n: usize, points: usize) -> GridSpec {
    GridSpec::new(n, 8.0 * std::f64::consts::PI, points).expect("valid grid")
}
