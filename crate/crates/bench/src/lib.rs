//! Shared fixtures for the benchmarks.

use num_complex::Complex64;
use tfnorm_core::grid::shifted_gaussian;
use tfnorm_core::{Grid, PhaseField, Signal};

pub fn grid(n: usize, h: f64) -> Grid {
    Grid::centered(1, n, h).expect("valid grid")
}

/// A sum of two shifted Gaussians.
pub fn signal(g: &Grid) -> Signal {
    shifted_gaussian(g, &[1.0], &[0.5])
        .add(&shifted_gaussian(g, &[-1.5], &[-1.0]))
        .expect("same grid")
}

/// Deterministic dense phase-space field with a Gaussian envelope.
pub fn field(g: &Grid) -> PhaseField {
    PhaseField::from_fn(g, |x, xi| {
        let env = (-(x[0] * x[0] + xi[0] * xi[0]) / 4.0).exp();
        Complex64::new((3.0 * x[0] + xi[0]).sin(), (x[0] - 2.0 * xi[0]).cos()) * env
    })
}
