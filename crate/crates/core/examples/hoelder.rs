//! Empirical Hölder exponents of a smooth field, a Brownian path and a constant.

use std::f64::consts::PI;

use spdeflow::diagnostics::{hoelder_estimate, hoelder_estimate_series};
use spdeflow::grid::{PeriodicGrid, ScalarField};
use spdeflow::noise::sample_brownian_increments;

fn main() -> spdeflow::Result<()> {
    let grid = PeriodicGrid::new(1, 4096)?;
    let sine = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).sin());
    let e = hoelder_estimate(&[sine], &[0.0], false)?;
    println!("sin(2 pi x):    exponent {:.3}, seminorm {:.3}", e.exponent, e.seminorm);

    let n = 1 << 16;
    let path = sample_brownian_increments(4, n, 1, 1.0 / n as f64);
    let e = hoelder_estimate_series(&path.cumulative(0), 1.0 / n as f64)?;
    println!("Brownian path:  exponent {:.3}, seminorm {:.3}", e.exponent, e.seminorm);

    let flat = ScalarField::constant(grid, 2.0);
    let e = hoelder_estimate(&[flat], &[0.0], false)?;
    println!("constant:       exponent {:.3}, seminorm {:.3}", e.exponent, e.seminorm);
    Ok(())
}
