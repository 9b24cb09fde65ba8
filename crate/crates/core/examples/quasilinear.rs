//! Quasilinear equation with sine/cosine transport noise; prints the sup norm.

use std::f64::consts::PI;

use spdeflow::grid::{PeriodicGrid, ScalarField};
use spdeflow::noise::{sample_brownian_increments, NoiseFamily, SinCos2d};
use spdeflow::pde::{solve_quasilinear, SolverConfig};
use spdeflow::small;

fn main() -> spdeflow::Result<()> {
    let grid = PeriodicGrid::new(2, 32)?;
    let a_fn = |_t: f64, _x: [f64; 2], y: f64| small::scale(&small::identity(2), 0.6 + 0.5 / (1.0 + y * y));
    let u0 = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
    let path = sample_brownian_increments(12, 2000, SinCos2d.modes(), 5e-4);
    let sol = solve_quasilinear(&a_fn, &SinCos2d, &u0, &path, &SolverConfig::default(), 200)?;
    println!("sup |U0| = {:.4}", u0.sup_norm());
    for (t, u) in sol.times.iter().zip(&sol.fields) {
        let (lo, hi) = u.min_max();
        println!("t = {t:.2}  range [{lo:+.4}, {hi:+.4}]");
    }
    Ok(())
}
