//! Flow-method solve of the 1-d heat equation against its Fourier solution.

use std::f64::consts::PI;

use spdeflow::coeffs::{Coeff, CoefficientSet};
use spdeflow::grid::{PeriodicGrid, ScalarField};
use spdeflow::noise::{sample_brownian_increments, ZeroNoise};
use spdeflow::pde::SolverConfig;
use spdeflow::pipeline::{solve_flow_method, FlowMethodConfig};

fn main() -> spdeflow::Result<()> {
    let grid = PeriodicGrid::new(1, 128)?;
    let coeffs = CoefficientSet::diffusion_only(1, Coeff::Constant([[1.0, 0.0], [0.0, 0.0]]), 1.0, 1.0);
    let u0 = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).sin());
    let path = sample_brownian_increments(0, 1000, 0, 1e-4);
    let cfg = FlowMethodConfig {
        solver: SolverConfig { theta: 0.5, ..Default::default() },
        record_every: 250,
        ..Default::default()
    };
    let out = solve_flow_method(&coeffs, &ZeroNoise { dim: 1 }, &u0, &path, &cfg)?;
    for (t, u) in out.u.times.iter().zip(&out.u.fields) {
        let decay = (-4.0 * PI * PI * t).exp();
        let err = grid
            .nodes()
            .zip(&u.values)
            .map(|(x, v)| (v - decay * (2.0 * PI * x[0]).sin()).abs())
            .fold(0.0, f64::max);
        println!("t = {t:.4}  sup = {:.6}  max error = {err:.3e}", u.sup_norm());
    }
    Ok(())
}
