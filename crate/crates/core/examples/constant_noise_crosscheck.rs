//! Constant transport noise: flow method and direct solver on one path.

use std::f64::consts::PI;

use spdeflow::coeffs::{Coeff, CoefficientSet};
use spdeflow::grid::{PeriodicGrid, ScalarField};
use spdeflow::noise::{sample_brownian_increments, ConstantNoise};
use spdeflow::pde::{solve_spde_direct, SolverConfig};
use spdeflow::pipeline::{relative_l2_gap, solve_flow_method, FlowMethodConfig};
use spdeflow::small;

fn main() -> spdeflow::Result<()> {
    let grid = PeriodicGrid::new(2, 48)?;
    let family = ConstantNoise { dim: 2, c: vec![[0.3, 0.2]] };
    let coeffs = CoefficientSet::diffusion_only(2, Coeff::Constant(small::identity(2)), 0.9, 5.0);
    let u0 = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).sin() + 0.5 * (2.0 * PI * x[1]).cos());
    let path = sample_brownian_increments(3, 100, 1, 1e-3);
    let cfg = FlowMethodConfig { record_every: 25, ..Default::default() };
    let flow = solve_flow_method(&coeffs, &family, &u0, &path, &cfg)?;
    let direct = solve_spde_direct(&coeffs, &family, &u0, &path, &SolverConfig::default(), 25)?;
    for ((t, a), b) in flow.u.times.iter().zip(&flow.u.fields).zip(&direct.fields) {
        println!("t = {t:.3}  relative L2 gap = {:.3e}", relative_l2_gap(a, b));
    }
    Ok(())
}
