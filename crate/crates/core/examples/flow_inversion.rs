//! Evolve a grid flow, invert it at every node and report the residuals.

use spdeflow::flow::{evolve_flow, FlowConfig};
use spdeflow::grid::PeriodicGrid;
use spdeflow::inverse::invert_flow_field;
use spdeflow::noise::{sample_brownian_increments, SinCos2d};

fn main() -> spdeflow::Result<()> {
    let grid = PeriodicGrid::new(2, 64)?;
    let path = sample_brownian_increments(7, 250, 4, 1e-3);
    let cfg = FlowConfig { record_every: 50, ..Default::default() };
    let traj = evolve_flow(&SinCos2d, &path, grid, &cfg)?;
    let mut previous = None;
    for state in &traj.states {
        let inv = invert_flow_field(state, previous.as_ref(), 1e-12, 100)?;
        println!(
            "t = {:.3}  min det = {:.3e}  inverse residual = {:.2e}  iterations <= {}",
            state.t,
            state.min_det(),
            inv.residual,
            inv.max_iterations
        );
        previous = Some(inv);
    }
    Ok(())
}
