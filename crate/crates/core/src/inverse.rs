//! Pointwise inversion of the flow map.
//!
//! Solves `ξ_t(x) = y` for `x` with Newton steps preconditioned by the stored
//! inverse Jacobian, falling back to the exact Jacobian of the interpolated map
//! and to damped fixed-point steps whenever a step fails to reduce the residual.
//! If all of these stall (typically on a cell face, where the interpolated map
//! has a kink), the root is solved for exactly cell by cell.

use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::grid::{DisplacementField, PeriodicGrid};
use crate::small::{self, Mat2, Vec2};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;

#[inline]
fn norm(v: Vec2) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

fn residual(state: &FlowState, x: Vec2, y: Vec2) -> Vec2 {
    let p = state.displacement.apply(x);
    if state.grid().dim() == 1 {
        [p[0] - y[0], 0.0]
    } else {
        [p[0] - y[0], p[1] - y[1]]
    }
}

#[inline]
fn axpy(x: Vec2, s: f64, p: Vec2) -> Vec2 {
    [x[0] + s * p[0], x[1] + s * p[1]]
}

/// Solve `ξ(x) = y` on the polynomial extension of one cell of the
/// interpolated map and accept the root only if it lies in that cell.
fn solve_in_cell(state: &FlowState, cell: [i64; 2], y: Vec2, tol: f64) -> Option<Vec2> {
    let grid = state.grid();
    let dim = grid.dim();
    let h = grid.h();
    let d = &state.displacement.0;
    let at = |a: i64, b: i64| d.values[grid.flat_index(cell[0] + a, if dim == 1 { 0 } else { cell[1] + b })];
    let (d00, d10, d01, d11) = (at(0, 0), at(1, 0), at(0, 1), at(1, 1));
    let base = [cell[0] as f64 * h, cell[1] as f64 * h];
    let eval = |s: f64, t: f64| -> (Vec2, Mat2) {
        let mut f = [0.0; 2];
        let mut j = [[0.0; 2]; 2];
        for i in 0..dim {
            let (a, b, c, e) = (d00[i], d10[i], d01[i], d11[i]);
            let off = if i == 0 { s * h } else { t * h };
            if dim == 1 {
                f[i] = base[i] + off + a + s * (b - a) - y[i];
                j[i][0] = h + (b - a);
            } else {
                f[i] = base[i] + off + a + s * (b - a) + t * (c - a) + s * t * (e - b - c + a) - y[i];
                j[i][0] = (b - a) + t * (e - b - c + a) + if i == 0 { h } else { 0.0 };
                j[i][1] = (c - a) + s * (e - b - c + a) + if i == 1 { h } else { 0.0 };
            }
        }
        (f, j)
    };
    let (mut s, mut t) = (0.5, if dim == 1 { 0.0 } else { 0.5 });
    for _ in 0..50 {
        let (f, j) = eval(s, t);
        let jinv = small::inverse(&j, dim)?;
        let step = small::mat_vec(&jinv, &f);
        s -= step[0];
        t -= step[1];
        if !(s.is_finite() && t.is_finite()) {
            return None;
        }
        if step[0].abs().max(step[1].abs()) <= 1e-15 {
            break;
        }
    }
    const EDGE: f64 = 1e-9;
    let inside = |v: f64| (-EDGE..=1.0 + EDGE).contains(&v);
    if !inside(s) || (dim == 2 && !inside(t)) {
        return None;
    }
    let x = [base[0] + s * h, if dim == 1 { 0.0 } else { base[1] + t * h }];
    (norm(residual(state, x, y)) <= tol).then_some(x)
}

/// Exact inversion of the interpolated map over the cells around `x`.
fn cell_search(state: &FlowState, x: Vec2, y: Vec2, tol: f64) -> Option<Vec2> {
    let grid = state.grid();
    let n = grid.n() as f64;
    let c0 = (x[0] * n).floor() as i64;
    let c1 = (x[1] * n).floor() as i64;
    let reach: i64 = 2;
    let rows = if grid.dim() == 1 { 0..=0 } else { -reach..=reach };
    for b in rows {
        for a in -reach..=reach {
            if let Some(x) = solve_in_cell(state, [c0 + a, c1 + b], y, tol) {
                return Some(x);
            }
        }
    }
    None
}

/// Solve `ξ_t(x) = y` starting from `x0`. Returns `(x, iterations)`.
pub fn invert_flow_at(
    state: &FlowState,
    y: Vec2,
    x0: Vec2,
    tol: f64,
    max_iter: usize,
) -> std::result::Result<(Vec2, usize), f64> {
    let dim = state.grid().dim();
    let mut x = x0;
    let mut r = residual(state, x, y);
    let mut rn = norm(r);
    for it in 0..max_iter {
        if rn <= tol {
            return Ok((x, it));
        }
        // Newton step with the interpolated inverse Jacobian.
        let psi: Mat2 = state.inv_jacobian.interpolate(x);
        let p = small::mat_vec(&psi, &r);
        let cand = axpy(x, -1.0, p);
        let rc = residual(state, cand, y);
        if norm(rc) < rn {
            x = cand;
            r = rc;
            rn = norm(r);
            continue;
        }
        // Newton step with the Jacobian of the interpolated map.
        let (_, dd) = state.displacement.0.interpolate_with_gradient(x);
        let mut j = small::identity(dim);
        for (k, col) in dd.iter().enumerate().take(dim) {
            for i in 0..dim {
                j[i][k] += col[i];
            }
        }
        let mut dirs: Vec<Vec2> = Vec::with_capacity(2);
        if let Some(jinv) = small::inverse(&j, dim) {
            dirs.push(small::mat_vec(&jinv, &r));
        }
        dirs.push(r);
        let mut moved = false;
        'search: for d in &dirs {
            let mut s = 1.0;
            for _ in 0..60 {
                let cand = axpy(x, -s, *d);
                let rc = residual(state, cand, y);
                let n = norm(rc);
                if n < rn {
                    x = cand;
                    r = rc;
                    rn = n;
                    moved = true;
                    break 'search;
                }
                s *= 0.5;
            }
        }
        if !moved {
            return cell_search(state, x, y, tol).map(|x| (x, it + 1)).ok_or(rn);
        }
    }
    if rn <= tol {
        Ok((x, max_iter))
    } else {
        cell_search(state, x, y, tol).map(|x| (x, max_iter)).ok_or(rn)
    }
}

/// The inverse map `Ψ_t = ξ_t^{-1}` on grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseFlowField {
    pub t: f64,
    /// `Ψ_t(y) − y` at every node `y`.
    pub displacement: DisplacementField,
    /// `max_y |ξ_t(Ψ_t(y)) − y|`.
    pub residual: f64,
    pub max_iterations: usize,
}

impl InverseFlowField {
    pub fn identity(grid: PeriodicGrid, t: f64) -> Self {
        Self {
            t,
            displacement: DisplacementField::zeros(grid),
            residual: 0.0,
            max_iterations: 0,
        }
    }

    /// `Ψ_t(y)` at node `idx`.
    pub fn node_image(&self, idx: usize) -> Vec2 {
        self.displacement.node_image(idx)
    }
}

/// Invert the flow at every node, warm-starting from `previous` when given.
pub fn invert_flow_field(
    state: &FlowState,
    previous: Option<&InverseFlowField>,
    tol: f64,
    max_iter: usize,
) -> Result<InverseFlowField> {
    let grid = state.grid();
    let dim = grid.dim();
    let mut disp = DisplacementField::zeros(grid);
    let mut worst: f64 = 0.0;
    let mut max_it = 0;
    for idx in 0..grid.len() {
        let y = grid.node(idx);
        let x0 = match previous {
            Some(p) => p.node_image(idx),
            None => y,
        };
        let (x, it) = invert_flow_at(state, y, x0, tol, max_iter).map_err(|residual| {
            Error::InversionFailure {
                node: idx,
                residual,
                iters: max_iter,
            }
        })?;
        max_it = max_it.max(it);
        worst = worst.max(norm(residual(state, x, y)));
        let mut d = [x[0] - y[0], x[1] - y[1]];
        if dim == 1 {
            d[1] = 0.0;
        }
        disp.0.values[idx] = d;
    }
    Ok(InverseFlowField {
        t: state.t,
        displacement: disp,
        residual: worst,
        max_iterations: max_it,
    })
}
