//! The stochastic flow `ξ`, its Jacobian `Dξ` and inverse Jacobian `ψ` on grid nodes.
//!
//! The flow solves the Itô equation `dξ = μ(ξ) dt − Σ_n b_n(ξ) dW_n` with the
//! Stratonovich correction `μ^i = ½ Σ_n b_n^j ∂_j b_n^i`. Positions always use an
//! Euler–Maruyama step. The Jacobian pair is advanced either by the same Euler
//! step or by the matrix exponential of the one-step generator, which keeps
//! `det Dξ > 0` and `ψ·Dξ = Id` by construction.

use crate::error::{Error, Result};
use crate::grid::{DisplacementField, MatrixField, PeriodicGrid};
use crate::noise::{BrownianPath, ModeEval, NoiseFamily, Order};
use crate::small::{self, Mat2, Vec2, ZERO_M, ZERO_V};

/// Max-norm tolerance on `ψ·Dξ − Id` that triggers Newton re-projection.
pub const REPROJECT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianScheme {
    /// `Dξ⁺ = exp(X)·Dξ`, `ψ⁺ = ψ·exp(−X)` with the Itô generator `X`.
    #[default]
    Exponential,
    /// Plain Euler–Maruyama on both linear equations.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub scheme: JacobianScheme,
    /// Keep every `record_every`-th level (the last level is always kept).
    pub record_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            scheme: JacobianScheme::Exponential,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub displacement: DisplacementField,
    pub jacobian: MatrixField,
    pub inv_jacobian: MatrixField,
}

impl FlowState {
    /// The identity flow at time `t`.
    pub fn identity(grid: PeriodicGrid, t: f64) -> Self {
        let id = small::identity(grid.dim());
        Self {
            t,
            displacement: DisplacementField::zeros(grid),
            jacobian: MatrixField::constant(grid, id),
            inv_jacobian: MatrixField::constant(grid, id),
        }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.displacement.grid()
    }

    /// Position `ξ(x)` of node `idx`.
    #[inline]
    pub fn position(&self, idx: usize) -> Vec2 {
        self.displacement.node_image(idx)
    }

    /// Max over nodes of `‖ψ·Dξ − Id‖_max`.
    pub fn inverse_defect(&self) -> f64 {
        let id = small::identity(self.grid().dim());
        self.jacobian
            .values
            .iter()
            .zip(&self.inv_jacobian.values)
            .map(|(d, p)| small::max_abs(&small::sub(&small::mat_mul(p, d), &id)))
            .fold(0.0, f64::max)
    }

    pub fn min_det(&self) -> f64 {
        let dim = self.grid().dim();
        self.jacobian
            .values
            .iter()
            .map(|d| small::det(d, dim))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `μ = ½ Σ_n (b_n·∇) b_n`, the drift of the Itô form of the flow equation.
pub fn stratonovich_drift(family: &dyn NoiseFamily, t: f64, x: Vec2) -> Vec2 {
    let modes = family.eval_vec(t, x, Order::First);
    drift_from_modes(&modes)
}

#[inline]
pub(crate) fn drift_from_modes(modes: &[ModeEval]) -> Vec2 {
    let mut mu = ZERO_V;
    for m in modes {
        for (i, mu_i) in mu.iter_mut().enumerate() {
            *mu_i += 0.5 * (m.b[0] * m.jac[i][0] + m.b[1] * m.jac[i][1]);
        }
    }
    mu
}

/// `Dμ` with `(Dμ)[i][k] = ½ Σ_n (∂_k b^j ∂_j b^i + b^j ∂_j ∂_k b^i)`.
#[inline]
pub(crate) fn drift_jacobian_from_modes(modes: &[ModeEval]) -> Mat2 {
    let mut dmu = ZERO_M;
    for m in modes {
        for i in 0..2 {
            for k in 0..2 {
                let mut s = 0.0;
                for j in 0..2 {
                    s += m.jac[j][k] * m.jac[i][j] + m.b[j] * m.hess[i][j][k];
                }
                dmu[i][k] += 0.5 * s;
            }
        }
    }
    dmu
}

/// One step of the Jacobian pair at a single node.
///
/// `modes` are evaluated at the pre-step position. Returns `(Dξ⁺, ψ⁺)`.
pub(crate) fn step_jacobian(
    d: &Mat2,
    psi: &Mat2,
    modes: &[ModeEval],
    dw: &[f64],
    dt: f64,
    dim: usize,
    scheme: JacobianScheme,
) -> (Mat2, Mat2) {
    let dmu = drift_jacobian_from_modes(modes);
    match scheme {
        JacobianScheme::Exponential => {
            // X = (Dμ − ½ Σ Dσ_n²) dt + Σ Dσ_n ΔW_n with Dσ_n = −Db_n.
            let mut x = small::scale(&dmu, dt);
            for (m, w) in modes.iter().zip(dw) {
                let sq = small::mat_mul(&m.jac, &m.jac);
                x = small::sub(&x, &small::scale(&sq, 0.5 * dt));
                x = small::sub(&x, &small::scale(&m.jac, *w));
            }
            let e = small::expm(&x, dim);
            let einv = small::expm(&small::scale(&x, -1.0), dim);
            (small::mat_mul(&e, d), small::mat_mul(psi, &einv))
        }
        JacobianScheme::Euler => {
            // dDξ = Dμ Dξ dt + Σ Dσ Dξ dW
            // dψ = −ψ Dμ dt + Σ ψ Dσ Dσ dt − Σ ψ Dσ dW
            let mut dn = small::add(d, &small::scale(&small::mat_mul(&dmu, d), dt));
            let mut pn = small::sub(psi, &small::scale(&small::mat_mul(psi, &dmu), dt));
            for (m, w) in modes.iter().zip(dw) {
                let ds = small::scale(&m.jac, -1.0);
                dn = small::add(&dn, &small::scale(&small::mat_mul(&ds, d), *w));
                let pds = small::mat_mul(psi, &ds);
                pn = small::add(&pn, &small::scale(&small::mat_mul(&pds, &ds), dt));
                pn = small::sub(&pn, &small::scale(&pds, *w));
            }
            (dn, pn)
        }
    }
}

/// Pull `ψ` back onto `(Dξ)^{-1}`: Newton–Schulz sweeps, then a direct inverse
/// if they do not reach the tolerance.
pub(crate) fn reproject(d: &Mat2, psi: &Mat2, dim: usize) -> Mat2 {
    let id = small::identity(dim);
    let mut p = *psi;
    for _ in 0..4 {
        let e = small::sub(&small::mat_mul(&p, d), &id);
        if small::max_abs(&e) <= REPROJECT_TOL {
            return p;
        }
        let two_minus = small::sub(&small::scale(&id, 2.0), &small::mat_mul(d, &p));
        p = small::mat_mul(&p, &two_minus);
    }
    let e = small::sub(&small::mat_mul(&p, d), &id);
    if small::max_abs(&e) <= REPROJECT_TOL {
        p
    } else {
        small::inverse(d, dim).unwrap_or(p)
    }
}

/// The flow of one starting point together with its Jacobian pair. Nodes do
/// not interact, so this is also the building block of the grid flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPoint {
    pub start: Vec2,
    pub displacement: Vec2,
    pub jacobian: Mat2,
    pub inv_jacobian: Mat2,
}

impl FlowPoint {
    pub fn new(start: Vec2, dim: usize) -> Self {
        Self {
            start,
            displacement: ZERO_V,
            jacobian: small::identity(dim),
            inv_jacobian: small::identity(dim),
        }
    }

    pub fn position(&self) -> Vec2 {
        [self.start[0] + self.displacement[0], self.start[1] + self.displacement[1]]
    }

    /// One step from time `t`. On failure returns the offending determinant
    /// (NaN for a non-finite position).
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        family: &dyn NoiseFamily,
        t: f64,
        dw: &[f64],
        dt: f64,
        dim: usize,
        scheme: JacobianScheme,
        scratch: &mut Vec<ModeEval>,
    ) -> std::result::Result<(), f64> {
        scratch.resize(family.modes(), ModeEval::default());
        family.eval(t, self.position(), Order::Second, scratch);
        let mu = drift_from_modes(scratch);
        let mut delta = self.displacement;
        for i in 0..dim {
            delta[i] += mu[i] * dt;
            for (m, w) in scratch.iter().zip(dw) {
                delta[i] -= m.b[i] * w;
            }
        }
        let (dn, pn) = step_jacobian(&self.jacobian, &self.inv_jacobian, scratch, dw, dt, dim, scheme);
        let det = small::det(&dn, dim);
        if !(det > 0.0) || !det.is_finite() || !small::is_finite(&dn) || !small::is_finite(&pn) {
            return Err(det);
        }
        if !(delta[0].is_finite() && delta[1].is_finite()) {
            return Err(f64::NAN);
        }
        self.displacement = delta;
        self.jacobian = dn;
        self.inv_jacobian = reproject(&dn, &pn, dim);
        Ok(())
    }
}

/// Evolve a single point through every step of `path`.
pub fn evolve_point(
    family: &dyn NoiseFamily,
    path: &BrownianPath,
    start: Vec2,
    dim: usize,
    scheme: JacobianScheme,
) -> Result<FlowPoint> {
    let mut p = FlowPoint::new(start, dim);
    let mut scratch = Vec::new();
    for k in 0..path.steps {
        let t = k as f64 * path.dt;
        p.step(family, t, path.step(k), path.dt, dim, scheme, &mut scratch)
            .map_err(|det| Error::FlowDegeneracy {
                node: 0,
                t: t + path.dt,
                det,
            })?;
    }
    Ok(p)
}

/// Advance `state` in place by one step with increments `dw`.
pub fn step_flow_in_place(
    state: &mut FlowState,
    family: &dyn NoiseFamily,
    dw: &[f64],
    dt: f64,
    scheme: JacobianScheme,
    scratch: &mut Vec<ModeEval>,
) -> Result<()> {
    let grid = state.grid();
    let dim = grid.dim();
    let t = state.t;
    let t_next = t + dt;
    scratch.resize(family.modes(), ModeEval::default());
    if family.modes() == 0 {
        state.t = t_next;
        return Ok(());
    }
    for idx in 0..grid.len() {
        let mut p = FlowPoint {
            start: grid.node(idx),
            displacement: state.displacement.0.values[idx],
            jacobian: state.jacobian.values[idx],
            inv_jacobian: state.inv_jacobian.values[idx],
        };
        p.step(family, t, dw, dt, dim, scheme, scratch)
            .map_err(|det| Error::FlowDegeneracy { node: idx, t: t_next, det })?;
        state.displacement.0.values[idx] = p.displacement;
        state.jacobian.values[idx] = p.jacobian;
        state.inv_jacobian.values[idx] = p.inv_jacobian;
    }
    state.t = t_next;
    Ok(())
}

/// One step, returning the new state.
pub fn step_flow(
    state: &FlowState,
    family: &dyn NoiseFamily,
    dw: &[f64],
    dt: f64,
    scheme: JacobianScheme,
) -> Result<FlowState> {
    let mut next = state.clone();
    let mut scratch = Vec::new();
    step_flow_in_place(&mut next, family, dw, dt, scheme, &mut scratch)?;
    Ok(next)
}

/// Streams a flow through the steps of a Brownian path.
pub struct FlowStepper<'a> {
    family: &'a dyn NoiseFamily,
    path: &'a BrownianPath,
    scheme: JacobianScheme,
    state: FlowState,
    next_step: usize,
    scratch: Vec<ModeEval>,
}

impl<'a> FlowStepper<'a> {
    /// Flow started from the identity at step `start_step` of `path`.
    pub fn new(
        family: &'a dyn NoiseFamily,
        path: &'a BrownianPath,
        grid: PeriodicGrid,
        start_step: usize,
        scheme: JacobianScheme,
    ) -> Self {
        Self {
            family,
            path,
            scheme,
            state: FlowState::identity(grid, start_step as f64 * path.dt),
            next_step: start_step,
            scratch: Vec::new(),
        }
    }

    pub fn state(&self) -> &FlowState {
        &self.state
    }

    pub fn into_state(self) -> FlowState {
        self.state
    }

    /// Index of the next step to take; equals the current level.
    pub fn level(&self) -> usize {
        self.next_step
    }

    pub fn done(&self) -> bool {
        self.next_step >= self.path.steps
    }

    pub fn step(&mut self) -> Result<&FlowState> {
        let k = self.next_step;
        step_flow_in_place(
            &mut self.state,
            self.family,
            self.path.step(k),
            self.path.dt,
            self.scheme,
            &mut self.scratch,
        )?;
        self.next_step += 1;
        // Re-derive t from the level to avoid accumulating rounding.
        self.state.t = self.next_step as f64 * self.path.dt;
        Ok(&self.state)
    }
}

/// Recorded levels of a flow started at `start_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub start_time: f64,
    pub dt: f64,
    pub levels: Vec<usize>,
    pub states: Vec<FlowState>,
}

impl FlowTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn final_state(&self) -> &FlowState {
        self.states.last().expect("trajectory has at least one level")
    }
}

/// Recorded flow maps without Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionTrajectory {
    pub start_time: f64,
    pub dt: f64,
    pub levels: Vec<usize>,
    pub times: Vec<f64>,
    pub maps: Vec<DisplacementField>,
}

/// Anything that can hand out the flow map at a recorded time.
pub trait FlowMaps {
    fn start_time(&self) -> f64;
    fn map_at(&self, t: f64) -> Option<&DisplacementField>;
}

fn find_time(times: impl Iterator<Item = f64>, t: f64, dt: f64) -> Option<usize> {
    times
        .enumerate()
        .find(|(_, s)| (s - t).abs() <= 1e-9 * dt.max(1.0))
        .map(|(i, _)| i)
}

impl FlowMaps for FlowTrajectory {
    fn start_time(&self) -> f64 {
        self.start_time
    }
    fn map_at(&self, t: f64) -> Option<&DisplacementField> {
        find_time(self.states.iter().map(|s| s.t), t, self.dt).map(|i| &self.states[i].displacement)
    }
}

impl FlowMaps for PositionTrajectory {
    fn start_time(&self) -> f64 {
        self.start_time
    }
    fn map_at(&self, t: f64) -> Option<&DisplacementField> {
        find_time(self.times.iter().copied(), t, self.dt).map(|i| &self.maps[i])
    }
}

/// Integrate the flow from the identity at step `start_step` through the end
/// of `path`, recording every `cfg.record_every`-th level.
pub fn evolve_flow_from(
    family: &dyn NoiseFamily,
    path: &BrownianPath,
    grid: PeriodicGrid,
    start_step: usize,
    cfg: &FlowConfig,
) -> Result<FlowTrajectory> {
    let every = cfg.record_every.max(1);
    let mut stepper = FlowStepper::new(family, path, grid, start_step, cfg.scheme);
    let mut levels = vec![start_step];
    let mut states = vec![stepper.state().clone()];
    while !stepper.done() {
        stepper.step()?;
        let k = stepper.level();
        if (k - start_step).is_multiple_of(every) || k == path.steps {
            levels.push(k);
            states.push(stepper.state().clone());
        }
    }
    Ok(FlowTrajectory {
        start_time: start_step as f64 * path.dt,
        dt: path.dt,
        levels,
        states,
    })
}

/// Integrate the flow from the identity at time 0 over the whole path.
pub fn evolve_flow(
    family: &dyn NoiseFamily,
    path: &BrownianPath,
    grid: PeriodicGrid,
    cfg: &FlowConfig,
) -> Result<FlowTrajectory> {
    evolve_flow_from(family, path, grid, 0, cfg)
}

/// Positions-only flow from step `start_step`, recording the listed levels.
pub fn evolve_positions(
    family: &dyn NoiseFamily,
    path: &BrownianPath,
    grid: PeriodicGrid,
    start_step: usize,
    record: &[usize],
) -> Result<PositionTrajectory> {
    let dim = grid.dim();
    let mut disp = DisplacementField::zeros(grid);
    let mut scratch = vec![ModeEval::default(); family.modes()];
    let mut levels = Vec::new();
    let mut times = Vec::new();
    let mut maps = Vec::new();
    let mut keep = |k: usize, d: &DisplacementField| {
        if record.contains(&k) {
            levels.push(k);
            times.push(k as f64 * path.dt);
            maps.push(d.clone());
        }
    };
    keep(start_step, &disp);
    for k in start_step..path.steps {
        let t = k as f64 * path.dt;
        let dw = path.step(k);
        for idx in 0..grid.len() {
            let xi = disp.node_image(idx);
            family.eval(t, xi, Order::First, &mut scratch);
            let mu = drift_from_modes(&scratch);
            let delta = &mut disp.0.values[idx];
            for i in 0..dim {
                delta[i] += mu[i] * path.dt;
                for (m, w) in scratch.iter().zip(dw) {
                    delta[i] -= m.b[i] * w;
                }
            }
            if !(delta[0].is_finite() && delta[1].is_finite()) {
                return Err(Error::FlowDegeneracy {
                    node: idx,
                    t: t + path.dt,
                    det: f64::NAN,
                });
            }
        }
        keep(k + 1, &disp);
    }
    Ok(PositionTrajectory {
        start_time: start_step as f64 * path.dt,
        dt: path.dt,
        levels,
        times,
        maps,
    })
}

/// `max_x |ξ_{r,t}(x) − ξ_{s,t}(ξ_{r,s}(x))|` where `a` starts at `r`, `b` at `s`.
///
/// The inner evaluation of `ξ_{s,t}` off the grid uses interpolation. Returns
/// `None` when one of the needed times was not recorded.
pub fn flow_property_residual<A: FlowMaps, B: FlowMaps>(a: &A, b: &B, t: f64) -> Option<f64> {
    let s = b.start_time();
    let rs = a.map_at(s)?;
    let rt = a.map_at(t)?;
    let st = b.map_at(t)?;
    let grid = rs.grid();
    let mut worst: f64 = 0.0;
    for idx in 0..grid.len() {
        let mid = rs.node_image(idx);
        let lhs = rt.node_image(idx);
        let rhs = st.apply(mid);
        for i in 0..grid.dim() {
            worst = worst.max((lhs[i] - rhs[i]).abs());
        }
    }
    Some(worst)
}
