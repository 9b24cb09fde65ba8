//! θ-scheme solvers for the pathwise PDE and for the SPDE itself.
//!
//! Divergence-form operators are discretized with face fluxes and arithmetic
//! face averages, so that `Σ_i (L v)_i = 0` whenever there is no drift or
//! zeroth-order term. Mixed derivatives average the two nodal central
//! differences onto the face.

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{MatrixField, PeriodicGrid, ScalarField, VectorField};
use crate::inverse::InverseFlowField;
use crate::linalg::{self, Stencil, StencilMatrix};
use crate::noise::{BrownianPath, ModeEval, NoiseFamily, Order};
use crate::small::{self, Mat2, Vec2};
use crate::transform::TransformedCoefficients;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Implicitness in `[0, 1]`; 1 is backward Euler.
    pub theta: f64,
    /// Relative residual tolerance of each linear solve.
    pub tol: f64,
    pub max_iter: usize,
    /// Explicit noise needs `dt ≤ cfl · h / max_x ‖(b_n(x))_n‖`.
    pub cfl: f64,
    /// Abort when `sup |u|` exceeds this.
    pub blowup_bound: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            theta: 1.0,
            tol: 1e-10,
            max_iter: 5000,
            cfl: 0.25,
            blowup_bound: 1e6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::config("solver.theta", "must lie in [0, 1]"));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::config("solver.tol", "tolerance and iteration cap must be positive"));
        }
        if !(self.cfl > 0.0) || !(self.blowup_bound > 0.0) {
            return Err(Error::config("solver.cfl", "CFL ratio and blow-up bound must be positive"));
        }
        Ok(())
    }
}

/// Fields at recorded levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub levels: Vec<usize>,
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
}

impl Solution {
    fn new() -> Self {
        Self {
            levels: Vec::new(),
            times: Vec::new(),
            fields: Vec::new(),
        }
    }

    fn push(&mut self, k: usize, t: f64, f: &ScalarField) {
        self.levels.push(k);
        self.times.push(t);
        self.fields.push(f.clone());
    }

    pub fn last(&self) -> &ScalarField {
        self.fields.last().expect("solution has at least one level")
    }
}

pub fn should_record(k: usize, every: usize, last: usize) -> bool {
    k.is_multiple_of(every.max(1)) || k == last
}

/// `L v = ∂_k(α^{kl} ∂_l v) + α^l ∂_l v + c v` as a stencil matrix.
pub fn assemble_operator(
    alpha: &MatrixField,
    alpha_lin: Option<&VectorField>,
    zeroth: Option<&ScalarField>,
) -> StencilMatrix {
    let grid = alpha.grid;
    let dim = grid.dim();
    let cross = dim == 2 && alpha.values.iter().any(|a| a[0][1] != 0.0 || a[1][0] != 0.0);
    let mut m = StencilMatrix::zeros(grid, if cross { Stencil::Full } else { Stencil::Compact });
    let h = grid.h();
    let ih2 = 1.0 / (h * h);
    let slot = |m: &StencilMatrix, di: i64, dj: i64| m.slot(di, dj);
    let e = |axis: usize, s: i64| if axis == 0 { (s, 0) } else { (0, s) };
    let slots: Vec<Vec<usize>> = (0..dim)
        .map(|k| {
            let (a, b) = e(k, -1);
            let (c, d) = e(k, 1);
            vec![slot(&m, a, b), slot(&m, c, d)]
        })
        .collect();
    for i in 0..grid.len() {
        let ai = alpha.values[i];
        for k in 0..dim {
            let ip = grid.neighbor(i, k, 1);
            let im = grid.neighbor(i, k, -1);
            let ap = 0.5 * (ai[k][k] + alpha.values[ip][k][k]);
            let am = 0.5 * (ai[k][k] + alpha.values[im][k][k]);
            m.add(i, slots[k][1], ap * ih2);
            m.add(i, slots[k][0], am * ih2);
            m.add(i, 0, -(ap + am) * ih2);
        }
        if cross {
            for k in 0..2 {
                let l = 1 - k;
                let ip = grid.neighbor(i, k, 1);
                let im = grid.neighbor(i, k, -1);
                let cp = 0.5 * (ai[k][l] + alpha.values[ip][k][l]) * 0.25 * ih2;
                let cm = 0.5 * (ai[k][l] + alpha.values[im][k][l]) * 0.25 * ih2;
                // Offsets as (axis k, axis l) pairs mapped to (di, dj).
                let off = |sk: i64, sl: i64| if k == 0 { (sk, sl) } else { (sl, sk) };
                let mut put = |sk: i64, sl: i64, v: f64| {
                    let (di, dj) = off(sk, sl);
                    let s = m.slot(di, dj);
                    m.add(i, s, v);
                };
                // + face i+½e_k
                put(0, 1, cp);
                put(0, -1, -cp);
                put(1, 1, cp);
                put(1, -1, -cp);
                // − face i−½e_k
                put(-1, 1, -cm);
                put(-1, -1, cm);
                put(0, 1, -cm);
                put(0, -1, cm);
            }
        }
        if let Some(al) = alpha_lin {
            let c = al.values[i];
            for k in 0..dim {
                let v = c[k] * 0.5 / h;
                m.add(i, slots[k][1], v);
                m.add(i, slots[k][0], -v);
            }
        }
        if let Some(z) = zeroth {
            m.add(i, 0, z.values[i]);
        }
    }
    m
}

/// `f^0 + ∂_i f^i` with the divergence taken on faces.
pub fn source_term(grid: PeriodicGrid, f0: Option<&ScalarField>, f_vec: Option<&VectorField>) -> Vec<f64> {
    let mut s = f0.map_or_else(|| vec![0.0; grid.len()], |f| f.values.clone());
    if let Some(fv) = f_vec {
        let inv = 0.5 / grid.h();
        for (i, si) in s.iter_mut().enumerate() {
            for k in 0..grid.dim() {
                *si += inv * (fv.values[grid.neighbor(i, k, 1)][k] - fv.values[grid.neighbor(i, k, -1)][k]);
            }
        }
    }
    s
}

/// One θ-step `(I − θ dt L₁) x = x₀ + (1−θ) dt L₀ x₀ + dt(θ S₁ + (1−θ) S₀) + extra`.
#[allow(clippy::too_many_arguments)]
pub fn theta_step(
    x: &mut Vec<f64>,
    l_old: &StencilMatrix,
    s_old: &[f64],
    l_new: &StencilMatrix,
    s_new: &[f64],
    extra: Option<&[f64]>,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<linalg::SolveStats> {
    let n = x.len();
    let theta = cfg.theta;
    let mut rhs = x.clone();
    if theta < 1.0 {
        let mut lx = vec![0.0; n];
        l_old.matvec(x, &mut lx);
        for i in 0..n {
            rhs[i] += (1.0 - theta) * dt * (lx[i] + s_old[i]);
        }
    }
    for i in 0..n {
        rhs[i] += theta * dt * s_new[i];
    }
    if let Some(e) = extra {
        for i in 0..n {
            rhs[i] += e[i];
        }
    }
    if theta == 0.0 {
        *x = rhs;
        return Ok(linalg::SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let sys = l_new.identity_plus(-theta * dt);
    let mut sol = x.clone();
    let stats = linalg::solve(&sys, &rhs, &mut sol, cfg.tol, cfg.max_iter)?;
    *x = sol;
    Ok(stats)
}

fn check_finite_and_bound(u: &[f64], t: f64, bound: f64) -> Result<()> {
    let sup = u.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    if sup > bound {
        return Err(Error::BlowUp { t, sup });
    }
    Ok(())
}

/// Streams the `z`-equation of the pathwise PDE level by level.
pub struct RandomPdeStepper {
    cfg: SolverConfig,
    dt: f64,
    l_old: StencilMatrix,
    s_old: Vec<f64>,
    pub z: ScalarField,
}

impl RandomPdeStepper {
    pub fn new(tc0: &TransformedCoefficients, z0: ScalarField, dt: f64, cfg: SolverConfig) -> Result<Self> {
        if !tc0.degenerate.is_empty() {
            return Err(Error::DegenerateCoefficients {
                count: tc0.degenerate.len(),
            });
        }
        let grid = z0.grid;
        Ok(Self {
            cfg,
            dt,
            l_old: assemble_operator(&tc0.alpha, Some(&tc0.alpha_lin), None),
            s_old: source_term(grid, Some(&tc0.fbar0), Some(&tc0.fbar_vec)),
            z: z0,
        })
    }

    /// Advance to the level described by `tc`.
    pub fn step(&mut self, tc: &TransformedCoefficients) -> Result<&ScalarField> {
        if !tc.degenerate.is_empty() {
            return Err(Error::DegenerateCoefficients {
                count: tc.degenerate.len(),
            });
        }
        let grid = self.z.grid;
        let l_new = assemble_operator(&tc.alpha, Some(&tc.alpha_lin), None);
        let s_new = source_term(grid, Some(&tc.fbar0), Some(&tc.fbar_vec));
        theta_step(
            &mut self.z.values,
            &self.l_old,
            &self.s_old,
            &l_new,
            &s_new,
            None,
            self.dt,
            &self.cfg,
        )?;
        check_finite_and_bound(&self.z.values, tc.t, self.cfg.blowup_bound)?;
        self.l_old = l_new;
        self.s_old = s_new;
        Ok(&self.z)
    }
}

/// Solve the pathwise PDE over the given levels. When `h` is supplied the
/// levels must carry the `h`-corrected right-hand sides and the returned
/// fields are `v = z + h`.
pub fn solve_random_pde(
    levels: &[TransformedCoefficients],
    h: Option<&[ScalarField]>,
    v0: &ScalarField,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<Vec<ScalarField>> {
    cfg.validate()?;
    let add_h = |z: &ScalarField, k: usize| -> ScalarField {
        match h {
            Some(h) => ScalarField {
                grid: z.grid,
                values: z.values.iter().zip(&h[k].values).map(|(a, b)| a + b).collect(),
            },
            None => z.clone(),
        }
    };
    let mut z0 = v0.clone();
    if let Some(h) = h {
        for (z, hv) in z0.values.iter_mut().zip(&h[0].values) {
            *z -= hv;
        }
    }
    let mut st = RandomPdeStepper::new(&levels[0], z0, dt, *cfg)?;
    let mut out = vec![add_h(&st.z, 0)];
    for (k, tc) in levels.iter().enumerate().skip(1) {
        let z = st.step(tc)?.clone();
        out.push(add_h(&z, k));
    }
    Ok(out)
}

/// `u(y) = v(Ψ(y))` with multilinear interpolation of `v`.
pub fn compose_back(v: &ScalarField, inverse: &InverseFlowField) -> ScalarField {
    let grid = v.grid;
    ScalarField {
        grid,
        values: (0..grid.len())
            .map(|i| v.interpolate(inverse.node_image(i)))
            .collect(),
    }
}

/// Largest `‖(b_n(t, x))_n‖_{ℓ²}` over the nodes of `grid`.
pub fn max_noise_norm(family: &dyn NoiseFamily, grid: PeriodicGrid, t: f64) -> f64 {
    let mut modes = vec![ModeEval::default(); family.modes()];
    let mut worst: f64 = 0.0;
    for x in grid.nodes() {
        family.eval(t, x, Order::Value, &mut modes);
        let s: f64 = modes.iter().map(|m| m.b[0] * m.b[0] + m.b[1] * m.b[1]).sum();
        worst = worst.max(s.sqrt());
    }
    worst
}

/// `dt ≤ cfl·h / max ‖b‖`.
pub fn check_cfl(family: &dyn NoiseFamily, grid: PeriodicGrid, dt: f64, cfl: f64) -> Result<()> {
    let b = max_noise_norm(family, grid, 0.0);
    if b > 0.0 {
        let limit = cfl * grid.h() / b;
        if dt > limit {
            return Err(Error::Cfl { dt, limit });
        }
    }
    Ok(())
}

/// Semi-implicit stepper for the SPDE in its original coordinates.
///
/// Diffusion, drift and zeroth order are θ-implicit; the noise
/// `Σ_n (b_n·∇u + b^0_n u + g_n) ΔW_n` is explicit with central gradients.
pub struct DirectStepper<'a> {
    coeffs: &'a CoefficientSet,
    family: &'a dyn NoiseFamily,
    cfg: SolverConfig,
    dt: f64,
    pub u: ScalarField,
    pub t: f64,
    /// Noise coefficients `G_n^k` of the last step taken.
    pub last_noise: Vec<ScalarField>,
    cached_b: Option<Vec<Vec<Vec2>>>,
    lin: Option<VectorField>,
    zeroth: Option<ScalarField>,
    l_old: Option<StencilMatrix>,
    s_old: Vec<f64>,
    static_lower: bool,
}

impl<'a> DirectStepper<'a> {
    pub fn new(
        coeffs: &'a CoefficientSet,
        family: &'a dyn NoiseFamily,
        u0: ScalarField,
        dt: f64,
        cfg: SolverConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let grid = u0.grid;
        check_cfl(family, grid, dt, cfg.cfl)?;
        let cached_b = family.time_independent().then(|| node_modes(family, grid, 0.0));
        let static_lower = coeffs.a_lin.as_ref().is_none_or(|c| c.time_independent())
            && coeffs.a0.as_ref().is_none_or(|c| c.time_independent());
        let lin = coeffs.a_lin.as_ref().map(|c| c.sample(grid, 0.0));
        let zeroth = coeffs.a0.as_ref().map(|c| c.sample(grid, 0.0));
        let s_old = forcing(coeffs, grid, 0.0);
        Ok(Self {
            coeffs,
            family,
            cfg,
            dt,
            u: u0,
            t: 0.0,
            last_noise: Vec::new(),
            cached_b,
            lin,
            zeroth,
            l_old: None,
            s_old,
            static_lower,
        })
    }

    fn noise_increment(&mut self, dw: &[f64]) -> Vec<f64> {
        self.last_noise = match &self.cached_b {
            Some(b) => noise_from_modes(self.coeffs, b, &self.u, self.t),
            None => noise_coefficients(self.coeffs, self.family, &self.u, self.t),
        };
        let mut incr = vec![0.0; self.u.grid.len()];
        for (gn, w) in self.last_noise.iter().zip(dw) {
            for (r, v) in incr.iter_mut().zip(&gn.values) {
                *r += v * w;
            }
        }
        incr
    }

    /// One step with explicit-part diffusion `a_old` and implicit-part `a_new`.
    pub fn step_with_diffusion(&mut self, a_old: &MatrixField, a_new: &MatrixField, dw: &[f64]) -> Result<()> {
        let grid = self.u.grid;
        let t_new = self.t + self.dt;
        let incr = self.noise_increment(dw);
        if !self.static_lower {
            self.lin = self.coeffs.a_lin.as_ref().map(|c| c.sample(grid, t_new));
            self.zeroth = self.coeffs.a0.as_ref().map(|c| c.sample(grid, t_new));
        }
        let l_old = match self.l_old.take() {
            Some(l) if self.cfg.theta < 1.0 => l,
            _ => assemble_operator(a_old, self.lin.as_ref(), self.zeroth.as_ref()),
        };
        let l_new = assemble_operator(a_new, self.lin.as_ref(), self.zeroth.as_ref());
        let s_new = forcing(self.coeffs, grid, t_new);
        theta_step(
            &mut self.u.values,
            &l_old,
            &self.s_old,
            &l_new,
            &s_new,
            Some(&incr),
            self.dt,
            &self.cfg,
        )?;
        check_finite_and_bound(&self.u.values, t_new, self.cfg.blowup_bound)?;
        self.l_old = Some(l_new);
        self.s_old = s_new;
        self.t = t_new;
        Ok(())
    }
}

/// `G_n = b_n·∇u + b^0_n u + g_n` at the nodes, with central gradients.
pub fn noise_coefficients(
    coeffs: &CoefficientSet,
    family: &dyn NoiseFamily,
    u: &ScalarField,
    t: f64,
) -> Vec<ScalarField> {
    noise_from_modes(coeffs, &node_modes(family, u.grid, t), u, t)
}

fn noise_from_modes(coeffs: &CoefficientSet, modes: &[Vec<Vec2>], u: &ScalarField, t: f64) -> Vec<ScalarField> {
    let grid = u.grid;
    let dim = grid.dim();
    let grad = u.gradient();
    modes
        .iter()
        .enumerate()
        .map(|(n, bn)| {
            let b0 = coeffs.b0.as_ref().and_then(|v| v.get(n));
            let g = coeffs.g.as_ref().and_then(|v| v.get(n));
            let values = (0..grid.len())
                .map(|i| {
                    let mut v = 0.0;
                    for k in 0..dim {
                        v += bn[i][k] * grad.values[i][k];
                    }
                    if let Some(b0) = b0 {
                        v += b0.eval(t, grid.node(i)) * u.values[i];
                    }
                    if let Some(g) = g {
                        v += g.eval(t, grid.node(i));
                    }
                    v
                })
                .collect();
            ScalarField { grid, values }
        })
        .collect()
}

fn node_modes(family: &dyn NoiseFamily, grid: PeriodicGrid, t: f64) -> Vec<Vec<Vec2>> {
    let mut out = vec![vec![[0.0; 2]; grid.len()]; family.modes()];
    let mut modes = vec![ModeEval::default(); family.modes()];
    for (i, x) in grid.nodes().enumerate() {
        family.eval(t, x, Order::Value, &mut modes);
        for (n, m) in modes.iter().enumerate() {
            out[n][i] = m.b;
        }
    }
    out
}

fn forcing(coeffs: &CoefficientSet, grid: PeriodicGrid, t: f64) -> Vec<f64> {
    let f0 = coeffs.f0.as_ref().map(|c| c.sample(grid, t));
    let fv = coeffs.f_vec.as_ref().map(|c| c.sample(grid, t));
    source_term(grid, f0.as_ref(), fv.as_ref())
}

/// Solve the SPDE directly on the increments of `path`.
pub fn solve_spde_direct(
    coeffs: &CoefficientSet,
    family: &dyn NoiseFamily,
    u0: &ScalarField,
    path: &BrownianPath,
    cfg: &SolverConfig,
    record_every: usize,
) -> Result<Solution> {
    let grid = u0.grid;
    let mut st = DirectStepper::new(coeffs, family, u0.clone(), path.dt, *cfg)?;
    let mut sol = Solution::new();
    sol.push(0, 0.0, u0);
    let static_a = coeffs.a.time_independent();
    let mut a_old = coeffs.a.sample(grid, 0.0);
    for k in 0..path.steps {
        let t_new = (k + 1) as f64 * path.dt;
        let a_new = if static_a {
            a_old.clone()
        } else {
            coeffs.a.sample(grid, t_new)
        };
        st.step_with_diffusion(&a_old, &a_new, path.step(k))?;
        a_old = a_new;
        if should_record(k + 1, record_every, path.steps) {
            sol.push(k + 1, t_new, &st.u);
        }
    }
    Ok(sol)
}

/// Quasilinear diffusion `A(t, x, y)`.
pub type QuasiFn<'a> = &'a (dyn Fn(f64, Vec2, f64) -> Mat2 + Sync);

/// Solve `dU = ∂_i(A^{ij}(U) ∂_j U) dt + Σ_n b_n·∇U dw^n` by freezing `A` at the
/// previous iterate: the step from `t_k` uses `A(·, x, U^k(x))`.
pub fn solve_quasilinear(
    a_fn: QuasiFn<'_>,
    family: &dyn NoiseFamily,
    u0: &ScalarField,
    path: &BrownianPath,
    cfg: &SolverConfig,
    record_every: usize,
) -> Result<Solution> {
    let grid = u0.grid;
    let dim = grid.dim();
    let base = CoefficientSet::identity_diffusion(dim);
    let mut st = DirectStepper::new(&base, family, u0.clone(), path.dt, *cfg)?;
    let cov: Vec<Mat2> = {
        let mut modes = vec![ModeEval::default(); family.modes()];
        grid.nodes()
            .map(|x| {
                family.eval(0.0, x, Order::Value, &mut modes);
                crate::noise::noise_covariance(&modes)
            })
            .collect()
    };
    let mut sol = Solution::new();
    sol.push(0, 0.0, u0);
    for k in 0..path.steps {
        let t_old = k as f64 * path.dt;
        let t_new = (k + 1) as f64 * path.dt;
        let frozen = |t: f64| MatrixField {
            grid,
            values: (0..grid.len())
                .map(|i| a_fn(t, grid.node(i), st.u.values[i]))
                .collect(),
        };
        let a_new = frozen(t_new);
        let a_old = if cfg.theta < 1.0 { frozen(t_old) } else { a_new.clone() };
        for (i, a) in a_new.values.iter().enumerate() {
            let m = small::sub(a, &small::scale(&cov[i], 0.5));
            let (lo, _) = small::sym_eigs(&m, dim);
            if !(lo > 0.0) {
                return Err(Error::Parabolicity {
                    nu_hat: lo,
                    nu: 0.0,
                    m_hat: f64::NAN,
                    m: f64::NAN,
                });
            }
        }
        st.step_with_diffusion(&a_old, &a_new, path.step(k))?;
        if should_record(k + 1, record_every, path.steps) {
            sol.push(k + 1, t_new, &st.u);
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::Coeff;
    use std::f64::consts::PI;

    fn heat_levels(grid: PeriodicGrid, steps: usize) -> Vec<TransformedCoefficients> {
        let id = small::identity(grid.dim());
        let tc = TransformedCoefficients {
            t: 0.0,
            alpha: MatrixField::constant(grid, id),
            alpha_lin: VectorField::zeros(grid),
            f0: ScalarField::zeros(grid),
            f_vec: VectorField::zeros(grid),
            g: vec![],
            fbar0: ScalarField::zeros(grid),
            fbar_vec: VectorField::zeros(grid),
            degenerate: vec![],
        };
        vec![tc; steps + 1]
    }

    #[test]
    fn operator_kills_constants_and_conserves_mass() {
        let g = PeriodicGrid::new(2, 16).unwrap();
        let alpha = MatrixField::from_fn(g, |x| {
            let s = (2.0 * PI * x[0]).sin();
            [[1.5 + 0.5 * s, 0.3 * s], [0.3 * s, 1.2]]
        });
        let l = assemble_operator(&alpha, None, None);
        let mut y = vec![0.0; g.len()];
        l.matvec(&vec![2.0; g.len()], &mut y);
        assert!(y.iter().all(|v| v.abs() < 1e-10));
        let x: Vec<f64> = (0..g.len()).map(|i| ((i * 37) % 11) as f64).collect();
        l.matvec(&x, &mut y);
        assert!(y.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn constant_initial_data_stays_constant() {
        let g = PeriodicGrid::new(1, 32).unwrap();
        let levels = heat_levels(g, 10);
        let v0 = ScalarField::constant(g, 0.7);
        let v = solve_random_pde(&levels, None, &v0, 1e-3, &SolverConfig::default()).unwrap();
        assert!(v.last().unwrap().values.iter().all(|x| (x - 0.7).abs() < 1e-12));
    }

    #[test]
    fn direct_zero_data_stays_zero() {
        let g = PeriodicGrid::new(1, 32).unwrap();
        let coeffs = CoefficientSet::diffusion_only(1, Coeff::Constant(small::identity(1)), 1.0, 1.0);
        let fam = crate::noise::ConstantNoise {
            dim: 1,
            c: vec![[0.3, 0.0]],
        };
        let path = crate::noise::sample_brownian_increments(1, 20, 1, 1e-4);
        let sol = solve_spde_direct(&coeffs, &fam, &ScalarField::zeros(g), &path, &SolverConfig::default(), 5).unwrap();
        assert!(sol.last().values.iter().all(|v| *v == 0.0));
        assert_eq!(sol.levels, vec![0, 5, 10, 15, 20]);
    }

    #[test]
    fn cfl_guard_rejects_large_steps() {
        let g = PeriodicGrid::new(1, 64).unwrap();
        let fam = crate::noise::ConstantNoise {
            dim: 1,
            c: vec![[1.0, 0.0]],
        };
        assert!(matches!(check_cfl(&fam, g, 0.1, 0.25), Err(Error::Cfl { .. })));
        assert!(check_cfl(&fam, g, 1e-4, 0.25).is_ok());
    }
}
