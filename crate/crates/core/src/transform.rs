//! From the SPDE and a flow to the pathwise parabolic PDE for `v = u∘ξ`.
//!
//! With `ψ = (Dξ)^{-1}`, `A = a − ½Σ b_n⊗b_n` and everything evaluated at
//! `ξ_t(x)`:
//!
//! ```text
//! α    = ψ A ψᵀ
//! α^l  = ψ^l_k (μ^k + a^k − ½ b_n^j ∂_j b_n^k + ½ (div b_n) b_n^k) − (∂_k ψ^k_i) A^{ij} ψ^l_j
//! F^0  = f^0 − (∂_j ψ^j_i) f^i + ∂_j(b_n^i ψ^j_i) g_n
//! F^i  = ψ^i_j (f^j − b_n^j g_n)
//! G_n  = g_n
//! ```
//!
//! `∂_k ψ = −ψ (∂_k Dξ) ψ` with `∂_k Dξ` from central differences.

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::flow::{drift_from_modes, FlowState};
use crate::grid::{Field, MatrixField, PeriodicGrid, ScalarField, VectorField};
use crate::linalg::{self, StencilMatrix};
use crate::noise::{BrownianPath, ModeEval, NoiseFamily, Order};
use crate::small::{self, Mat2, Vec2, ZERO_V};

/// Pathwise PDE data at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedCoefficients {
    pub t: f64,
    pub alpha: MatrixField,
    pub alpha_lin: VectorField,
    pub f0: ScalarField,
    pub f_vec: VectorField,
    pub g: Vec<ScalarField>,
    /// Right-hand sides of the `z = v − h` equation; equal to `f0`, `f_vec`
    /// until [`apply_h`](TransformedCoefficients::apply_h) is called.
    pub fbar0: ScalarField,
    pub fbar_vec: VectorField,
    /// Nodes where `sym(α)` is not positive definite.
    pub degenerate: Vec<usize>,
}

impl TransformedCoefficients {
    pub fn apply_h(&mut self, h: &ScalarField) {
        let (f0, fv) = combined_rhs(&self.f0, &self.f_vec, &self.alpha, &self.alpha_lin, h);
        self.fbar0 = f0;
        self.fbar_vec = fv;
    }
}

/// `w_j = Σ_k ∂_k ψ^k_j` at every node.
fn psi_divergence(state: &FlowState) -> VectorField {
    let grid = state.grid();
    let dim = grid.dim();
    let d_axes: Vec<MatrixField> = (0..dim).map(|k| state.jacobian.central_diff(k)).collect();
    let values = (0..grid.len())
        .map(|idx| {
            let psi = state.inv_jacobian.values[idx];
            let mut w = ZERO_V;
            for (k, dk) in d_axes.iter().enumerate() {
                let dpsi = small::scale(&small::mat_mul(&small::mat_mul(&psi, &dk.values[idx]), &psi), -1.0);
                for (j, wj) in w.iter_mut().enumerate().take(dim) {
                    *wj += dpsi[k][j];
                }
            }
            w
        })
        .collect();
    Field { grid, values }
}

fn congruence(psi: &Mat2, m: &Mat2) -> Mat2 {
    small::mat_mul(&small::mat_mul(psi, m), &small::transpose(psi))
}

/// `α = ψ (a − ½ Σ_n b_n⊗b_n) ψᵀ` at a single point, with `a` and the modes
/// evaluated at the flow position.
pub fn transformed_diffusion(a: &Mat2, modes: &[ModeEval], psi: &Mat2) -> Mat2 {
    let cov = crate::noise::noise_covariance(modes);
    congruence(psi, &small::sub(a, &small::scale(&cov, 0.5)))
}

/// `(α, α^i, degenerate nodes)` at the state's time.
pub fn transformed_coefficients(
    coeffs: &CoefficientSet,
    family: &dyn NoiseFamily,
    state: &FlowState,
) -> Result<(MatrixField, VectorField, Vec<usize>)> {
    let grid = state.grid();
    let dim = grid.dim();
    let t = state.t;
    let w = if family.modes() > 0 {
        Some(psi_divergence(state))
    } else {
        None
    };
    let mut modes = vec![ModeEval::default(); family.modes()];
    let mut alpha = Vec::with_capacity(grid.len());
    let mut alpha_lin = Vec::with_capacity(grid.len());
    let mut degenerate = Vec::new();
    for idx in 0..grid.len() {
        let xi = state.position(idx);
        family.eval(t, xi, Order::First, &mut modes);
        let psi = state.inv_jacobian.values[idx];
        let a = coeffs.a.eval(t, xi);
        let mut big_a = a;
        let mut c = coeffs.a_lin.as_ref().map_or(ZERO_V, |al| al.eval(t, xi));
        let mu = drift_from_modes(&modes);
        for m in &modes {
            big_a = small::sub(&big_a, &small::scale(&small::outer(&m.b, &m.b), 0.5));
            let div = m.div();
            let bgb = small::mat_vec(&m.jac, &m.b);
            for k in 0..dim {
                c[k] += 0.5 * div * m.b[k] - 0.5 * bgb[k];
            }
        }
        for k in 0..dim {
            c[k] += mu[k];
        }
        let al = congruence(&psi, &big_a);
        let mut lin = small::mat_vec(&psi, &c);
        if let Some(w) = &w {
            let aw = small::mat_vec(&small::transpose(&big_a), &w.values[idx]);
            let corr = small::mat_vec(&psi, &aw);
            for l in 0..dim {
                lin[l] -= corr[l];
            }
        }
        if !small::is_finite(&al) {
            return Err(Error::Transformation { node: idx, what: "alpha" });
        }
        if !(lin[0].is_finite() && lin[1].is_finite()) {
            return Err(Error::Transformation {
                node: idx,
                what: "alpha_lin",
            });
        }
        if small::sym_eigs(&al, dim).0 <= 0.0 {
            degenerate.push(idx);
        }
        alpha.push(al);
        alpha_lin.push(lin);
    }
    Ok((
        Field {
            grid,
            values: alpha,
        },
        Field {
            grid,
            values: alpha_lin,
        },
        degenerate,
    ))
}

/// `(F^0, F^i, G_n)` at the state's time.
pub fn transformed_rhs(
    coeffs: &CoefficientSet,
    family: &dyn NoiseFamily,
    state: &FlowState,
) -> Result<(ScalarField, VectorField, Vec<ScalarField>)> {
    let grid = state.grid();
    let dim = grid.dim();
    let t = state.t;
    let n_modes = family.modes();
    let g_count = coeffs.g.as_ref().map_or(0, Vec::len);
    if !coeffs.has_forcing() {
        return Ok((
            ScalarField::zeros(grid),
            VectorField::zeros(grid),
            vec![ScalarField::zeros(grid); g_count],
        ));
    }
    let w = psi_divergence(state);
    let mut modes = vec![ModeEval::default(); n_modes];
    let mut f0 = vec![0.0; grid.len()];
    let mut fv = vec![ZERO_V; grid.len()];
    let mut gs = vec![vec![0.0; grid.len()]; g_count];
    // ψ b_n per mode, differentiated afterwards.
    let mut pb: Vec<Vec<Vec2>> = vec![vec![ZERO_V; grid.len()]; g_count.min(n_modes)];
    for idx in 0..grid.len() {
        let xi = state.position(idx);
        family.eval(t, xi, Order::Value, &mut modes);
        let psi = state.inv_jacobian.values[idx];
        let fvec = coeffs.f_vec.as_ref().map_or(ZERO_V, |f| f.eval(t, xi));
        let mut s = fvec;
        let mut f00 = coeffs.f0.as_ref().map_or(0.0, |f| f.eval(t, xi));
        let wv = w.values[idx];
        f00 -= wv[0] * fvec[0] + wv[1] * fvec[1];
        if let Some(g) = &coeffs.g {
            for (n, gn) in g.iter().enumerate() {
                let gv = gn.eval(t, xi);
                gs[n][idx] = gv;
                if n < n_modes {
                    for k in 0..dim {
                        s[k] -= modes[n].b[k] * gv;
                    }
                    pb[n][idx] = small::mat_vec(&psi, &modes[n].b);
                }
            }
        }
        f0[idx] = f00;
        fv[idx] = small::mat_vec(&psi, &s);
    }
    // + ∂_j(ψ^j_i b_n^i) g_n
    for (n, p) in pb.into_iter().enumerate() {
        let pf = VectorField { grid, values: p };
        for k in 0..dim {
            let d = pf.central_diff(k);
            for idx in 0..grid.len() {
                f0[idx] += d.values[idx][k] * gs[n][idx];
            }
        }
    }
    let f0 = ScalarField { grid, values: f0 };
    let fv = VectorField { grid, values: fv };
    if let Some(i) = f0.first_non_finite() {
        return Err(Error::Transformation { node: i, what: "F0" });
    }
    if let Some(i) = fv.first_non_finite() {
        return Err(Error::Transformation { node: i, what: "F" });
    }
    Ok((
        f0,
        fv,
        gs.into_iter()
            .map(|values| ScalarField { grid, values })
            .collect(),
    ))
}

/// Assemble every pathwise coefficient at the state's time.
pub fn transform_level(
    coeffs: &CoefficientSet,
    family: &dyn NoiseFamily,
    state: &FlowState,
) -> Result<TransformedCoefficients> {
    let (alpha, alpha_lin, degenerate) = transformed_coefficients(coeffs, family, state)?;
    let (f0, f_vec, g) = transformed_rhs(coeffs, family, state)?;
    Ok(TransformedCoefficients {
        t: state.t,
        fbar0: f0.clone(),
        fbar_vec: f_vec.clone(),
        alpha,
        alpha_lin,
        f0,
        f_vec,
        g,
        degenerate,
    })
}

/// `F̄^0 = F^0 + α^i ∂_i h`, `F̄^i = F^i + α^{ij} ∂_j h − ∂_i h`.
pub fn combined_rhs(
    f0: &ScalarField,
    f_vec: &VectorField,
    alpha: &MatrixField,
    alpha_lin: &VectorField,
    h: &ScalarField,
) -> (ScalarField, VectorField) {
    let grid = f0.grid;
    let dim = grid.dim();
    let gh = h.gradient();
    let mut o0 = f0.clone();
    let mut ov = f_vec.clone();
    for idx in 0..grid.len() {
        let dh = gh.values[idx];
        let a = alpha.values[idx];
        let al = alpha_lin.values[idx];
        let adh = small::mat_vec(&a, &dh);
        for i in 0..dim {
            o0.values[idx] += al[i] * dh[i];
            ov.values[idx][i] += adh[i] - dh[i];
        }
    }
    (o0, ov)
}

/// Implicit heat stepper `(I − dt Δ_h) h^{k+1} = h^k + Σ_n G_n^k ΔW_n^k`.
pub struct HSolver {
    system: StencilMatrix,
    pub h: ScalarField,
    tol: f64,
    max_iter: usize,
}

impl HSolver {
    pub fn new(grid: PeriodicGrid, dt: f64, tol: f64, max_iter: usize) -> Self {
        Self {
            system: linalg::laplacian(grid).identity_plus(-dt),
            h: ScalarField::zeros(grid),
            tol,
            max_iter,
        }
    }

    pub fn step(&mut self, g: &[ScalarField], dw: &[f64]) -> Result<&ScalarField> {
        let mut rhs = self.h.values.clone();
        for (gn, w) in g.iter().zip(dw) {
            for (r, v) in rhs.iter_mut().zip(&gn.values) {
                *r += v * w;
            }
        }
        let mut x = self.h.values.clone();
        linalg::cg(&self.system, &rhs, &mut x, self.tol, self.max_iter)?;
        self.h.values = x;
        Ok(&self.h)
    }
}

/// `h` at levels `0..=K` given `G` at levels `0..K`.
pub fn solve_h(
    g_levels: &[Vec<ScalarField>],
    grid: PeriodicGrid,
    path: &BrownianPath,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<ScalarField>> {
    let mut s = HSolver::new(grid, path.dt, tol, max_iter);
    let mut out = vec![s.h.clone()];
    for (k, g) in g_levels.iter().enumerate().take(path.steps) {
        out.push(s.step(g, path.step(k))?.clone());
    }
    Ok(out)
}

/// `sym(α)` eigenvalue bounds `(λ_min, λ_max)` at one node.
pub fn alpha_eigs(alpha: &Mat2, dim: usize) -> (f64, f64) {
    small::sym_eigs(alpha, dim)
}

/// Identity-map sanity helper: `α = a`, `α^i = a^i` when nothing moves.
pub fn passthrough(coeffs: &CoefficientSet, grid: PeriodicGrid, t: f64) -> (MatrixField, VectorField) {
    (
        coeffs.a.sample(grid, t),
        coeffs
            .a_lin
            .as_ref()
            .map_or_else(|| VectorField::zeros(grid), |c| c.sample(grid, t)),
    )
}
