//! Sparse periodic stencil matrices and Krylov solvers.

use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;

/// Which neighbours a row couples to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// Centre plus ±1 along each axis (3 points in 1D, 5 in 2D).
    Compact,
    /// Full 3×3 block in 2D (needed for mixed derivatives).
    Full,
}

impl Stencil {
    pub fn offsets(self, dim: usize) -> Vec<(i64, i64)> {
        match (dim, self) {
            (1, _) => vec![(0, 0), (-1, 0), (1, 0)],
            (_, Stencil::Compact) => vec![(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)],
            (_, Stencil::Full) => {
                let mut v = vec![(0, 0)];
                for dj in -1..=1 {
                    for di in -1..=1 {
                        if (di, dj) != (0, 0) {
                            v.push((di, dj));
                        }
                    }
                }
                v
            }
        }
    }
}

/// Row-wise stencil matrix on a periodic grid. Column `k` of row `i` multiplies
/// the value at `nbr[i·w + k]`; column 0 is always the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilMatrix {
    pub grid: PeriodicGrid,
    pub offsets: Vec<(i64, i64)>,
    pub width: usize,
    pub nbr: Vec<usize>,
    pub coef: Vec<f64>,
}

impl StencilMatrix {
    pub fn zeros(grid: PeriodicGrid, stencil: Stencil) -> Self {
        let offsets = stencil.offsets(grid.dim());
        let width = offsets.len();
        let mut nbr = Vec::with_capacity(grid.len() * width);
        for idx in 0..grid.len() {
            let [i0, i1] = grid.multi_index(idx);
            for (di, dj) in &offsets {
                nbr.push(grid.flat_index(i0 as i64 + di, i1 as i64 + dj));
            }
        }
        Self {
            grid,
            offsets,
            width,
            nbr,
            coef: vec![0.0; grid.len() * width],
        }
    }

    /// Column slot of offset `(di, dj)`.
    pub fn slot(&self, di: i64, dj: i64) -> usize {
        self.offsets
            .iter()
            .position(|o| *o == (di, dj))
            .expect("offset present in stencil")
    }

    pub fn rows(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn add(&mut self, row: usize, slot: usize, v: f64) {
        self.coef[row * self.width + slot] += v;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let w = self.width;
        for (i, yi) in y.iter_mut().enumerate() {
            let c = &self.coef[i * w..(i + 1) * w];
            let nb = &self.nbr[i * w..(i + 1) * w];
            let mut s = 0.0;
            for k in 0..w {
                s += c[k] * x[nb[k]];
            }
            *yi = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows()).map(|i| self.coef[i * self.width]).collect()
    }

    /// `I + s·self`.
    pub fn identity_plus(&self, s: f64) -> StencilMatrix {
        let mut m = self.clone();
        for (i, row) in m.coef.chunks_mut(self.width).enumerate() {
            let _ = i;
            for c in row.iter_mut() {
                *c *= s;
            }
            row[0] += 1.0;
        }
        m
    }

    /// Exact structural-and-numerical symmetry test.
    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.rows() {
            for k in 0..self.width {
                let j = self.nbr[i * self.width + k];
                let (di, dj) = self.offsets[k];
                let back = self.slot(-di, -dj);
                if self.coef[i * self.width + k] != self.coef[j * self.width + back] {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients for symmetric positive definite `a`.
/// `x` holds the initial guess. Convergence: `‖b − Ax‖ ≤ tol·‖b‖`.
pub fn cg(a: &StencilMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = b.len();
    let dinv: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rn = dot(&r, &r).sqrt();
    if rn <= tol * bnorm {
        return Ok(SolveStats {
            iterations: 0,
            residual: rn / bnorm,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rn = dot(&r, &r).sqrt();
        if rn <= tol * bnorm {
            return Ok(SolveStats {
                iterations: it,
                residual: rn / bnorm,
            });
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolve {
        iters: max_iter,
        residual: rn / bnorm,
    })
}

/// Jacobi-preconditioned BiCGSTAB for general `a`.
pub fn bicgstab(
    a: &StencilMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let dinv: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rn = dot(&r, &r).sqrt();
    if rn <= tol * bnorm {
        return Ok(SolveStats {
            iterations: 0,
            residual: rn / bnorm,
        });
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zz = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * dinv[i];
        }
        a.matvec(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let sn = dot(&s, &s).sqrt();
        if sn <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(SolveStats {
                iterations: it,
                residual: sn / bnorm,
            });
        }
        for i in 0..n {
            zz[i] = s[i] * dinv[i];
        }
        a.matvec(&zz, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zz[i];
            r[i] = s[i] - omega * t[i];
        }
        rn = dot(&r, &r).sqrt();
        if rn <= tol * bnorm {
            return Ok(SolveStats {
                iterations: it,
                residual: rn / bnorm,
            });
        }
    }
    Err(Error::LinearSolve {
        iters: max_iter,
        residual: rn / bnorm,
    })
}

/// CG when `a` is symmetric, BiCGSTAB otherwise.
pub fn solve(a: &StencilMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
    if a.is_symmetric() {
        cg(a, b, x, tol, max_iter)
    } else {
        bicgstab(a, b, x, tol, max_iter)
    }
}

/// Standard periodic `(2d+1)`-point Laplacian.
pub fn laplacian(grid: PeriodicGrid) -> StencilMatrix {
    let mut m = StencilMatrix::zeros(grid, Stencil::Compact);
    let ih2 = 1.0 / (grid.h() * grid.h());
    let d = grid.dim();
    for i in 0..grid.len() {
        m.add(i, 0, -2.0 * d as f64 * ih2);
        for k in 1..m.width {
            m.add(i, k, ih2);
        }
    }
    m
}
