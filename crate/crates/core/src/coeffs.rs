//! SPDE data: diffusion, drift, zeroth order, forcing.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Field, Nodal, PeriodicGrid};
use crate::small::{Mat2, Vec2};

/// How a gridded coefficient is read at off-grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    #[default]
    Linear,
    /// Piecewise constant per cell; no smoothing of rough data.
    NearestCell,
}

type CoeffFn<T> = dyn Fn(f64, Vec2) -> T + Send + Sync;

/// A coefficient `c(t, x)` on the torus.
#[derive(Clone)]
pub enum Coeff<T: Nodal> {
    Constant(T),
    Grid { field: Field<T>, sampling: Sampling },
    Func { f: Arc<CoeffFn<T>>, time_independent: bool },
}

impl<T: Nodal> std::fmt::Debug for Coeff<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coeff::Constant(v) => write!(f, "Constant({v:?})"),
            Coeff::Grid { field, sampling } => {
                write!(f, "Grid(n = {}, {sampling:?})", field.grid.n())
            }
            Coeff::Func {
                time_independent, ..
            } => write!(f, "Func(time_independent = {time_independent})"),
        }
    }
}

impl<T: Nodal> Coeff<T> {
    pub fn func(f: impl Fn(f64, Vec2) -> T + Send + Sync + 'static) -> Self {
        Coeff::Func {
            f: Arc::new(f),
            time_independent: false,
        }
    }

    pub fn static_func(f: impl Fn(Vec2) -> T + Send + Sync + 'static) -> Self {
        Coeff::Func {
            f: Arc::new(move |_, x| f(x)),
            time_independent: true,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: Vec2) -> T {
        match self {
            Coeff::Constant(v) => *v,
            Coeff::Grid { field, sampling } => match sampling {
                Sampling::Linear => field.interpolate(x),
                Sampling::NearestCell => field.nearest_cell(x),
            },
            Coeff::Func { f, .. } => f(t, x),
        }
    }

    pub fn time_independent(&self) -> bool {
        match self {
            Coeff::Constant(_) | Coeff::Grid { .. } => true,
            Coeff::Func {
                time_independent, ..
            } => *time_independent,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coeff::Constant(_))
    }

    /// Values at the nodes of `grid`.
    pub fn sample(&self, grid: PeriodicGrid, t: f64) -> Field<T> {
        Field::from_fn(grid, |x| self.eval(t, x))
    }

    /// Values at arbitrary points.
    pub fn sample_at(&self, grid: PeriodicGrid, t: f64, points: impl Fn(usize) -> Vec2) -> Field<T> {
        Field {
            grid,
            values: (0..grid.len()).map(|i| self.eval(t, points(i))).collect(),
        }
    }
}

/// Piecewise-constant scalar diffusion `a(x)·Id` on a `cells^d` partition with
/// values uniform in `[low, high]`.
pub fn checkerboard(dim: usize, seed: u64, cells: usize, low: f64, high: f64) -> Coeff<Mat2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = if dim == 1 { cells } else { cells * cells };
    let values: Vec<f64> = (0..count).map(|_| rng.random_range(low..=high)).collect();
    Coeff::static_func(move |x| {
        let c = |s: f64| ((s * cells as f64).floor() as i64).rem_euclid(cells as i64) as usize;
        let v = if dim == 1 {
            values[c(x[0])]
        } else {
            values[c(x[0]) + cells * c(x[1])]
        };
        if dim == 1 {
            [[v, 0.0], [0.0, 0.0]]
        } else {
            [[v, 0.0], [0.0, v]]
        }
    })
}

/// Data of the linear SPDE
/// `du = [∂_i(a^{ij}∂_j u) + a^i∂_i u + a^0 u + f^0 + ∂_i f^i] dt + Σ_n (b_n·∇u + b^0_n u + g_n) dw^n`.
///
/// The noise fields `b_n` live in a separate [`NoiseFamily`](crate::noise::NoiseFamily).
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub dim: usize,
    pub a: Coeff<Mat2>,
    pub a_lin: Option<Coeff<Vec2>>,
    pub a0: Option<Coeff<f64>>,
    pub b0: Option<Vec<Coeff<f64>>>,
    pub f0: Option<Coeff<f64>>,
    pub f_vec: Option<Coeff<Vec2>>,
    pub g: Option<Vec<Coeff<f64>>>,
    /// Declared parabolicity constant.
    pub nu: f64,
    /// Declared bound.
    pub m: f64,
}

impl CoefficientSet {
    /// Diffusion `a` with every optional term absent.
    pub fn diffusion_only(dim: usize, a: Coeff<Mat2>, nu: f64, m: f64) -> Self {
        Self {
            dim,
            a,
            a_lin: None,
            a0: None,
            b0: None,
            f0: None,
            f_vec: None,
            g: None,
            nu,
            m,
        }
    }

    pub fn identity_diffusion(dim: usize) -> Self {
        Self::diffusion_only(dim, Coeff::Constant(crate::small::identity(dim)), 0.0, f64::INFINITY)
    }

    pub fn has_forcing(&self) -> bool {
        self.f0.is_some() || self.f_vec.is_some() || self.g.is_some()
    }

    pub fn has_g(&self) -> bool {
        self.g.as_ref().is_some_and(|g| !g.is_empty())
    }

    pub fn time_independent(&self) -> bool {
        let all = |v: &Option<Vec<Coeff<f64>>>| {
            v.as_ref()
                .is_none_or(|cs| cs.iter().all(Coeff::time_independent))
        };
        self.a.time_independent()
            && self.a_lin.as_ref().is_none_or(Coeff::time_independent)
            && self.a0.as_ref().is_none_or(Coeff::time_independent)
            && self.f0.as_ref().is_none_or(Coeff::time_independent)
            && self.f_vec.as_ref().is_none_or(Coeff::time_independent)
            && all(&self.b0)
            && all(&self.g)
    }
}
