//! Uniform periodic grids on the unit torus and the fields that live on them.
//!
//! Node `i` along an axis sits at `i·h` with `h = 1/n`. Flattened indices put
//! the first axis fastest: `idx = i0 + n·i1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::small::{Mat2, Vec2, ZERO_M, ZERO_V};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
    h: f64,
}

/// `i mod n` with a result in `[0, n)`.
#[inline]
pub fn wrap_index(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::config("grid.d", format!("dimension must be 1 or 2, got {dim}")));
        }
        if n < 8 {
            return Err(Error::config("grid.n", format!("need at least 8 nodes per axis, got {n}")));
        }
        let h = 1.0 / n as f64;
        if h * n as f64 != 1.0 {
            return Err(Error::config(
                "grid.n",
                format!("spacing 1/{n} does not satisfy h·n = 1 in floating point"),
            ));
        }
        Ok(Self { dim, n, h })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total node count `n^d`.
    #[inline]
    pub fn len(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.n, idx / self.n]
        }
    }

    #[inline]
    pub fn flat_index(&self, i0: i64, i1: i64) -> usize {
        let a = wrap_index(i0, self.n);
        if self.dim == 1 {
            a
        } else {
            a + self.n * wrap_index(i1, self.n)
        }
    }

    /// Coordinates of node `idx`.
    #[inline]
    pub fn node(&self, idx: usize) -> Vec2 {
        let [i0, i1] = self.multi_index(idx);
        if self.dim == 1 {
            [i0 as f64 * self.h, 0.0]
        } else {
            [i0 as f64 * self.h, i1 as f64 * self.h]
        }
    }

    /// Neighbour of `idx` shifted by `offset` nodes along `axis`.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, offset: i64) -> usize {
        let [i0, i1] = self.multi_index(idx);
        let (mut a, mut b) = (i0 as i64, i1 as i64);
        if axis == 0 {
            a += offset;
        } else {
            b += offset;
        }
        self.flat_index(a, b)
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec2> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Cell index and fractional offset of coordinate `x` along one axis.
    #[inline]
    fn locate(&self, x: f64) -> (usize, f64) {
        let u = x * self.n as f64;
        let mut base = u.floor();
        let mut frac = u - base;
        let r = u.round();
        if (u - r).abs() <= 8.0 * f64::EPSILON * u.abs().max(1.0) {
            base = r;
            frac = 0.0;
        }
        (wrap_index(base as i64, self.n), frac)
    }
}

/// Values that can be stored at grid nodes and blended linearly.
pub trait Nodal: Copy + Send + Sync + std::fmt::Debug + PartialEq + 'static {
    const ZERO: Self;
    fn axpy(self, w: f64, other: Self) -> Self;
    fn finite(&self) -> bool;
    fn max_abs(&self) -> f64;
}

impl Nodal for f64 {
    const ZERO: Self = 0.0;
    #[inline]
    fn axpy(self, w: f64, other: Self) -> Self {
        self + w * other
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
    fn max_abs(&self) -> f64 {
        self.abs()
    }
}

impl Nodal for Vec2 {
    const ZERO: Self = ZERO_V;
    #[inline]
    fn axpy(self, w: f64, o: Self) -> Self {
        [self[0] + w * o[0], self[1] + w * o[1]]
    }
    fn finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
    fn max_abs(&self) -> f64 {
        self[0].abs().max(self[1].abs())
    }
}

impl Nodal for Mat2 {
    const ZERO: Self = ZERO_M;
    #[inline]
    fn axpy(self, w: f64, o: Self) -> Self {
        [
            [self[0][0] + w * o[0][0], self[0][1] + w * o[0][1]],
            [self[1][0] + w * o[1][0], self[1][1] + w * o[1][1]],
        ]
    }
    fn finite(&self) -> bool {
        crate::small::is_finite(self)
    }
    fn max_abs(&self) -> f64 {
        crate::small::max_abs(self)
    }
}

/// Node values of type `T` on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    pub grid: PeriodicGrid,
    pub values: Vec<T>,
}

pub type ScalarField = Field<f64>;
pub type VectorField = Field<Vec2>;
pub type MatrixField = Field<Mat2>;

impl<T: Nodal> Field<T> {
    pub fn constant(grid: PeriodicGrid, value: T) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::constant(grid, T::ZERO)
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(Vec2) -> T) -> Self {
        Self {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Nodal::finite)
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }

    /// Periodic multilinear interpolation; exact at nodes.
    pub fn interpolate(&self, x: Vec2) -> T {
        let g = &self.grid;
        let (i0, t0) = g.locate(x[0]);
        let j0 = if i0 + 1 == g.n { 0 } else { i0 + 1 };
        if g.dim == 1 {
            if t0 == 0.0 {
                return self.values[i0];
            }
            return T::ZERO
                .axpy(1.0 - t0, self.values[i0])
                .axpy(t0, self.values[j0]);
        }
        let (i1, t1) = g.locate(x[1]);
        let j1 = if i1 + 1 == g.n { 0 } else { i1 + 1 };
        let n = g.n;
        let v00 = self.values[i0 + n * i1];
        if t0 == 0.0 && t1 == 0.0 {
            return v00;
        }
        let v10 = self.values[j0 + n * i1];
        let v01 = self.values[i0 + n * j1];
        let v11 = self.values[j0 + n * j1];
        T::ZERO
            .axpy((1.0 - t0) * (1.0 - t1), v00)
            .axpy(t0 * (1.0 - t1), v10)
            .axpy((1.0 - t0) * t1, v01)
            .axpy(t0 * t1, v11)
    }

    /// Multilinear interpolant and its partial derivatives inside the cell
    /// containing `x` (one-sided at cell faces).
    pub fn interpolate_with_gradient(&self, x: Vec2) -> (T, [T; 2]) {
        let g = &self.grid;
        let n = g.n as f64;
        let (i0, t0) = g.locate(x[0]);
        let j0 = if i0 + 1 == g.n { 0 } else { i0 + 1 };
        if g.dim == 1 {
            let (a, b) = (self.values[i0], self.values[j0]);
            let v = T::ZERO.axpy(1.0 - t0, a).axpy(t0, b);
            let d = T::ZERO.axpy(n, b).axpy(-n, a);
            return (v, [d, T::ZERO]);
        }
        let (i1, t1) = g.locate(x[1]);
        let j1 = if i1 + 1 == g.n { 0 } else { i1 + 1 };
        let m = g.n;
        let v00 = self.values[i0 + m * i1];
        let v10 = self.values[j0 + m * i1];
        let v01 = self.values[i0 + m * j1];
        let v11 = self.values[j0 + m * j1];
        let v = T::ZERO
            .axpy((1.0 - t0) * (1.0 - t1), v00)
            .axpy(t0 * (1.0 - t1), v10)
            .axpy((1.0 - t0) * t1, v01)
            .axpy(t0 * t1, v11);
        let dx = T::ZERO
            .axpy(-(1.0 - t1) * n, v00)
            .axpy((1.0 - t1) * n, v10)
            .axpy(-t1 * n, v01)
            .axpy(t1 * n, v11);
        let dy = T::ZERO
            .axpy(-(1.0 - t0) * n, v00)
            .axpy(-t0 * n, v10)
            .axpy((1.0 - t0) * n, v01)
            .axpy(t0 * n, v11);
        (v, [dx, dy])
    }

    /// Value at the node whose cell `[i·h, (i+1)·h)` contains `x`.
    pub fn nearest_cell(&self, x: Vec2) -> T {
        let g = &self.grid;
        let (i0, _) = g.locate(x[0]);
        if g.dim == 1 {
            return self.values[i0];
        }
        let (i1, _) = g.locate(x[1]);
        self.values[i0 + g.n * i1]
    }

    /// Second-order central difference along `axis`.
    pub fn central_diff(&self, axis: usize) -> Field<T> {
        let g = self.grid;
        let inv = 0.5 / g.h;
        let values = (0..g.len())
            .map(|i| {
                let p = self.values[g.neighbor(i, axis, 1)];
                let m = self.values[g.neighbor(i, axis, -1)];
                T::ZERO.axpy(inv, p).axpy(-inv, m)
            })
            .collect();
        Field { grid: g, values }
    }

    pub fn map<U: Nodal>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }
}

impl ScalarField {
    pub fn gradient(&self) -> VectorField {
        let dx = self.central_diff(0);
        if self.grid.dim == 1 {
            return dx.map(|v| [v, 0.0]);
        }
        let dy = self.central_diff(1);
        Field {
            grid: self.grid,
            values: dx.values.iter().zip(&dy.values).map(|(a, b)| [*a, *b]).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }

    /// Periodic Catmull-Rom interpolation returning value, gradient and Hessian.
    ///
    /// The interpolant is C¹ and reproduces quadratics; its nodal gradient is the
    /// central difference.
    pub fn cubic_eval(&self, x: Vec2) -> (f64, Vec2, Mat2) {
        let g = &self.grid;
        let n = g.n as f64;
        let w = |xa: f64| {
            let u = xa * n;
            let b = u.floor();
            let t = u - b;
            let t2 = t * t;
            let t3 = t2 * t;
            let w = [
                0.5 * (-t3 + 2.0 * t2 - t),
                0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
                0.5 * (-3.0 * t3 + 4.0 * t2 + t),
                0.5 * (t3 - t2),
            ];
            let dw = [
                0.5 * (-3.0 * t2 + 4.0 * t - 1.0) * n,
                0.5 * (9.0 * t2 - 10.0 * t) * n,
                0.5 * (-9.0 * t2 + 8.0 * t + 1.0) * n,
                0.5 * (3.0 * t2 - 2.0 * t) * n,
            ];
            let ddw = [
                0.5 * (-6.0 * t + 4.0) * n * n,
                0.5 * (18.0 * t - 10.0) * n * n,
                0.5 * (-18.0 * t + 8.0) * n * n,
                0.5 * (6.0 * t - 2.0) * n * n,
            ];
            (b as i64 - 1, w, dw, ddw)
        };
        let (b0, w0, d0, dd0) = w(x[0]);
        if g.dim == 1 {
            let (mut v, mut dv, mut ddv) = (0.0, 0.0, 0.0);
            for k in 0..4 {
                let f = self.values[wrap_index(b0 + k as i64, g.n)];
                v += w0[k] * f;
                dv += d0[k] * f;
                ddv += dd0[k] * f;
            }
            return (v, [dv, 0.0], [[ddv, 0.0], [0.0, 0.0]]);
        }
        let (b1, w1, d1, dd1) = w(x[1]);
        let (mut v, mut gx, mut gy, mut hxx, mut hxy, mut hyy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for l in 0..4 {
            let row = wrap_index(b1 + l as i64, g.n) * g.n;
            let (mut s, mut sd, mut sdd) = (0.0, 0.0, 0.0);
            for k in 0..4 {
                let f = self.values[row + wrap_index(b0 + k as i64, g.n)];
                s += w0[k] * f;
                sd += d0[k] * f;
                sdd += dd0[k] * f;
            }
            v += w1[l] * s;
            gx += w1[l] * sd;
            gy += d1[l] * s;
            hxx += w1[l] * sdd;
            hxy += d1[l] * sd;
            hyy += dd1[l] * s;
        }
        (v, [gx, gy], [[hxx, hxy], [hxy, hyy]])
    }
}

/// Periodic part `δ` of a map `x ↦ x + δ(x)` on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField(pub VectorField);

impl DisplacementField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self(Field::zeros(grid))
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.0.grid
    }

    /// Interpolated displacement at `x`.
    pub fn interpolate(&self, x: Vec2) -> Vec2 {
        self.0.interpolate(x)
    }

    /// The map itself, `x + δ(x)`.
    pub fn apply(&self, x: Vec2) -> Vec2 {
        let d = self.0.interpolate(x);
        if self.0.grid.dim == 1 {
            [x[0] + d[0], 0.0]
        } else {
            [x[0] + d[0], x[1] + d[1]]
        }
    }

    /// Image of node `idx`.
    pub fn node_image(&self, idx: usize) -> Vec2 {
        let x = self.0.grid.node(idx);
        let d = self.0.values[idx];
        [x[0] + d[0], x[1] + d[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_index(5, 4), 1);
        assert_eq!(wrap_index(-1, 4), 3);
        assert_eq!(wrap_index(0, 8), 0);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(PeriodicGrid::new(3, 16).is_err());
        assert!(PeriodicGrid::new(1, 4).is_err());
        assert!(PeriodicGrid::new(1, 49).is_err());
        let g = PeriodicGrid::new(2, 10).unwrap();
        assert_eq!(g.h() * g.n() as f64, 1.0);
    }

    #[test]
    fn interpolation_is_exact_at_nodes() {
        for n in [8, 10, 12, 100, 256] {
            let g = PeriodicGrid::new(1, n).unwrap();
            let f = ScalarField::from_fn(g, |x| x[0]);
            for i in 0..n {
                assert_eq!(f.interpolate(g.node(i)), f.values[i]);
            }
        }
    }

    #[test]
    fn interpolation_of_sine() {
        let g = PeriodicGrid::new(1, 256).unwrap();
        let f = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let mut err: f64 = 0.0;
        for k in 0..1000 {
            // A fixed irrational stride visits [0,1) quasi-uniformly.
            let x = (k as f64 * 0.618_033_988_749_894_9).fract();
            err = err.max((f.interpolate([x, 0.0]) - (2.0 * PI * x).sin()).abs());
        }
        assert!(err <= 1e-3, "max error {err}");
    }

    #[test]
    fn cubic_reproduces_quadratics_locally() {
        let g = PeriodicGrid::new(2, 64).unwrap();
        let f = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
        let x = [0.3137, 0.7211];
        let (v, gr, hs) = f.cubic_eval(x);
        let (s0, c0) = (2.0 * PI * x[0]).sin_cos();
        let (s1, c1) = (2.0 * PI * x[1]).sin_cos();
        let k = 2.0 * PI;
        assert!((v - s0 * c1).abs() < 1e-4);
        assert!((gr[0] - k * c0 * c1).abs() < 5e-3);
        assert!((gr[1] + k * s0 * s1).abs() < 5e-3);
        assert!((hs[0][1] + k * k * c0 * s1).abs() < 0.2);
        // Gradient at a node equals the central difference.
        let (_, gn, _) = f.cubic_eval(g.node(70));
        let cd = f.gradient().values[70];
        assert!((gn[0] - cd[0]).abs() < 1e-9 && (gn[1] - cd[1]).abs() < 1e-9);
    }
}
