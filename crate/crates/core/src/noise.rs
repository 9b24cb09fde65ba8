//! Brownian drivers and transport-noise families.
//!
//! Increments are generated counter-style: step `k` of a path owns ChaCha
//! stream `k` under the path seed, so any step of any path can be regenerated
//! independently of the others.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::small::{Mat2, Vec2, ZERO_M};

/// Mix a master seed and a path index into a per-path seed.
///
/// Bijective in `path_index` for a fixed master seed.
pub fn derive_path_seed(master_seed: u64, path_index: u64) -> u64 {
    let mut z = master_seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(path_index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub modes: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    /// Row-major `steps × modes`.
    pub increments: Vec<f64>,
}

/// Draw the `modes` increments of step `k` for `seed`.
pub fn step_increments(seed: u64, k: u64, dt: f64, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    let s = dt.sqrt();
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = s * z;
    }
}

pub fn sample_brownian_increments(seed: u64, steps: usize, modes: usize, dt: f64) -> BrownianPath {
    let mut increments = vec![0.0; steps * modes];
    if modes > 0 {
        for (k, row) in increments.chunks_mut(modes).enumerate() {
            step_increments(seed, k as u64, dt, row);
        }
    }
    BrownianPath {
        modes,
        steps,
        dt,
        seed,
        increments,
    }
}

impl BrownianPath {
    /// Increments of step `k`.
    #[inline]
    pub fn step(&self, k: usize) -> &[f64] {
        &self.increments[k * self.modes..(k + 1) * self.modes]
    }

    /// Sum groups of `factor` consecutive steps: the same Brownian motion seen
    /// on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> BrownianPath {
        assert!(factor >= 1 && self.steps.is_multiple_of(factor), "steps must be divisible by factor");
        let steps = self.steps / factor;
        let mut increments = vec![0.0; steps * self.modes];
        for k in 0..steps {
            for j in 0..factor {
                let src = self.step(k * factor + j);
                for (d, s) in increments[k * self.modes..(k + 1) * self.modes]
                    .iter_mut()
                    .zip(src)
                {
                    *d += s;
                }
            }
        }
        BrownianPath {
            modes: self.modes,
            steps,
            dt: self.dt * factor as f64,
            seed: self.seed,
            increments,
        }
    }

    /// Steps `from..to` as a path of their own.
    pub fn slice(&self, from: usize, to: usize) -> BrownianPath {
        BrownianPath {
            modes: self.modes,
            steps: to - from,
            dt: self.dt,
            seed: self.seed,
            increments: self.increments[from * self.modes..to * self.modes].to_vec(),
        }
    }

    /// `W^mode` at every level `0..=steps`.
    pub fn cumulative(&self, mode: usize) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.steps + 1);
        let mut acc = 0.0;
        w.push(acc);
        for k in 0..self.steps {
            acc += self.step(k)[mode];
            w.push(acc);
        }
        w
    }
}

/// Value and derivatives of one noise mode at a point.
///
/// `jac[i][j] = ∂_j b^i`, `hess[i][j][k] = ∂_j ∂_k b^i`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ModeEval {
    pub b: Vec2,
    pub jac: Mat2,
    pub hess: [Mat2; 2],
}

impl ModeEval {
    #[inline]
    pub fn div(&self) -> f64 {
        self.jac[0][0] + self.jac[1][1]
    }
}

/// How many spatial derivatives `eval` must fill in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    /// Independent of `x`.
    Constant,
    /// Smooth, derivatives in closed form.
    Analytic,
    /// Derivatives by central finite differences.
    FiniteDifference,
}

/// Finitely many transport-noise fields `b_n(t, x)` on the torus.
pub trait NoiseFamily: Send + Sync {
    fn dim(&self) -> usize;
    fn modes(&self) -> usize;
    /// Declared bound `M` on `‖(b_n(t,x))_n‖_{ℓ²}`.
    fn bound(&self) -> f64;
    fn regularity(&self) -> Regularity;
    /// `true` when no mode depends on `t`.
    fn time_independent(&self) -> bool {
        true
    }
    /// Fill `out[n]` for every mode up to the requested derivative order.
    /// Entries beyond `order` are left zero.
    fn eval(&self, t: f64, x: Vec2, order: Order, out: &mut [ModeEval]);

    fn eval_vec(&self, t: f64, x: Vec2, order: Order) -> Vec<ModeEval> {
        let mut out = vec![ModeEval::default(); self.modes()];
        self.eval(t, x, order, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroNoise {
    pub dim: usize,
}

impl NoiseFamily for ZeroNoise {
    fn dim(&self) -> usize {
        self.dim
    }
    fn modes(&self) -> usize {
        0
    }
    fn bound(&self) -> f64 {
        0.0
    }
    fn regularity(&self) -> Regularity {
        Regularity::Constant
    }
    fn eval(&self, _t: f64, _x: Vec2, _order: Order, _out: &mut [ModeEval]) {}
}

#[derive(Debug, Clone)]
pub struct ConstantNoise {
    pub dim: usize,
    pub c: Vec<Vec2>,
}

impl NoiseFamily for ConstantNoise {
    fn dim(&self) -> usize {
        self.dim
    }
    fn modes(&self) -> usize {
        self.c.len()
    }
    fn bound(&self) -> f64 {
        self.c.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>().sqrt()
    }
    fn regularity(&self) -> Regularity {
        Regularity::Constant
    }
    fn eval(&self, _t: f64, _x: Vec2, _order: Order, out: &mut [ModeEval]) {
        for (o, c) in out.iter_mut().zip(&self.c) {
            *o = ModeEval {
                b: *c,
                ..Default::default()
            };
        }
    }
}

/// Four modes `(−sin 2πx₁, 0)`, `(−cos 2πx₁, 0)`, `(0, −sin 2πx₂)`, `(0, −cos 2πx₂)`.
///
/// `Σ b_n ⊗ b_n` is the identity and the Stratonovich drift vanishes.
#[derive(Debug, Clone, Copy, Default)]
pub struct SinCos2d;

impl NoiseFamily for SinCos2d {
    fn dim(&self) -> usize {
        2
    }
    fn modes(&self) -> usize {
        4
    }
    fn bound(&self) -> f64 {
        2f64.sqrt()
    }
    fn regularity(&self) -> Regularity {
        Regularity::Analytic
    }
    fn eval(&self, _t: f64, x: Vec2, order: Order, out: &mut [ModeEval]) {
        let k = 2.0 * PI;
        for axis in 0..2 {
            let (s, c) = (k * x[axis]).sin_cos();
            // Mode pair for this axis: -sin and -cos along e_axis.
            let vals = [(-s, -k * c, k * k * s), (-c, k * s, k * k * c)];
            for (m, (v, dv, ddv)) in vals.into_iter().enumerate() {
                let o = &mut out[2 * axis + m];
                *o = ModeEval::default();
                o.b[axis] = v;
                if order >= Order::First {
                    o.jac[axis][axis] = dv;
                }
                if order >= Order::Second {
                    o.hess[axis][axis][axis] = ddv;
                }
            }
        }
    }
}

/// Positive 1-periodic profile `mean + amp·sin(2π(freq·s + phase))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisProfile {
    pub mean: f64,
    #[serde(default)]
    pub amp: f64,
    #[serde(default = "one_u32")]
    pub freq: u32,
    #[serde(default)]
    pub phase: f64,
}

fn one_u32() -> u32 {
    1
}

impl AxisProfile {
    pub fn constant(mean: f64) -> Self {
        Self {
            mean,
            amp: 0.0,
            freq: 1,
            phase: 0.0,
        }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        let w = 2.0 * PI * self.freq as f64;
        let (sn, cs) = (w * s + 2.0 * PI * self.phase).sin_cos();
        (
            self.mean + self.amp * sn,
            self.amp * w * cs,
            -self.amp * w * w * sn,
        )
    }
}

/// Two commuting modes `b_n(x) = b̃_n(x_n) e_n`.
#[derive(Debug, Clone)]
pub struct AxisCommuting {
    pub profiles: [AxisProfile; 2],
}

impl AxisCommuting {
    pub fn new(profiles: [AxisProfile; 2]) -> Result<Self> {
        for (i, p) in profiles.iter().enumerate() {
            if !(p.mean > p.amp.abs()) {
                return Err(Error::config(
                    format!("noise.profiles[{i}]"),
                    "profile must be positive: need mean > |amp|",
                ));
            }
        }
        Ok(Self { profiles })
    }
}

impl NoiseFamily for AxisCommuting {
    fn dim(&self) -> usize {
        2
    }
    fn modes(&self) -> usize {
        2
    }
    fn bound(&self) -> f64 {
        let m: Vec<f64> = self.profiles.iter().map(|p| p.mean + p.amp.abs()).collect();
        (m[0] * m[0] + m[1] * m[1]).sqrt()
    }
    fn regularity(&self) -> Regularity {
        Regularity::Analytic
    }
    fn eval(&self, _t: f64, x: Vec2, order: Order, out: &mut [ModeEval]) {
        for axis in 0..2 {
            let (v, dv, ddv) = self.profiles[axis].eval(x[axis]);
            let o = &mut out[axis];
            *o = ModeEval::default();
            o.b[axis] = v;
            if order >= Order::First {
                o.jac[axis][axis] = dv;
            }
            if order >= Order::Second {
                o.hess[axis][axis][axis] = ddv;
            }
        }
    }
}

type ModeFn = dyn Fn(f64, Vec2, usize) -> Vec2 + Send + Sync;

/// User-supplied modes; derivatives by central differences with step `fd_step`.
#[derive(Clone)]
pub struct ClosureNoise {
    pub dim: usize,
    pub modes: usize,
    pub bound: f64,
    pub fd_step: f64,
    pub time_independent: bool,
    f: Arc<ModeFn>,
}

impl std::fmt::Debug for ClosureNoise {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosureNoise")
            .field("dim", &self.dim)
            .field("modes", &self.modes)
            .field("bound", &self.bound)
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl ClosureNoise {
    /// `f(t, x, n)` returns `b_n(t, x)`; it must be 1-periodic in `x`.
    pub fn new(
        dim: usize,
        modes: usize,
        bound: f64,
        fd_step: f64,
        f: impl Fn(f64, Vec2, usize) -> Vec2 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            modes,
            bound,
            fd_step,
            time_independent: true,
            f: Arc::new(f),
        }
    }
}

impl NoiseFamily for ClosureNoise {
    fn dim(&self) -> usize {
        self.dim
    }
    fn modes(&self) -> usize {
        self.modes
    }
    fn bound(&self) -> f64 {
        self.bound
    }
    fn regularity(&self) -> Regularity {
        Regularity::FiniteDifference
    }
    fn time_independent(&self) -> bool {
        self.time_independent
    }
    fn eval(&self, t: f64, x: Vec2, order: Order, out: &mut [ModeEval]) {
        let h = self.fd_step;
        let shift = |x: Vec2, j: usize, s: f64| {
            let mut y = x;
            y[j] += s;
            y
        };
        for (n, o) in out.iter_mut().enumerate() {
            *o = ModeEval {
                b: (self.f)(t, x, n),
                ..Default::default()
            };
            if order == Order::Value {
                continue;
            }
            for j in 0..self.dim {
                let p = (self.f)(t, shift(x, j, h), n);
                let m = (self.f)(t, shift(x, j, -h), n);
                for i in 0..self.dim {
                    o.jac[i][j] = (p[i] - m[i]) / (2.0 * h);
                    if order == Order::Second {
                        o.hess[i][j][j] = (p[i] - 2.0 * o.b[i] + m[i]) / (h * h);
                    }
                }
            }
            if order == Order::Second && self.dim == 2 {
                let pp = (self.f)(t, [x[0] + h, x[1] + h], n);
                let pm = (self.f)(t, [x[0] + h, x[1] - h], n);
                let mp = (self.f)(t, [x[0] - h, x[1] + h], n);
                let mm = (self.f)(t, [x[0] - h, x[1] - h], n);
                for i in 0..2 {
                    let v = (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h);
                    o.hess[i][0][1] = v;
                    o.hess[i][1][0] = v;
                }
            }
        }
    }
}

/// Parameters of the built-in families as they appear in scenario files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Mode vectors of the `constant` family.
    #[serde(default)]
    pub c: Vec<Vec<f64>>,
    /// Axis profiles of the `axis_commuting` family.
    #[serde(default)]
    pub profiles: Vec<AxisProfile>,
}

pub fn builtin_noise_family(
    name: &str,
    dim: usize,
    params: &NoiseParams,
) -> Result<Arc<dyn NoiseFamily>> {
    let need_2d = |fam: &str| {
        if dim != 2 {
            Err(Error::config("noise.family", format!("`{fam}` requires d = 2")))
        } else {
            Ok(())
        }
    };
    match name {
        "zero" => Ok(Arc::new(ZeroNoise { dim })),
        "constant" => {
            let mut c = Vec::with_capacity(params.c.len());
            for (n, v) in params.c.iter().enumerate() {
                if v.len() != dim {
                    return Err(Error::config(
                        format!("noise.c[{n}]"),
                        format!("expected {dim} components, got {}", v.len()),
                    ));
                }
                c.push([v[0], if dim == 2 { v[1] } else { 0.0 }]);
            }
            Ok(Arc::new(ConstantNoise { dim, c }))
        }
        "sincos2d" => {
            need_2d(name)?;
            Ok(Arc::new(SinCos2d))
        }
        "axis_commuting" => {
            need_2d(name)?;
            let p = match params.profiles.as_slice() {
                [] => [AxisProfile::constant(1.0); 2],
                [a, b] => [*a, *b],
                other => {
                    return Err(Error::config(
                        "noise.profiles",
                        format!("expected 2 profiles, got {}", other.len()),
                    ))
                }
            };
            Ok(Arc::new(AxisCommuting::new(p)?))
        }
        other => Err(Error::config(
            "noise.family",
            format!("unknown family `{other}` (expected zero, constant, sincos2d or axis_commuting)"),
        )),
    }
}

/// `Σ_n b_n ⊗ b_n` at one point.
pub fn noise_covariance(modes: &[ModeEval]) -> Mat2 {
    let mut s = ZERO_M;
    for m in modes {
        s = crate::small::add(&s, &crate::small::outer(&m.b, &m.b));
    }
    s
}

/// Largest `|b_n|` over modes at one point.
pub fn max_mode_norm(modes: &[ModeEval]) -> f64 {
    modes
        .iter()
        .map(|m| (m.b[0] * m.b[0] + m.b[1] * m.b[1]).sqrt())
        .fold(0.0, f64::max)
}
