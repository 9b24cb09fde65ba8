//! Numerical surrogates for the regularity theory: parabolicity constants,
//! ellipticity ratio, Hölder exponents, stopping times, the weak Itô–Wentzell
//! residual and Kolmogorov–Chentsov moment constants.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::flow::{FlowState, FlowTrajectory};
use crate::grid::{MatrixField, PeriodicGrid, ScalarField};
use crate::noise::{BrownianPath, ModeEval, NoiseFamily, Order};
use crate::pde;
use crate::small::{self, Vec2};

/// Slack allowed when comparing realized against declared constants.
pub const DECLARATION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicityReport {
    /// `min λ_min(sym(a − ½Σ b⊗b))` over nodes and sampled times.
    pub nu_hat: f64,
    /// Realized bound of the boundedness assumption.
    pub m_hat: f64,
    pub nu: f64,
    pub m: f64,
    pub pass: bool,
}

/// Realized `(ν̂, M̂)` on the nodes of `grid` at `times`, compared with the
/// declared constants of `coeffs`.
///
/// `M̂` is the larger of `max_x (Σ|a^{ij}| + Σ_i ‖(b_n^i)_n‖)` and
/// `max_x (|a^0| + Σ|a^i| + ‖b^0‖)`.
pub fn parabolicity_report(
    coeffs: &CoefficientSet,
    family: &dyn NoiseFamily,
    grid: PeriodicGrid,
    times: &[f64],
) -> ParabolicityReport {
    let dim = grid.dim();
    let mut modes = vec![ModeEval::default(); family.modes()];
    let mut nu_hat = f64::INFINITY;
    let mut m_hat: f64 = 0.0;
    for &t in times {
        for x in grid.nodes() {
            family.eval(t, x, Order::Value, &mut modes);
            let a = coeffs.a.eval(t, x);
            let cov = crate::noise::noise_covariance(&modes);
            let (lo, _) = small::sym_eigs(&small::sub(&a, &small::scale(&cov, 0.5)), dim);
            nu_hat = nu_hat.min(lo);
            let mut top = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    top += a[i][j].abs();
                }
                top += modes.iter().map(|m| m.b[i] * m.b[i]).sum::<f64>().sqrt();
            }
            let mut low = 0.0;
            if let Some(c) = &coeffs.a0 {
                low += c.eval(t, x).abs();
            }
            if let Some(c) = &coeffs.a_lin {
                let v = c.eval(t, x);
                low += v[..dim].iter().map(|s| s.abs()).sum::<f64>();
            }
            if let Some(b0) = &coeffs.b0 {
                low += b0.iter().map(|c| c.eval(t, x).powi(2)).sum::<f64>().sqrt();
            }
            m_hat = m_hat.max(top).max(low);
        }
    }
    let pass = nu_hat >= coeffs.nu - DECLARATION_SLACK && m_hat <= coeffs.m + DECLARATION_SLACK;
    ParabolicityReport {
        nu_hat,
        m_hat,
        nu: coeffs.nu,
        m: coeffs.m,
        pass,
    }
}

/// `Λ = λ_max/λ_min` of the absolute eigenvalues of `sym(α)`; `∞` where
/// `sym(α)` is singular.
pub fn ellipticity_ratio_field(alpha: &MatrixField) -> ScalarField {
    let dim = alpha.grid.dim();
    alpha.map(|a| {
        let (lo, hi) = small::sym_eigs(&a, dim);
        let (lo, hi) = if lo.abs() <= hi.abs() {
            (lo.abs(), hi.abs())
        } else {
            (hi.abs(), lo.abs())
        };
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    })
}

/// `P(Λ(t, x) > k)` for the two-dimensional sine/cosine family with equal
/// constant diagonal diffusion: `2(1 − Φ(ln k / (4π√(2t))))`.
pub fn lambda_tail_probability(k: f64, t: f64) -> f64 {
    if k <= 1.0 {
        return 1.0;
    }
    if t <= 0.0 {
        return 0.0;
    }
    let z = k.ln() / (4.0 * std::f64::consts::PI * (2.0 * t).sqrt());
    let phi = Normal::standard().cdf(z);
    2.0 * (1.0 - phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoelderEstimate {
    pub exponent: f64,
    pub seminorm: f64,
    pub r_squared: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub scales: usize,
}

impl HoelderEstimate {
    fn degenerate(scale_min: f64, scale_max: f64, scales: usize) -> Self {
        Self {
            exponent: 1.0,
            seminorm: 0.0,
            r_squared: 1.0,
            scale_min,
            scale_max,
            scales,
        }
    }
}

/// Largest resolved separation.
pub const HOELDER_MAX_SCALE: f64 = 1.0 / 16.0;
pub const HOELDER_MIN_SCALES: usize = 4;

fn fit_log_log(r: &[f64], w: &[f64]) -> HoelderEstimate {
    let lo = r[0];
    let hi = *r.last().unwrap();
    if w.iter().all(|&v| v == 0.0) {
        return HoelderEstimate::degenerate(lo, hi, r.len());
    }
    let pts: Vec<(f64, f64)> = r
        .iter()
        .zip(w)
        .filter(|(_, &w)| w > 0.0)
        .map(|(r, w)| (r.ln(), w.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 1.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    HoelderEstimate {
        exponent: slope.clamp(f64::MIN_POSITIVE, 1.0),
        seminorm: intercept.exp(),
        r_squared: r2,
        scale_min: lo,
        scale_max: hi,
        scales: r.len(),
    }
}

/// Fit `ω(r) ≈ S r^θ` to maximal increments at dyadic separations
/// `r = 2^j h ≤ 1/16`.
///
/// `fields` are snapshots at `times` (uniformly spaced). With `parabolic`,
/// time increments at lag `≈ r²` enter `ω(r)` alongside spatial ones.
pub fn hoelder_estimate(fields: &[ScalarField], times: &[f64], parabolic: bool) -> Result<HoelderEstimate> {
    let first = fields
        .first()
        .ok_or_else(|| Error::config("hoelder", "no snapshots"))?;
    let grid = first.grid;
    let n = grid.n();
    let mut r = Vec::new();
    let mut w = Vec::new();
    let mut step = 1usize;
    while step as f64 * grid.h() <= HOELDER_MAX_SCALE + 1e-15 {
        let sep = step as f64 * grid.h();
        let mut m: f64 = 0.0;
        for f in fields {
            for i in 0..grid.len() {
                let [i0, i1] = grid.multi_index(i);
                for axis in 0..grid.dim() {
                    let j = if axis == 0 {
                        grid.flat_index(i0 as i64 + step as i64, i1 as i64)
                    } else {
                        grid.flat_index(i0 as i64, i1 as i64 + step as i64)
                    };
                    m = m.max((f.values[j] - f.values[i]).abs());
                }
            }
        }
        if parabolic && fields.len() > 1 {
            let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
            let lag = (sep * sep / dt).round() as usize;
            if lag >= 1 && lag < fields.len() {
                for l in 0..fields.len() - lag {
                    for (a, b) in fields[l].values.iter().zip(&fields[l + lag].values) {
                        m = m.max((a - b).abs());
                    }
                }
            }
        }
        r.push(sep);
        w.push(m);
        step *= 2;
        if step >= n {
            break;
        }
    }
    if r.len() < HOELDER_MIN_SCALES {
        return Err(Error::config(
            "hoelder",
            format!("only {} dyadic scales resolvable (need {HOELDER_MIN_SCALES})", r.len()),
        ));
    }
    Ok(fit_log_log(&r, &w))
}

/// As [`hoelder_estimate`] for a time-only series sampled with `spacing`.
pub fn hoelder_estimate_series(values: &[f64], spacing: f64) -> Result<HoelderEstimate> {
    let mut r = Vec::new();
    let mut w = Vec::new();
    let mut lag = 1usize;
    while lag < values.len() && lag as f64 * spacing <= HOELDER_MAX_SCALE + 1e-15 {
        let m = values
            .iter()
            .zip(&values[lag..])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        r.push(lag as f64 * spacing);
        w.push(m);
        lag *= 2;
    }
    if r.len() < HOELDER_MIN_SCALES {
        return Err(Error::config(
            "hoelder",
            format!("only {} dyadic scales resolvable (need {HOELDER_MIN_SCALES})", r.len()),
        ));
    }
    Ok(fit_log_log(&r, &w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingReport {
    pub tau: f64,
    pub m: f64,
    /// Index of the triggering level, if any.
    pub level: Option<usize>,
}

/// `max_x (‖ψ(x)‖ + ‖Dξ(x)‖)` with operator norms.
pub fn distortion(state: &FlowState) -> f64 {
    let dim = state.grid().dim();
    state
        .jacobian
        .values
        .iter()
        .zip(&state.inv_jacobian.values)
        .map(|(d, p)| small::op_norm(d, dim) + small::op_norm(p, dim))
        .fold(0.0, f64::max)
}

/// First recorded time with distortion `≥ m`, else the final time.
pub fn stopping_time_first_exceed(traj: &FlowTrajectory, m: f64) -> StoppingReport {
    let times = traj.times();
    let values: Vec<f64> = traj.states.iter().map(distortion).collect();
    stopping_time_from_series(&times, &values, m)
}

/// [`stopping_time_first_exceed`] on a precomputed distortion series.
pub fn stopping_time_from_series(times: &[f64], distortion: &[f64], m: f64) -> StoppingReport {
    match distortion.iter().position(|&d| d >= m) {
        Some(k) => StoppingReport {
            tau: times[k],
            m,
            level: Some(k),
        },
        None => StoppingReport {
            tau: times.last().copied().unwrap_or(0.0),
            m,
            level: None,
        },
    }
}

/// Residual of the weak Itô–Wentzell identity at the final level, written in
/// flow coordinates and tested against `φ`:
///
/// ```text
/// ⟨u_K∘ξ_K − u_0, φ⟩ = Σ_k ⟨(u_{k+1} − u_k)∘ξ_k + ∇u_k(ξ_k)·(μ dt + σ_n ΔW_n)
///                          + ½ σ_n^i σ_n^j ∂_ij u_k(ξ_k) dt + σ_n·∇G_n^k(ξ_k) dt, φ⟩
/// ```
///
/// with `σ_n = −b_n`, `G_n^k` the explicit noise coefficients of the direct
/// scheme, and fields evaluated off-grid by periodic cubic interpolation.
/// `u` and `flows` hold every level `0..=K`.
pub fn ito_wentzell_residual(
    u: &[ScalarField],
    flows: &[FlowState],
    family: &dyn NoiseFamily,
    coeffs: &CoefficientSet,
    path: &BrownianPath,
    phi: impl Fn(Vec2) -> f64,
) -> f64 {
    let grid = u[0].grid;
    let dim = grid.dim();
    let dt = path.dt;
    let vol = grid.h().powi(dim as i32);
    let weights: Vec<f64> = grid.nodes().map(|x| phi(x) * vol).collect();
    let mut modes = vec![ModeEval::default(); family.modes()];
    let mut rhs = 0.0;
    for k in 0..path.steps {
        let t = k as f64 * dt;
        let g = pde::noise_coefficients(coeffs, family, &u[k], t);
        let dw = path.step(k);
        for (i, wgt) in weights.iter().enumerate() {
            let x = flows[k].position(i);
            family.eval(t, x, Order::First, &mut modes);
            let mu = crate::flow::stratonovich_drift(family, t, x);
            let (u0, du, ddu) = u[k].cubic_eval(x);
            let (u1, _, _) = u[k + 1].cubic_eval(x);
            let mut s = u1 - u0;
            for j in 0..dim {
                s += du[j] * mu[j] * dt;
            }
            for (n, m) in modes.iter().enumerate() {
                let (_, dg, _) = g[n].cubic_eval(x);
                for a in 0..dim {
                    s -= du[a] * m.b[a] * dw[n];
                    s -= m.b[a] * dg[a] * dt;
                    for b in 0..dim {
                        s += 0.5 * m.b[a] * m.b[b] * ddu[a][b] * dt;
                    }
                }
            }
            rhs += wgt * s;
        }
    }
    let last = path.steps;
    let mut lhs = 0.0;
    for (i, wgt) in weights.iter().enumerate() {
        let (uk, _, _) = u[last].cubic_eval(flows[last].position(i));
        lhs += wgt * (uk - u[0].values[i]);
    }
    (lhs - rhs).abs()
}

/// Empirical Kolmogorov–Chentsov constant
/// `max_x E[|Z(x)|^p]^{1/p} + max_{x≠y} E[|Z(x) − Z(y)|^{αp}]^{1/p} / d(x, y)^α`
/// over `samples[s][x]` with metric `dist`.
pub fn empirical_kc_constant(
    samples: &[Vec<f64>],
    dist: impl Fn(usize, usize) -> f64,
    p: f64,
    alpha: f64,
) -> f64 {
    let Some(first) = samples.first() else {
        return 0.0;
    };
    let points = first.len();
    let count = samples.len() as f64;
    let moment = |f: &dyn Fn(&Vec<f64>) -> f64| samples.iter().map(f).sum::<f64>() / count;
    let mut head: f64 = 0.0;
    for x in 0..points {
        head = head.max(moment(&|s| s[x].abs().powf(p)).powf(1.0 / p));
    }
    let mut tail: f64 = 0.0;
    for x in 0..points {
        for y in x + 1..points {
            let d = dist(x, y);
            if d <= 0.0 {
                continue;
            }
            let m = moment(&|s| (s[x] - s[y]).abs().powf(alpha * p)).powf(1.0 / p);
            tail = tail.max(m / d.powf(alpha));
        }
    }
    head + tail
}
