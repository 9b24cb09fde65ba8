//! Scenario files.
//!
//! A scenario is a TOML document. [`parse_config`] fills in every
//! scenario-dependent default, validates the result (time grid, vector
//! lengths, CFL guard, declared parabolicity) and returns a config whose
//! [`ScenarioConfig::to_toml`] echo parses back to the same value.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeffs::{checkerboard, Coeff, CoefficientSet};
use crate::diagnostics::{parabolicity_report, ParabolicityReport, DECLARATION_SLACK};
use crate::error::{Error, Result};
use crate::flow::JacobianScheme;
use crate::grid::{PeriodicGrid, ScalarField};
use crate::noise::{builtin_noise_family, AxisProfile, ModeEval, NoiseFamily, NoiseParams, Order};
use crate::pde::{self, SolverConfig};
use crate::small::{self, Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Heat,
    ConstantNoise,
    Sincos2d,
    AxisCommuting,
    RoughA,
    Quasilinear,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub family: String,
    /// Number of modes; checked against the family when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub c: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profiles: Vec<AxisProfile>,
}

/// One term `cos·cos(2π k·x) + sin·sin(2π k·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarSpec {
    Constant { value: f64 },
    Fourier { modes: Vec<FourierMode> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    Constant { matrix: Vec<Vec<f64>> },
    Diagonal { values: Vec<f64> },
    Checkerboard { seed: u64, cells: usize, low: f64, high: f64 },
    /// `identity`, `modulated` or `time_modulated`.
    Named { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub a: DiffusionSpec,
    /// Declared `ν`; defaults to the realized value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Declared `M`; defaults to the realized value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_lin: Option<Vec<ScalarSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<ScalarSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<Vec<ScalarSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f0: Option<ScalarSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_vec: Option<Vec<ScalarSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<ScalarSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant {
        value: f64,
    },
    Fourier {
        modes: Vec<FourierMode>,
    },
    /// Random Fourier series with amplitudes `|k|^{-(γ0 + d/2)}`, scaled to
    /// unit sup norm on the grid.
    RandomHoelder {
        gamma0: f64,
        seed: u64,
        #[serde(default = "default_max_mode")]
        max_mode: usize,
    },
}

fn default_max_mode() -> usize {
    32
}

/// `A(y) = (base + amp / (1 + y²))·Id`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasilinearSpec {
    pub base: f64,
    pub amp: f64,
}

impl QuasilinearSpec {
    pub fn eval(&self, dim: usize, y: f64) -> Mat2 {
        small::scale(&small::identity(dim), self.base + self.amp / (1.0 + y * y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    #[serde(default = "one_u64")]
    pub paths: u64,
    #[serde(default)]
    pub seed: u64,
    /// Advisory worker count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn one_u64() -> u64 {
    1
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self {
            paths: 1,
            seed: 0,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Flow method unless the data require the direct solver.
    Auto,
    Flow,
    Direct,
    /// Flow and point diagnostics only; no PDE solve.
    FlowOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "auto")]
    pub method: Method,
    #[serde(default = "one_f64")]
    pub theta: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_blowup")]
    pub blowup_bound: f64,
    #[serde(default)]
    pub scheme: JacobianScheme,
}

fn auto() -> Method {
    Method::Auto
}
fn one_f64() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    SolverConfig::default().tol
}
fn default_max_iter() -> usize {
    SolverConfig::default().max_iter
}
fn default_cfl() -> f64 {
    SolverConfig::default().cfl
}
fn default_blowup() -> f64 {
    SolverConfig::default().blowup_bound
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            theta: 1.0,
            tol: default_tol(),
            max_iter: default_max_iter(),
            cfl: default_cfl(),
            blowup_bound: default_blowup(),
            scheme: JacobianScheme::default(),
        }
    }
}

impl SolverSpec {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            theta: self.theta,
            tol: self.tol,
            max_iter: self.max_iter,
            cfl: self.cfl,
            blowup_bound: self.blowup_bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotMode {
    None,
    Final,
    Recorded,
}

/// Ellipticity ratio of the transformed diffusion at one point and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaTailSpec {
    pub t: f64,
    pub point: Vec<f64>,
    pub k: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// Record every this many levels; 0 means ten records per run.
    #[serde(default)]
    pub record_every: usize,
    #[serde(default = "final_snapshots")]
    pub snapshots: SnapshotMode,
    /// Also run the direct solver on each path and report the gap.
    #[serde(default)]
    pub cross_validate: bool,
    #[serde(default = "yes")]
    pub hoelder: bool,
    /// Snapshots at `t ≤ hoelder_t_min` are left out of the Hölder fit;
    /// negative means a tenth of the horizon.
    #[serde(default = "minus_one")]
    pub hoelder_t_min: f64,
    /// Threshold of the flow-distortion stopping time.
    #[serde(default = "default_stopping_m")]
    pub stopping_m: f64,
    #[serde(default = "default_mp_tol")]
    pub max_principle_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_tail: Option<LambdaTailSpec>,
}

fn final_snapshots() -> SnapshotMode {
    SnapshotMode::Final
}
fn yes() -> bool {
    true
}
fn minus_one() -> f64 {
    -1.0
}
fn default_stopping_m() -> f64 {
    100.0
}
fn default_mp_tol() -> f64 {
    1e-3
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            record_every: 0,
            snapshots: SnapshotMode::Final,
            cross_validate: false,
            hoelder: true,
            hoelder_t_min: -1.0,
            stopping_m: default_stopping_m(),
            max_principle_tol: default_mp_tol(),
            lambda_tail: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default = "default_output")]
    pub output: String,
    pub grid: GridSpec,
    pub time: TimeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quasilinear: Option<QuasilinearSpec>,
    #[serde(default)]
    pub monte_carlo: MonteCarloSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
}

fn default_output() -> String {
    "out".into()
}

/// Parse, fill defaults and validate.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string().trim()))?;
    let raw: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.into_inner().to_string();
        Error::config(if path == "." { "<document>".into() } else { path }, msg.trim())
    })?;
    raw.materialize()
}

impl ScenarioConfig {
    /// Fill every scenario-dependent default, then validate.
    pub fn materialize(mut self) -> Result<Self> {
        let d = self.grid.d;
        if !(1..=2).contains(&d) {
            return Err(Error::config("grid.d", "must be 1 or 2"));
        }
        let kind = self.scenario;
        let ones = |v: f64| vec![v; d];
        if self.noise.is_none() {
            self.noise = Some(match kind {
                ScenarioKind::Heat => noise_spec("zero"),
                ScenarioKind::ConstantNoise | ScenarioKind::RoughA => NoiseSpec {
                    c: vec![ones(0.3)],
                    ..noise_spec("constant")
                },
                ScenarioKind::Sincos2d => noise_spec("sincos2d"),
                ScenarioKind::AxisCommuting => NoiseSpec {
                    profiles: vec![
                        AxisProfile {
                            mean: 0.5,
                            amp: 0.2,
                            freq: 1,
                            phase: 0.0,
                        };
                        2
                    ],
                    ..noise_spec("axis_commuting")
                },
                ScenarioKind::Quasilinear => {
                    if d == 2 {
                        noise_spec("sincos2d")
                    } else {
                        NoiseSpec {
                            c: vec![ones(0.3)],
                            ..noise_spec("constant")
                        }
                    }
                }
                ScenarioKind::Custom => return Err(Error::config("noise", "required for scenario `custom`")),
            });
        }
        if kind == ScenarioKind::Quasilinear && self.quasilinear.is_none() {
            self.quasilinear = Some(QuasilinearSpec { base: 0.6, amp: 0.5 });
        }
        if self.coefficients.is_none() {
            let a = match kind {
                ScenarioKind::RoughA => DiffusionSpec::Checkerboard {
                    seed: 1,
                    cells: 8,
                    low: 0.6,
                    high: 1.5,
                },
                ScenarioKind::Quasilinear => {
                    let q = self.quasilinear.expect("set above");
                    DiffusionSpec::Diagonal {
                        values: ones(q.base + q.amp),
                    }
                }
                ScenarioKind::Custom => {
                    return Err(Error::config("coefficients", "required for scenario `custom`"))
                }
                _ => DiffusionSpec::Diagonal { values: ones(1.0) },
            };
            self.coefficients = Some(CoefficientSpec {
                a,
                nu: None,
                m: None,
                a_lin: None,
                a0: None,
                b0: None,
                f0: None,
                f_vec: None,
                g: None,
            });
        }
        if self.initial.is_none() {
            let mut modes = vec![FourierMode {
                k: axis_k(d, 0),
                cos: 0.0,
                sin: 1.0,
            }];
            if d == 2 && kind != ScenarioKind::Heat {
                modes.push(FourierMode {
                    k: axis_k(d, 1),
                    cos: 0.5,
                    sin: 0.0,
                });
            }
            self.initial = match kind {
                ScenarioKind::Custom => return Err(Error::config("initial", "required for scenario `custom`")),
                _ => Some(InitialSpec::Fourier { modes }),
            };
        }
        if self.solver.method == Method::Auto {
            let c = self.coefficients.as_ref().expect("set above");
            self.solver.method = if kind == ScenarioKind::Quasilinear || c.a0.is_some() || c.b0.is_some() {
                Method::Direct
            } else {
                Method::Flow
            };
        }
        let steps = steps_of(&self.time)?;
        if self.diagnostics.record_every == 0 {
            self.diagnostics.record_every = (steps / 10).max(1);
        }
        if self.diagnostics.hoelder_t_min < 0.0 {
            self.diagnostics.hoelder_t_min = 0.1 * self.time.t_end;
        }
        // Building validates everything else and realizes (ν, M).
        let built = Scenario::build(self.clone())?;
        let c = self.coefficients.as_mut().expect("set above");
        c.nu = Some(built.coeffs.nu);
        c.m = Some(built.coeffs.m);
        self.noise.as_mut().expect("set above").modes = Some(built.family.modes());
        Ok(self)
    }

    /// The echoed form; parses back to `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs serialize")
    }

    /// SHA-256 of [`to_toml`](Self::to_toml), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn steps(&self) -> usize {
        steps_of(&self.time).expect("validated")
    }
}

fn noise_spec(family: &str) -> NoiseSpec {
    NoiseSpec {
        family: family.into(),
        modes: None,
        c: Vec::new(),
        profiles: Vec::new(),
    }
}

fn axis_k(d: usize, axis: usize) -> Vec<i64> {
    (0..d).map(|i| i64::from(i == axis)).collect()
}

fn steps_of(time: &TimeSpec) -> Result<usize> {
    if !(time.t_end > 0.0) || !time.t_end.is_finite() {
        return Err(Error::config("time.t_end", "must be positive and finite"));
    }
    if !(time.dt > 0.0) || time.dt > time.t_end {
        return Err(Error::config("time.dt", "must lie in (0, t_end]"));
    }
    let k = (time.t_end / time.dt).round();
    if (k * time.dt - time.t_end).abs() > 1e-9 * time.t_end {
        return Err(Error::config("time.dt", "t_end must be an integer multiple of dt"));
    }
    Ok(k as usize)
}

/// Everything a path needs, realized from a validated config.
#[derive(Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: PeriodicGrid,
    pub family: Arc<dyn NoiseFamily>,
    pub coeffs: CoefficientSet,
    pub u0: ScalarField,
    pub steps: usize,
    pub parabolicity: ParabolicityReport,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("scenario", &self.config.scenario)
            .field("grid", &self.grid)
            .field("steps", &self.steps)
            .field("parabolicity", &self.parabolicity)
            .finish_non_exhaustive()
    }
}

impl Scenario {
    /// Realize a config whose optional sections are already filled.
    pub fn build(config: ScenarioConfig) -> Result<Self> {
        let d = config.grid.d;
        let grid = PeriodicGrid::new(d, config.grid.n).map_err(|e| relabel(e, "grid.n"))?;
        let steps = steps_of(&config.time)?;
        let noise = config
            .noise
            .as_ref()
            .ok_or_else(|| Error::config("noise", "missing"))?;
        let params = NoiseParams {
            c: noise.c.clone(),
            profiles: noise.profiles.clone(),
        };
        let family = builtin_noise_family(&noise.family, d, &params)?;
        let n_modes = family.modes();
        if let Some(m) = noise.modes {
            if m != n_modes {
                return Err(Error::config(
                    "noise.modes",
                    format!("family `{}` has {n_modes} modes, not {m}", noise.family),
                ));
            }
        }
        let spec = config
            .coefficients
            .as_ref()
            .ok_or_else(|| Error::config("coefficients", "missing"))?;
        let mut coeffs = CoefficientSet::diffusion_only(d, diffusion(&spec.a, d)?, 0.0, 0.0);
        coeffs.a_lin = spec.a_lin.as_ref().map(|v| vector(v, d, "coefficients.a_lin")).transpose()?;
        coeffs.a0 = spec.a0.as_ref().map(|s| scalar(s, d, "coefficients.a0")).transpose()?;
        coeffs.f0 = spec.f0.as_ref().map(|s| scalar(s, d, "coefficients.f0")).transpose()?;
        coeffs.f_vec = spec.f_vec.as_ref().map(|v| vector(v, d, "coefficients.f_vec")).transpose()?;
        coeffs.b0 = spec.b0.as_ref().map(|v| per_mode(v, d, n_modes, "coefficients.b0")).transpose()?;
        coeffs.g = spec.g.as_ref().map(|v| per_mode(v, d, n_modes, "coefficients.g")).transpose()?;

        let method = config.solver.method;
        if method == Method::Flow && (coeffs.a0.is_some() || coeffs.b0.is_some()) {
            return Err(Error::config(
                "solver.method",
                "a0 and b0 need the direct solver",
            ));
        }
        let quasi = config.scenario == ScenarioKind::Quasilinear;
        if quasi && method != Method::Direct {
            return Err(Error::config("solver.method", "quasilinear runs use the direct solver"));
        }
        if quasi && config.quasilinear.is_none() {
            return Err(Error::config("quasilinear", "missing"));
        }
        let solver = config.solver.solver_config();
        solver.validate()?;
        if method == Method::FlowOnly && config.diagnostics.cross_validate {
            return Err(Error::config("diagnostics.cross_validate", "needs a PDE solve"));
        }
        if method == Method::Direct || config.diagnostics.cross_validate {
            pde::check_cfl(family.as_ref(), grid, config.time.dt, solver.cfl)?;
        }

        let times = [0.0, 0.5 * config.time.t_end, config.time.t_end];
        let parabolicity = match config.quasilinear.filter(|_| quasi) {
            Some(q) => quasilinear_report(&coeffs, family.as_ref(), grid, q, spec.nu, spec.m),
            None => {
                let mut r = parabolicity_report(&coeffs, family.as_ref(), grid, &times);
                r.nu = spec.nu.unwrap_or(r.nu_hat);
                r.m = spec.m.unwrap_or(r.m_hat);
                r.pass = r.nu_hat >= r.nu - DECLARATION_SLACK && r.m_hat <= r.m + DECLARATION_SLACK;
                r
            }
        };
        if !(parabolicity.nu > 0.0) || !parabolicity.pass {
            return Err(Error::Parabolicity {
                nu_hat: parabolicity.nu_hat,
                nu: parabolicity.nu,
                m_hat: parabolicity.m_hat,
                m: parabolicity.m,
            });
        }
        coeffs.nu = parabolicity.nu;
        coeffs.m = parabolicity.m;

        let dg = &config.diagnostics;
        if dg.record_every == 0 || dg.record_every > steps {
            return Err(Error::config("diagnostics.record_every", format!("must lie in 1..={steps}")));
        }
        if let Some(lt) = &dg.lambda_tail {
            if !(lt.t > 0.0 && lt.t <= config.time.t_end) {
                return Err(Error::config("diagnostics.lambda_tail.t", "must lie in (0, t_end]"));
            }
            if lt.point.len() != d {
                return Err(Error::config("diagnostics.lambda_tail.point", format!("expected {d} components")));
            }
        }
        let u0 = initial_field(
            config.initial.as_ref().ok_or_else(|| Error::config("initial", "missing"))?,
            grid,
        )?;
        Ok(Self {
            config,
            grid,
            family,
            coeffs,
            u0,
            steps,
            parabolicity,
        })
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.config.solver.solver_config()
    }

    /// Zero forcing and zeroth-order terms: the maximum principle applies.
    pub fn homogeneous(&self) -> bool {
        let c = &self.coeffs;
        !c.has_forcing() && c.a0.is_none() && c.b0.is_none()
    }
}

fn relabel(e: Error, path: &str) -> Error {
    match e {
        Error::Config { msg, .. } => Error::config(path, msg),
        other => other,
    }
}

/// `ν̂` from the law's infimum `base`, `M̂` from its supremum `base + amp`.
fn quasilinear_report(
    coeffs: &CoefficientSet,
    family: &dyn NoiseFamily,
    grid: PeriodicGrid,
    q: QuasilinearSpec,
    nu: Option<f64>,
    m: Option<f64>,
) -> ParabolicityReport {
    let d = grid.dim();
    let at = |v: f64| {
        let mut c = coeffs.clone();
        c.a = Coeff::Constant(small::scale(&small::identity(d), v));
        parabolicity_report(&c, family, grid, &[0.0])
    };
    let low = at(q.base);
    let high = at(q.base + q.amp.max(0.0));
    let nu = nu.unwrap_or(low.nu_hat);
    let m = m.unwrap_or(high.m_hat);
    ParabolicityReport {
        nu_hat: low.nu_hat,
        m_hat: high.m_hat,
        nu,
        m,
        pass: low.nu_hat >= nu - DECLARATION_SLACK && high.m_hat <= m + DECLARATION_SLACK && q.amp >= 0.0,
    }
}

fn diffusion(spec: &DiffusionSpec, d: usize) -> Result<Coeff<Mat2>> {
    let path = "coefficients.a";
    Ok(match spec {
        DiffusionSpec::Constant { matrix } => {
            if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                return Err(Error::config(format!("{path}.matrix"), format!("expected a {d}x{d} matrix")));
            }
            let mut a = small::ZERO_M;
            for i in 0..d {
                for j in 0..d {
                    a[i][j] = matrix[i][j];
                }
            }
            Coeff::Constant(a)
        }
        DiffusionSpec::Diagonal { values } => {
            if values.len() != d {
                return Err(Error::config(format!("{path}.values"), format!("expected {d} entries")));
            }
            let mut a = small::ZERO_M;
            for i in 0..d {
                a[i][i] = values[i];
            }
            Coeff::Constant(a)
        }
        DiffusionSpec::Checkerboard {
            seed,
            cells,
            low,
            high,
        } => {
            if *cells == 0 || !(low <= high) {
                return Err(Error::config(path, "checkerboard needs cells ≥ 1 and low ≤ high"));
            }
            checkerboard(d, *seed, *cells, *low, *high)
        }
        DiffusionSpec::Named { name } => {
            let id = small::identity(d);
            match name.as_str() {
                "identity" => Coeff::Constant(id),
                "modulated" => Coeff::static_func(move |x| {
                    let s = if d == 1 {
                        (2.0 * PI * x[0]).sin()
                    } else {
                        (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
                    };
                    small::scale(&id, 1.0 + 0.4 * s)
                }),
                "time_modulated" => Coeff::func(move |t, _| small::scale(&id, 1.0 + 0.3 * (2.0 * PI * t).sin())),
                other => {
                    return Err(Error::config(
                        format!("{path}.name"),
                        format!("unknown diffusion `{other}` (expected identity, modulated or time_modulated)"),
                    ))
                }
            }
        }
    })
}

fn fourier_eval(modes: &[(Vec2, f64, f64)], x: Vec2) -> f64 {
    modes
        .iter()
        .map(|(k, c, s)| {
            let (sn, cs) = (2.0 * PI * (k[0] * x[0] + k[1] * x[1])).sin_cos();
            c * cs + s * sn
        })
        .sum()
}

fn fourier_modes(modes: &[FourierMode], d: usize, path: &str) -> Result<Vec<(Vec2, f64, f64)>> {
    modes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            if m.k.len() != d {
                return Err(Error::config(format!("{path}.modes[{i}].k"), format!("expected {d} components")));
            }
            let k = [m.k[0] as f64, if d == 2 { m.k[1] as f64 } else { 0.0 }];
            Ok((k, m.cos, m.sin))
        })
        .collect()
}

fn scalar(spec: &ScalarSpec, d: usize, path: &str) -> Result<Coeff<f64>> {
    Ok(match spec {
        ScalarSpec::Constant { value } => Coeff::Constant(*value),
        ScalarSpec::Fourier { modes } => {
            let m = fourier_modes(modes, d, path)?;
            Coeff::static_func(move |x| fourier_eval(&m, x))
        }
    })
}

fn vector(specs: &[ScalarSpec], d: usize, path: &str) -> Result<Coeff<Vec2>> {
    if specs.len() != d {
        return Err(Error::config(path, format!("expected {d} components, got {}", specs.len())));
    }
    let parts: Vec<Coeff<f64>> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| scalar(s, d, &format!("{path}[{i}]")))
        .collect::<Result<_>>()?;
    if let (Some(Coeff::Constant(a)), Coeff::Constant(b)) = (parts.first(), parts.last().unwrap()) {
        if parts.iter().all(Coeff::is_constant) {
            return Ok(Coeff::Constant([*a, if d == 2 { *b } else { 0.0 }]));
        }
    }
    Ok(Coeff::static_func(move |x| {
        let mut v = [0.0; 2];
        for (vi, c) in v.iter_mut().zip(&parts) {
            *vi = c.eval(0.0, x);
        }
        v
    }))
}

fn per_mode(specs: &[ScalarSpec], d: usize, modes: usize, path: &str) -> Result<Vec<Coeff<f64>>> {
    if specs.len() != modes {
        return Err(Error::config(path, format!("expected one entry per noise mode ({modes}), got {}", specs.len())));
    }
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| scalar(s, d, &format!("{path}[{i}]")))
        .collect()
}

/// Realize the initial datum on `grid`.
pub fn initial_field(spec: &InitialSpec, grid: PeriodicGrid) -> Result<ScalarField> {
    let d = grid.dim();
    Ok(match spec {
        InitialSpec::Constant { value } => ScalarField::constant(grid, *value),
        InitialSpec::Fourier { modes } => {
            let m = fourier_modes(modes, d, "initial")?;
            ScalarField::from_fn(grid, |x| fourier_eval(&m, x))
        }
        InitialSpec::RandomHoelder {
            gamma0,
            seed,
            max_mode,
        } => {
            if !(*gamma0 > 0.0 && *gamma0 <= 1.0) {
                return Err(Error::config("initial.gamma0", "must lie in (0, 1]"));
            }
            if *max_mode == 0 {
                return Err(Error::config("initial.max_mode", "must be positive"));
            }
            random_hoelder(grid, *gamma0, *seed, *max_mode)
        }
    })
}

fn random_hoelder(grid: PeriodicGrid, gamma0: f64, seed: u64, max_mode: usize) -> ScalarField {
    let d = grid.dim();
    let kmax = max_mode as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::new();
    let k2_range = if d == 2 { -kmax..=kmax } else { 0..=0 };
    for k1 in 0..=kmax {
        for k2 in k2_range.clone() {
            // One representative of each ±k pair.
            if k1 == 0 && k2 <= 0 {
                continue;
            }
            let norm = ((k1 * k1 + k2 * k2) as f64).sqrt();
            let amp = norm.powf(-(gamma0 + 0.5 * d as f64));
            let c: f64 = StandardNormal.sample(&mut rng);
            let s: f64 = StandardNormal.sample(&mut rng);
            modes.push(([k1 as f64, k2 as f64], amp * c, amp * s));
        }
    }
    let mut f = ScalarField::from_fn(grid, |x| fourier_eval(&modes, x));
    let sup = f.sup_norm();
    if sup > 0.0 {
        f.values.iter_mut().for_each(|v| *v /= sup);
    }
    f
}

/// Transformed-diffusion ellipticity ratio at `point` and level `k`.
pub fn lambda_at_point(
    scenario: &Scenario,
    path: &crate::noise::BrownianPath,
    point: Vec2,
    k: usize,
) -> Result<f64> {
    let d = scenario.grid.dim();
    let p = crate::flow::evolve_point(
        scenario.family.as_ref(),
        &path.slice(0, k),
        point,
        d,
        scenario.config.solver.scheme,
    )?;
    let t = k as f64 * path.dt;
    let y = p.position();
    let mut modes = vec![ModeEval::default(); scenario.family.modes()];
    scenario.family.eval(t, y, Order::Value, &mut modes);
    let a = scenario.coeffs.a.eval(t, y);
    let alpha = crate::transform::transformed_diffusion(&a, &modes, &p.inv_jacobian);
    let (lo, hi) = small::sym_eigs(&alpha, d);
    let (lo, hi) = if lo.abs() <= hi.abs() {
        (lo.abs(), hi.abs())
    } else {
        (hi.abs(), lo.abs())
    };
    Ok(if lo == 0.0 { f64::INFINITY } else { hi / lo })
}
