//! Monte Carlo orchestration and the output directory.
//!
//! Paths run on a rayon pool but every path draws from its own counter-based
//! stream and results are gathered in index order, so all outputs except the
//! manifest's `timing` entry are a function of the config alone.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{hoelder_estimate, lambda_tail_probability, stopping_time_from_series};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::flow::{FlowState, FlowStepper};
use crate::inverse::InverseFlowField;
use crate::noise::{derive_path_seed, sample_brownian_increments, BrownianPath};
use crate::pde::{self, Solution};
use crate::pipeline::{level_stats, relative_l2_gap, solve_flow_method, FlowMethodConfig, LevelStats};
use crate::transform;
use crate::scenario::{
    lambda_at_point, parse_config, DiffusionSpec, InitialSpec, Method, Scenario, ScenarioConfig, ScenarioKind,
    SnapshotMode,
};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.toml";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const PATHS_CSV: &str = "paths.csv";
pub const REPORT: &str = "report.json";
const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    pub fail_fast: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            fail_fast: false,
        }
    }
}

/// One row of `diagnostics.csv`. Flow columns are NaN for the direct solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub path: u64,
    pub level: usize,
    pub t: f64,
    pub u_sup: f64,
    pub u_l2: f64,
    pub u_mean: f64,
    pub distortion: f64,
    pub max_jacobian_norm: f64,
    pub max_inv_jacobian_norm: f64,
    pub min_det: f64,
    pub max_ratio: f64,
    pub lower_slack: f64,
    pub upper_slack: f64,
    pub inverse_residual: f64,
    pub cross_gap: f64,
}

/// One row of `paths.csv`. Unavailable quantities are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path: u64,
    pub seed: u64,
    pub ok: bool,
    pub final_sup: f64,
    pub hoelder_exponent: f64,
    pub hoelder_seminorm: f64,
    pub stopping_time: f64,
    pub lambda_at_point: f64,
    pub max_principle_excursion: f64,
    pub cross_gap: f64,
    pub oracle_error: f64,
}

impl PathSummary {
    fn failed(path: u64, seed: u64) -> Self {
        Self {
            path,
            seed,
            ok: false,
            final_sup: f64::NAN,
            hoelder_exponent: f64::NAN,
            hoelder_seminorm: f64::NAN,
            stopping_time: f64::NAN,
            lambda_at_point: f64::NAN,
            max_principle_excursion: f64::NAN,
            cross_gap: f64::NAN,
            oracle_error: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub quantity: &'static str,
    pub level: usize,
    pub t: f64,
    pub field: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub summary: PathSummary,
    pub error: Option<String>,
    pub rows: Vec<LevelRow>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub k: f64,
    pub frequency: f64,
    pub standard_error: f64,
    /// Closed-form tail for sine/cosine noise with equal constant diagonal diffusion.
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingStats {
    pub m: f64,
    pub mean: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// Paths with `τ_m < T`.
    pub stopped: usize,
}

/// Cross-path statistics over successful paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub paths_ok: usize,
    pub paths_failed: usize,
    pub lambda_tail: Vec<TailRow>,
    pub hoelder_histogram: Vec<HistogramBin>,
    pub hoelder_missing: usize,
    pub max_principle_violations: Option<usize>,
    pub stopping: Option<StoppingStats>,
    pub max_cross_gap: Option<f64>,
    pub max_oracle_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub paths: Vec<PathRecord>,
    pub aggregates: Aggregates,
    pub timing: Timing,
}

/// Run every path of `scenario`.
///
/// A failing path is recorded and skipped; with `fail_fast` the run stops
/// and the error of the lowest failing index is returned.
pub fn run_scenario(scenario: &Scenario, opts: RunOptions) -> Result<RunSummary> {
    let start = Instant::now();
    let cfg = &scenario.config;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let stop = AtomicBool::new(false);
    let results: Vec<Option<(u64, Result<PathRecord>)>> = pool.install(|| {
        (0..cfg.monte_carlo.paths)
            .into_par_iter()
            .map(|p| {
                if opts.fail_fast && stop.load(Ordering::Relaxed) {
                    return None;
                }
                let r = run_path(scenario, p);
                if r.is_err() {
                    stop.store(true, Ordering::Relaxed);
                }
                Some((p, r))
            })
            .collect()
    });
    let mut paths = Vec::with_capacity(results.len());
    for (p, r) in results.into_iter().flatten() {
        match r {
            Ok(rec) => paths.push(rec),
            Err(e) if opts.fail_fast => {
                return Err(Error::config(format!("path {p}"), e.to_string()));
            }
            Err(e) => paths.push(PathRecord {
                summary: PathSummary::failed(p, derive_path_seed(cfg.monte_carlo.seed, p)),
                error: Some(e.to_string()),
                rows: Vec::new(),
                snapshots: Vec::new(),
            }),
        }
    }
    let summaries: Vec<PathSummary> = paths.iter().map(|r| r.summary.clone()).collect();
    let aggregates = aggregate(cfg, &summaries);
    Ok(RunSummary {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        paths,
        aggregates,
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
            workers: opts.workers.max(1),
        },
    })
}

/// Everything for one path index.
pub fn run_path(scenario: &Scenario, index: u64) -> Result<PathRecord> {
    let cfg = &scenario.config;
    let seed = derive_path_seed(cfg.monte_carlo.seed, index);
    let family = scenario.family.as_ref();
    let path = sample_brownian_increments(seed, scenario.steps, family.modes(), cfg.time.dt);
    let solver = scenario.solver_config();
    let every = cfg.diagnostics.record_every;

    let (u, stats, cross) = match cfg.solver.method {
        Method::Flow | Method::Auto => {
            let fm = solve_flow_method(
                &scenario.coeffs,
                family,
                &scenario.u0,
                &path,
                &FlowMethodConfig {
                    scheme: cfg.solver.scheme,
                    solver,
                    record_every: every,
                    ..Default::default()
                },
            )?;
            let cross = if cfg.diagnostics.cross_validate {
                Some(pde::solve_spde_direct(&scenario.coeffs, family, &scenario.u0, &path, &solver, every)?)
            } else {
                None
            };
            (Some(fm.u), Some(fm.stats), cross)
        }
        Method::Direct => {
            let sol = match cfg.quasilinear.filter(|_| cfg.scenario == ScenarioKind::Quasilinear) {
                Some(q) => {
                    let d = scenario.grid.dim();
                    let a = move |_t: f64, _x: [f64; 2], y: f64| q.eval(d, y);
                    pde::solve_quasilinear(&a, family, &scenario.u0, &path, &solver, every)?
                }
                None => pde::solve_spde_direct(&scenario.coeffs, family, &scenario.u0, &path, &solver, every)?,
            };
            (Some(sol), None, None)
        }
        Method::FlowOnly => (None, Some(flow_only_stats(scenario, &path)?), None),
    };

    let levels: Vec<usize> = match &u {
        Some(u) => u.levels.clone(),
        None => (0..=scenario.steps).filter(|&k| pde::should_record(k, every, scenario.steps)).collect(),
    };
    let mut rows = Vec::with_capacity(levels.len());
    for (j, &level) in levels.iter().enumerate() {
        let mut row = LevelRow {
            path: index,
            level,
            t: level as f64 * cfg.time.dt,
            u_sup: f64::NAN,
            u_l2: f64::NAN,
            u_mean: f64::NAN,
            distortion: f64::NAN,
            max_jacobian_norm: f64::NAN,
            max_inv_jacobian_norm: f64::NAN,
            min_det: f64::NAN,
            max_ratio: f64::NAN,
            lower_slack: f64::NAN,
            upper_slack: f64::NAN,
            inverse_residual: f64::NAN,
            cross_gap: f64::NAN,
        };
        if let Some(u) = &u {
            let field = &u.fields[j];
            row.t = u.times[j];
            row.u_sup = field.sup_norm();
            row.u_l2 = (field.values.iter().map(|v| v * v).sum::<f64>() / field.values.len() as f64).sqrt();
            row.u_mean = field.mean();
            if let Some(c) = &cross {
                row.cross_gap = relative_l2_gap(&c.fields[j], field);
            }
        }
        if let Some(s) = stats.as_ref().map(|s| &s[level]) {
            row.distortion = s.distortion;
            row.max_jacobian_norm = s.max_jacobian_norm;
            row.max_inv_jacobian_norm = s.max_inv_jacobian_norm;
            row.min_det = s.min_det;
            row.max_ratio = s.max_ratio;
            row.lower_slack = s.lower_slack;
            row.upper_slack = s.upper_slack;
            row.inverse_residual = s.inverse_residual;
        }
        rows.push(row);
    }

    let mut summary = PathSummary::failed(index, seed);
    summary.ok = true;
    if let Some(u) = &u {
        summary.final_sup = u.last().sup_norm();
        if let Some(c) = &cross {
            summary.cross_gap = relative_l2_gap(c.last(), u.last());
        }
        if cfg.diagnostics.hoelder {
            let (fields, times): (Vec<ScalarField>, Vec<f64>) = u
                .fields
                .iter()
                .zip(&u.times)
                .filter(|(_, &t)| t > cfg.diagnostics.hoelder_t_min)
                .map(|(f, &t)| (f.clone(), t))
                .unzip();
            if let Ok(e) = hoelder_estimate(&fields, &times, true) {
                summary.hoelder_exponent = e.exponent;
                summary.hoelder_seminorm = e.seminorm;
            }
        }
        if scenario.homogeneous() {
            let (lo, hi) = scenario.u0.min_max();
            summary.max_principle_excursion = u
                .fields
                .iter()
                .map(|f| {
                    let (a, b) = f.min_max();
                    (lo - a).max(b - hi).max(0.0)
                })
                .fold(0.0, f64::max);
        }
        if let Some(err) = heat_oracle_error(scenario, u) {
            summary.oracle_error = err;
        }
    }
    if let Some(stats) = &stats {
        let times: Vec<f64> = stats.iter().map(|s| s.t).collect();
        let dist: Vec<f64> = stats.iter().map(|s| s.distortion).collect();
        summary.stopping_time = stopping_time_from_series(&times, &dist, cfg.diagnostics.stopping_m).tau;
    }
    if let Some(lt) = &cfg.diagnostics.lambda_tail {
        let k = (lt.t / cfg.time.dt).round() as usize;
        let point = [lt.point[0], lt.point.get(1).copied().unwrap_or(0.0)];
        summary.lambda_at_point = lambda_at_point(scenario, &path, point, k)?;
    }

    let snapshots = match (&u, cfg.diagnostics.snapshots) {
        (None, _) | (_, SnapshotMode::None) => Vec::new(),
        (Some(u), SnapshotMode::Final) => vec![snapshot(u, u.levels.len() - 1)],
        (Some(u), SnapshotMode::Recorded) => (0..u.levels.len()).map(|j| snapshot(u, j)).collect(),
    };
    Ok(PathRecord {
        summary,
        error: None,
        rows,
        snapshots,
    })
}

/// Flow and transformed-coefficient statistics at every level, without a PDE solve.
fn flow_only_stats(scenario: &Scenario, path: &BrownianPath) -> Result<Vec<LevelStats>> {
    let family = scenario.family.as_ref();
    let c = &scenario.coeffs;
    let mut flow = FlowStepper::new(family, path, scenario.grid, 0, scenario.config.solver.scheme);
    let identity = InverseFlowField::identity(scenario.grid, 0.0);
    let stats_at = |k: usize, state: &FlowState| -> Result<LevelStats> {
        let tc = transform::transform_level(c, family, state)?;
        let mut s = level_stats(k, state, &tc, &identity, c.nu, c.m);
        s.inverse_residual = f64::NAN;
        Ok(s)
    };
    let mut out = vec![stats_at(0, flow.state())?];
    for k in 1..=path.steps {
        let state = flow.step()?;
        out.push(stats_at(k, state)?);
    }
    Ok(out)
}

fn snapshot(u: &Solution, j: usize) -> Snapshot {
    Snapshot {
        quantity: "u",
        level: u.levels[j],
        t: u.times[j],
        field: u.fields[j].clone(),
    }
}

/// Relative max error against the Fourier solution of the heat scenario
/// with constant diffusion and Fourier initial data.
fn heat_oracle_error(scenario: &Scenario, u: &Solution) -> Option<f64> {
    let cfg = &scenario.config;
    if cfg.scenario != ScenarioKind::Heat || scenario.family.modes() != 0 || !scenario.homogeneous() {
        return None;
    }
    if scenario.coeffs.a_lin.is_some() {
        return None;
    }
    let a = match cfg.coefficients.as_ref()?.a {
        DiffusionSpec::Constant { .. } | DiffusionSpec::Diagonal { .. } => scenario.coeffs.a.eval(0.0, [0.0; 2]),
        _ => return None,
    };
    let InitialSpec::Fourier { modes } = cfg.initial.as_ref()? else {
        return None;
    };
    let t = *u.times.last()?;
    let d = scenario.grid.dim();
    let exact = ScalarField::from_fn(scenario.grid, |x| {
        modes
            .iter()
            .map(|m| {
                let k = [m.k[0] as f64, if d == 2 { m.k[1] as f64 } else { 0.0 }];
                let mut q = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        q += k[i] * a[i][j] * k[j];
                    }
                }
                let decay = (-4.0 * std::f64::consts::PI.powi(2) * q * t).exp();
                let (s, c) = (2.0 * std::f64::consts::PI * (k[0] * x[0] + k[1] * x[1])).sin_cos();
                decay * (m.cos * c + m.sin * s)
            })
            .sum()
    });
    let scale = exact.sup_norm();
    if scale == 0.0 {
        return None;
    }
    let err = u
        .last()
        .values
        .iter()
        .zip(&exact.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Some(err / scale)
}

/// Cross-path statistics of the successful rows of `paths`.
pub fn aggregate(cfg: &ScenarioConfig, paths: &[PathSummary]) -> Aggregates {
    let ok: Vec<&PathSummary> = paths.iter().filter(|p| p.ok).collect();
    let count = ok.len();
    let lambda_tail = match &cfg.diagnostics.lambda_tail {
        Some(lt) if count > 0 => {
            let equal_diag = matches!(
                &cfg.coefficients.as_ref().map(|c| &c.a),
                Some(DiffusionSpec::Diagonal { values }) if values.windows(2).all(|w| w[0] == w[1])
            );
            let closed_form = cfg.noise.as_ref().is_some_and(|n| n.family == "sincos2d") && equal_diag;
            lt.k.iter()
                .map(|&k| {
                    let hits = ok.iter().filter(|p| p.lambda_at_point > k).count();
                    let f = hits as f64 / count as f64;
                    let predicted = closed_form.then(|| lambda_tail_probability(k, lt.t));
                    let p = predicted.unwrap_or(f);
                    TailRow {
                        k,
                        frequency: f,
                        standard_error: (p * (1.0 - p) / count as f64).sqrt(),
                        predicted,
                    }
                })
                .collect()
        }
        _ => Vec::new(),
    };
    let mut hoelder_histogram: Vec<HistogramBin> = (0..10)
        .map(|i| HistogramBin {
            lo: i as f64 / 10.0,
            hi: (i + 1) as f64 / 10.0,
            count: 0,
        })
        .collect();
    let mut hoelder_missing = 0;
    for p in &ok {
        let e = p.hoelder_exponent;
        if e.is_finite() {
            let bin = ((e * 10.0).floor().max(0.0) as usize).min(9);
            hoelder_histogram[bin].count += 1;
        } else {
            hoelder_missing += 1;
        }
    }
    let excursions: Vec<f64> = ok.iter().map(|p| p.max_principle_excursion).filter(|v| v.is_finite()).collect();
    let max_principle_violations = (!excursions.is_empty()).then(|| {
        excursions
            .iter()
            .filter(|&&e| e > cfg.diagnostics.max_principle_tol)
            .count()
    });
    let mut taus: Vec<f64> = ok.iter().map(|p| p.stopping_time).filter(|v| v.is_finite()).collect();
    taus.sort_by(f64::total_cmp);
    let stopping = (!taus.is_empty()).then(|| StoppingStats {
        m: cfg.diagnostics.stopping_m,
        mean: taus.iter().sum::<f64>() / taus.len() as f64,
        min: taus[0],
        median: taus[taus.len() / 2],
        max: taus[taus.len() - 1],
        stopped: taus.iter().filter(|&&t| t < cfg.time.t_end - 1e-12).count(),
    });
    let max_of = |f: fn(&PathSummary) -> f64| {
        ok.iter()
            .map(|p| f(p))
            .filter(|v| v.is_finite())
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    };
    Aggregates {
        paths_ok: count,
        paths_failed: paths.len() - count,
        lambda_tail,
        hoelder_histogram,
        hoelder_missing,
        max_principle_violations,
        stopping,
        max_cross_gap: max_of(|p| p.cross_gap),
        max_oracle_error: max_of(|p| p.oracle_error),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub index: u64,
    pub seed: u64,
    pub status: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub scenario: ScenarioKind,
    pub config_hash: String,
    pub master_seed: u64,
    pub paths_requested: u64,
    pub paths: Vec<PathEntry>,
    pub aggregates: Aggregates,
    pub files: Vec<String>,
    /// Wall-clock facts; the only entry that may differ between equal runs.
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub d: usize,
    pub n: usize,
    pub t: f64,
    pub level: usize,
    pub quantity: String,
    pub path_index: u64,
    pub config_hash: String,
    pub dtype: String,
    pub len: usize,
}

#[derive(Serialize)]
struct Column {
    name: &'static str,
    kind: &'static str,
    description: &'static str,
}

const DIAGNOSTIC_COLUMNS: [Column; 15] = [
    Column { name: "path", kind: "u64", description: "path index" },
    Column { name: "level", kind: "usize", description: "time level k" },
    Column { name: "t", kind: "f64", description: "time k·dt" },
    Column { name: "u_sup", kind: "f64", description: "max_x |u|" },
    Column { name: "u_l2", kind: "f64", description: "root mean square of u over the nodes" },
    Column { name: "u_mean", kind: "f64", description: "mean of u over the nodes" },
    Column { name: "distortion", kind: "f64", description: "max_x (|ψ| + |Dξ|), operator norms; NaN without a flow" },
    Column { name: "max_jacobian_norm", kind: "f64", description: "max_x |Dξ|" },
    Column { name: "max_inv_jacobian_norm", kind: "f64", description: "max_x |ψ|" },
    Column { name: "min_det", kind: "f64", description: "min_x det Dξ" },
    Column { name: "max_ratio", kind: "f64", description: "max_x λ_max/λ_min of sym(α)" },
    Column { name: "lower_slack", kind: "f64", description: "min_x (λ_min(sym α) − ν/|Dξ|²)" },
    Column { name: "upper_slack", kind: "f64", description: "min_x (M|ψ|² − λ_max(sym α))" },
    Column { name: "inverse_residual", kind: "f64", description: "max_y |ξ(Ψ(y)) − y|" },
    Column { name: "cross_gap", kind: "f64", description: "relative L² gap to the direct solver; NaN when off" },
];

const PATH_COLUMNS: [Column; 11] = [
    Column { name: "path", kind: "u64", description: "path index" },
    Column { name: "seed", kind: "u64", description: "derived stream seed" },
    Column { name: "ok", kind: "bool", description: "path completed" },
    Column { name: "final_sup", kind: "f64", description: "max_x |u(T)|" },
    Column { name: "hoelder_exponent", kind: "f64", description: "parabolic Hölder exponent of u on (hoelder_t_min, T]" },
    Column { name: "hoelder_seminorm", kind: "f64", description: "fitted seminorm" },
    Column { name: "stopping_time", kind: "f64", description: "first time the distortion reaches stopping_m, else T" },
    Column { name: "lambda_at_point", kind: "f64", description: "ellipticity ratio of α at lambda_tail.point and lambda_tail.t" },
    Column { name: "max_principle_excursion", kind: "f64", description: "largest exit of u from [min u0, max u0]; NaN with forcing" },
    Column { name: "cross_gap", kind: "f64", description: "relative L² gap to the direct solver at T" },
    Column { name: "oracle_error", kind: "f64", description: "relative max error against the Fourier heat solution" },
];

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let p = dir.join(name);
    io(&p, fs::write(&p, bytes))
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("plain data serializes");
    s.push(b'\n');
    s
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[Column]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let map = |e: csv::Error| Error::config("csv", e.to_string());
    w.write_record(header.iter().map(|c| c.name)).map_err(map)?;
    for r in rows {
        w.serialize(r).map_err(map)?;
    }
    w.into_inner().map_err(|e| Error::config("csv", e.to_string()))
}

pub fn snapshot_stem(path_index: u64, quantity: &str, level: usize) -> String {
    format!("path{path_index:06}_{quantity}_level{level:08}")
}

/// Write the run into `dir`:
/// `config.toml`, `manifest.json`, and when any path ran, `diagnostics.csv`,
/// `paths.csv` with `.schema.json` sidecars and `snapshots/*.bin` with
/// `.json` sidecars.
pub fn write_outputs(summary: &RunSummary, dir: &Path) -> Result<()> {
    io(dir, fs::create_dir_all(dir))?;
    let mut files = vec![CONFIG_ECHO.to_string()];
    write_file(dir, CONFIG_ECHO, summary.config.to_toml().as_bytes())?;
    if !summary.paths.is_empty() {
        let rows: Vec<LevelRow> = summary.paths.iter().flat_map(|p| p.rows.iter().copied()).collect();
        write_file(dir, DIAGNOSTICS_CSV, &csv_bytes(&rows, &DIAGNOSTIC_COLUMNS)?)?;
        write_file(dir, "diagnostics.schema.json", &json(&DIAGNOSTIC_COLUMNS))?;
        let per: Vec<&PathSummary> = summary.paths.iter().map(|p| &p.summary).collect();
        write_file(dir, PATHS_CSV, &csv_bytes(&per, &PATH_COLUMNS)?)?;
        write_file(dir, "paths.schema.json", &json(&PATH_COLUMNS))?;
        files.extend(
            [DIAGNOSTICS_CSV, "diagnostics.schema.json", PATHS_CSV, "paths.schema.json"]
                .map(String::from),
        );
        let snaps = dir.join(SNAPSHOT_DIR);
        for rec in &summary.paths {
            for s in &rec.snapshots {
                if !snaps.exists() {
                    io(&snaps, fs::create_dir_all(&snaps))?;
                }
                let stem = snapshot_stem(rec.summary.path, s.quantity, s.level);
                let bytes: Vec<u8> = s.field.values.iter().flat_map(|v| v.to_le_bytes()).collect();
                write_file(&snaps, &format!("{stem}.bin"), &bytes)?;
                let meta = SnapshotMeta {
                    d: s.field.grid.dim(),
                    n: s.field.grid.n(),
                    t: s.t,
                    level: s.level,
                    quantity: s.quantity.into(),
                    path_index: rec.summary.path,
                    config_hash: summary.config_hash.clone(),
                    dtype: "f64le".into(),
                    len: s.field.values.len(),
                };
                write_file(&snaps, &format!("{stem}.json"), &json(&meta))?;
                files.push(format!("{SNAPSHOT_DIR}/{stem}.bin"));
                files.push(format!("{SNAPSHOT_DIR}/{stem}.json"));
            }
        }
    }
    files.push(MANIFEST.into());
    let manifest = Manifest {
        format: 1,
        scenario: summary.config.scenario,
        config_hash: summary.config_hash.clone(),
        master_seed: summary.config.monte_carlo.seed,
        paths_requested: summary.config.monte_carlo.paths,
        paths: summary
            .paths
            .iter()
            .map(|p| PathEntry {
                index: p.summary.path,
                seed: p.summary.seed,
                status: if p.error.is_some() { "failed" } else { "ok" }.into(),
                error: p.error.clone(),
            })
            .collect(),
        aggregates: summary.aggregates.clone(),
        files,
        timing: summary.timing.clone(),
    };
    write_file(dir, MANIFEST, &json(&manifest))
}

/// Read a snapshot written by [`write_outputs`].
pub fn read_snapshot(bin: &Path) -> Result<(SnapshotMeta, Vec<f64>)> {
    let meta_path = bin.with_extension("json");
    let meta: SnapshotMeta = serde_json::from_slice(&io(&meta_path, fs::read(&meta_path))?)
        .map_err(|e| Error::config(meta_path.display().to_string(), e.to_string()))?;
    let bytes = io(bin, fs::read(bin))?;
    if bytes.len() != 8 * meta.len {
        return Err(Error::config(
            bin.display().to_string(),
            format!("expected {} bytes, found {}", 8 * meta.len, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((meta, values))
}

/// Re-aggregate an existing output directory from its echoed config and
/// `paths.csv`, and write `report.json` beside them.
pub fn report(dir: &Path) -> Result<(ScenarioConfig, Aggregates)> {
    let cfg_path = dir.join(CONFIG_ECHO);
    let cfg = parse_config(&io(&cfg_path, fs::read_to_string(&cfg_path))?)?;
    let csv_path: PathBuf = dir.join(PATHS_CSV);
    let paths: Vec<PathSummary> = if csv_path.exists() {
        let mut r = io(&csv_path, csv::Reader::from_path(&csv_path).map_err(|e| std::io::Error::other(e.to_string())))?;
        r.deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::config(csv_path.display().to_string(), e.to_string()))?
    } else {
        Vec::new()
    };
    let agg = aggregate(&cfg, &paths);
    write_file(dir, REPORT, &json(&agg))?;
    Ok((cfg, agg))
}
