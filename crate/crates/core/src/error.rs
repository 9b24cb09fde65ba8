use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("flow degeneracy at node {node} (t = {t}): det = {det}")]
    FlowDegeneracy { node: usize, t: f64, det: f64 },

    #[error("flow inversion failed at node {node}: residual {residual:e} after {iters} iterations")]
    InversionFailure {
        node: usize,
        residual: f64,
        iters: usize,
    },

    #[error("non-finite transformed coefficient at node {node} ({what})")]
    Transformation { node: usize, what: &'static str },

    #[error("transformed diffusion lost positivity at {count} node(s)")]
    DegenerateCoefficients { count: usize },

    #[error("linear solve did not converge: {iters} iterations, residual {residual:e}")]
    LinearSolve { iters: usize, residual: f64 },

    #[error("blow-up guard tripped at t = {t}: sup |u| = {sup}")]
    BlowUp { t: f64, sup: f64 },

    #[error("parabolicity violated: nu_hat = {nu_hat}, declared nu = {nu}, M_hat = {m_hat}, declared M = {m}")]
    Parabolicity {
        nu_hat: f64,
        nu: f64,
        m_hat: f64,
        m: f64,
    },

    #[error("CFL guard violated: dt = {dt} exceeds {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
