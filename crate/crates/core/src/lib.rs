//! Parabolic SPDEs with transport noise on the torus, solved along stochastic flows.

// `!(x > 0.0)` also rejects NaN; index loops follow the tensor notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coeffs;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod grid;
pub mod inverse;
pub mod linalg;
pub mod noise;
pub mod pde;
pub mod pipeline;
pub mod run;
pub mod scenario;
pub mod small;
pub mod transform;

pub use error::{Error, Result};
