//! Cross-impact cost of executing two simultaneous round-trip trades in a pair
//! of stocks, and calibration of the propagator kernels behind it from
//! per-second trade and quote data.
//!
//! - [`kernels`]: lag kernels, volume impacts, price paths.
//! - [`execution`]: strategy parameters, schedules, regions, cost functionals.
//! - [`optimizer`]: cost surfaces over `(κ_i, κ_j)` and minimization.
//! - [`ingest`]: trade/quote files, session filtering, per-second bars.
//! - [`microstructure`]: trade signs, responses, sign correlators.
//! - [`calibration`]: volume-impact and kernel estimation.
//! - [`synth`]: synthetic corpora with known ground truth.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod execution;
pub mod ingest;
pub mod kernels;
pub mod microstructure;
pub mod optimizer;
pub mod quadrature;
pub mod synth;

pub use error::{Error, Result};
