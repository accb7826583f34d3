//! Mortality forecasting with signature-based functional decomposition.
//!
//! The pipeline ingests age x year tables of central death rates, smooths the
//! log rates per year with monotonicity-constrained penalized regression
//! splines, decomposes the smoothed surface into an age basis derived from
//! truncated path signatures of each age's time series, extrapolates the
//! time coefficients with automatically selected ARIMA models, and produces
//! point forecasts with normal-theory and bootstrap prediction intervals.
//! Lee-Carter and FPCA-based baselines plus an expanding-window evaluation
//! harness are included for comparison.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `huts` binary for a batch CLI over the same functionality.

pub mod cli;
pub mod decomposition;
pub mod error;
pub mod evaluation;
pub mod forecast;
pub mod hmd;
pub mod signature;
pub mod smoothing;
pub mod synthetic;
pub mod uncertainty;

pub use error::{Error, Result};
