//! Deep partially linear transformation models (DPLTM) for right-censored
//! survival data.
//!
//! The model transforms the survival time through an unknown increasing
//! function and splits covariate effects into an interpretable linear part
//! and a dense ReLU network:
//!
//! ```text
//! H(U) = -beta' Z - g(X) + eps,    hazard of eps: e^t / (1 + r e^t)
//! ```
//!
//! Fitting is sieve maximum likelihood: `H` lives in a monotone B-spline
//! space, `g` in a feed-forward ReLU network class, and all parameters are
//! updated jointly by full-batch Adam with early stopping. Confidence
//! intervals and Wald tests for the linear coefficients come from an
//! estimated semiparametric information bound.
//!
//! Everything numeric is generic over [`num::Scalar`] (`f32` or `f64`);
//! the `*64` aliases at the crate root pin the double-precision versions
//! that the CLI and the test suites use.

pub mod data;
pub mod error;
pub mod error_family;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod net;
pub mod num;
pub mod opt;
pub mod simulate;
pub mod spline;
pub mod train;

pub use error::{Error, Result};

/// Double-precision aliases for the main entry types.
pub type ErrorModel64 = error_family::ErrorModel<f64>;
pub type SplineBasis64 = spline::SplineBasis<f64>;
pub type MonotoneSpline64 = spline::MonotoneSpline<f64>;
pub type DeepNet64 = net::DeepNet<f64>;
pub type SurvivalDataset64 = data::SurvivalDataset<f64>;
pub type DpltmParams64 = model::DpltmParams<f64>;
pub type TrainConfig64 = train::TrainConfig<f64>;
pub type FitResult64 = train::FitResult<f64>;
pub type SimDesign64 = simulate::SimDesign<f64>;
pub type InfoBound64 = inference::InfoBoundEstimate<f64>;
pub type InferenceReport64 = inference::InferenceReport<f64>;
pub type EvalReport64 = metrics::EvalReport<f64>;
