//! Next-shift haul-fleet payload forecasting for open-pit mines.
//!
//! The crate covers the whole desk-scale pipeline: a statistically calibrated
//! shift simulator, CSV ingestion with rain gap repair, lag/rolling feature
//! engineering, a residual-bootstrap fleet forecaster, gradient-boosted
//! regression trees with exact tree Shapley attribution, an attention LSTM
//! trained by backpropagation through time, and the evaluation harness that
//! turns predictions into plot-ready analysis files.
//!
//! Numeric kernels (trees, Shapley, LSTM, metrics, scaling) are generic over
//! the scalar type via [`scalar::Scalar`]; the pipeline itself runs in [`Real`]
//! (f64) so that the tight oracle tolerances used by the test suite hold.

pub mod eval;
pub mod features;
pub mod fleetmc;
pub mod gbrt;
pub mod ingest;
pub mod lstm;
pub mod pipeline;
pub mod scalar;
pub mod simdata;

/// Scalar type used by the end-to-end pipeline.
pub type Real = f64;
