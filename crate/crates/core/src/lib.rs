//! Calibration of quantile-based probabilistic time-series forecasts with
//! conformal prediction, including context-aware weighted variants.
//!
//! The crate provides:
//!
//! - [`quantile`]: the weighted-quantile primitive (left-continuous inverse CDF
//!   of a discrete weighted mixture) that every calibration strategy uses.
//! - [`types`]: shared domain types (timestamps, records, coverage levels,
//!   prediction intervals).
//! - [`features`]: covariate construction — historical lags, cyclic time
//!   embeddings, and the normalized-time-of-solar-day feature, with a
//!   NOAA-style sunrise/sunset computation.
//! - [`conformal`]: CQR and its weighted variants (RBF/Laplacian kernels,
//!   k-means cluster restriction, k-nearest neighbors, exponential time decay)
//!   plus the adaptive coverage-feedback variant.
//! - [`metrics`]: PICP, average interval width, Winkler score, and hourly
//!   conditional coverage.
//! - [`backtest`]: the rolling day-ahead recalibration engine with periodic
//!   grid-search hyperparameter/feature tuning on a trailing validation week.
//! - [`synth`]: synthetic data generation with analytically known conditional
//!   distributions, used as the statistical oracle in tests.
//! - [`io`]: CSV dataset ingestion (with quantile-crossing repair), report
//!   emission, and run configuration.
//!
//! Numeric kernels are generic over [`scalar::Real`] (`f32` or `f64`); the
//! pipeline itself runs on [`Scalar`].

pub mod backtest;
pub mod conformal;
pub mod features;
pub mod io;
pub mod metrics;
pub mod quantile;
pub mod scalar;
pub mod synth;
pub mod types;

/// Concrete scalar type used by the data pipeline.
pub type Scalar = f64;

pub use quantile::{empirical_quantile, weighted_quantile, WeightedSample};
pub use types::{PredictionInterval, TargetCoverage, TimeSeriesRecord, Timestamp};
