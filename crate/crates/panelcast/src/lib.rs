//! Panel time-series forecasting from a leading count indicator.
//!
//! `panelcast` estimates heterogeneous-unit lagged regressions of a target
//! count series (e.g. a hospital's inpatient census) on a leading indicator
//! series (e.g. daily symptom attestations aggregated by home zip code),
//! tests panel Granger non-causality with asymptotic and fixed-T
//! standardized statistics, selects the lag order by BIC, and produces and
//! scores short-horizon recursive forecasts. A seeded synthetic-panel
//! generator with known causal structure serves as the verification oracle
//! for test size/power, lag and coefficient recovery, and forecast quality.
//!
//! The crate is organized along the pipeline:
//!
//! - [`ingest`] - CSV loading, zip-to-unit aggregation, calendar alignment.
//! - [`preprocess`] - moving-average smoothing, log transforms, holdout split.
//! - [`linmod`] - per-unit lagged OLS, Wald statistics, BIC lag selection.
//! - [`granger`] - the panel non-causality test.
//! - [`forecast`] - recursive multi-step forecasting and back-transformation.
//! - [`evaluate`] - MAE/WMAPE scoring and descriptive tables.
//! - [`simulate`] - the synthetic ground-truth generator and its
//!   Monte Carlo validation suite ([`simulate::suite`]).
//! - [`cli`] - the artifact-writing commands behind the `panelcast` binary.
//!
//! # Example
//!
//! ```
//! use panelcast::simulate::{simulate_panel, SimConfig};
//! use panelcast::preprocess::{transform_panel, TransformSpec};
//! use panelcast::linmod::{fit_panel, select_lag, ModelSpec};
//! use panelcast::granger::dh_test;
//!
//! let (panel, _truth) = simulate_panel(&SimConfig::new(5, 120, 42)).unwrap();
//! let tpanel = transform_panel(&panel, &TransformSpec::default()).unwrap();
//! let (k, _curve) = select_lag(&tpanel, 7, &ModelSpec::new(1)).unwrap();
//! let fits = fit_panel(&tpanel, &ModelSpec::new(k)).unwrap();
//! let result = dh_test(&fits).unwrap();
//! assert!(result.p_fixed_t >= 0.0 && result.p_fixed_t <= 1.0);
//! ```
//!
//! Runnable examples for each capability live in `examples/`.

pub mod cli;
pub mod error;
pub mod evaluate;
pub mod forecast;
pub mod granger;
pub mod ingest;
pub mod linmod;
pub mod preprocess;
pub mod simulate;

pub use error::{Error, Result};
