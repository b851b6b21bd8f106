//! Grey-box wave force modelling.
//!
//! A Bayesian Morison's-equation white-box is combined with a Gaussian-process
//! NARX black-box, either by modelling the white-box residual or by feeding the
//! white-box prediction to the black-box as an extra input. The crate also
//! provides Monte-Carlo uncertainty propagation for free-run prediction, ARX
//! lag selection, a QPSO hyperparameter optimizer, assessment metrics and an
//! input-space coverage analysis for extrapolation studies.

pub mod arx;
pub mod cli;
pub mod coverage;
pub mod dataset;
pub mod error;
pub mod gp;
pub mod gpnarx;
pub mod greybox;
pub mod metrics;
pub mod persist;
pub mod predictive;
pub mod qpso;
pub mod seed;
pub mod whitebox;

pub use dataset::{LagSpec, TimeSeriesDataset};
pub use error::{Error, Result};
pub use predictive::{McPredictiveSeries, PredictiveSeries};
