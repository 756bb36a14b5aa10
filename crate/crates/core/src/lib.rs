//! Spatio-temporal air-quality modeling: preprocessing of low-cost sensor
//! feeds, ten predictors behind one fit/predict contract, a two-scenario
//! validation protocol, a synthetic ground-truth generator and raster maps.

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod geo;
pub mod gp;
pub mod linalg;
pub mod mapgen;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod preprocess;
pub mod raster;
pub mod synth;
pub mod types;
pub mod validation;

pub use error::{Error, Result};
pub use metrics::MetricSet;
pub use types::{
    st_distance, CovariateKind, CovariateSchema, CovariateVector, Dataset, Mobility, Observation, Query,
    SpatioTemporalPoint, StationClass,
};
