//! Fitted Gaussian-process predictor: frozen parameters plus the training
//! data the kriging predictor conditions on.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gp::{krige_predict, GpParams, KrigingOptions, COVARIANCE_FAMILY};
use crate::types::{Dataset, Query};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrigingModel {
    pub params: GpParams,
    pub covariance_family: String,
    pub kriging: KrigingOptions,
    /// False when the estimator stopped early and its best point was kept.
    pub converged: bool,
    pub notes: Vec<String>,
    pub train: Dataset,
}

impl KrigingModel {
    pub fn new(params: GpParams, kriging: KrigingOptions, train: Dataset, converged: bool, notes: Vec<String>) -> Self {
        Self {
            params,
            covariance_family: COVARIANCE_FAMILY.to_string(),
            kriging,
            converged,
            notes,
            train,
        }
    }

    /// Predictive mean and latent-field variance at every query.
    pub fn predict(&self, query: &Query) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = krige_predict(&self.params, &self.train, query, &self.kriging)?;
        Ok((out.mean, out.variance))
    }
}
