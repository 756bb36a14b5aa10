//! Gaussian-process predictor: a linear covariate trend plus a zero-mean
//! space-time field with exponential covariance and a nugget.
//!
//! Parameters are estimated either by weighted least squares on an
//! empirical variogram ([`gp_vg_fit`]) or by maximizing a Vecchia
//! approximation of the likelihood ([`gp_ml_fit`]). Both feed the same
//! kriging engine ([`krige_predict`]).

mod covariance;
mod fit;
mod kriging;
mod variogram;
mod vecchia;

use serde::{Deserialize, Serialize};

pub use covariance::{covariance, covariance_matrix, observation_covariance, scaled_lag};
pub use fit::{gls_beta, gp_ml_fit, gp_vg_fit, GpFit, MlFitOptions, VgFitOptions};
pub use kriging::{krige_predict, KrigingOptions, KrigingOutput};
pub use variogram::{empirical_variogram, fit_variogram_wls, EmpiricalVariogram, VariogramBins, VariogramFit};
pub use vecchia::{
    maxmin_order, vecchia_loglik, LoglikValue, VecchiaConfig, VecchiaOrdering, VecchiaStructure,
};

use crate::error::{contract, Result};
use crate::models::linear::TrendCoefficients;

/// Recorded in every fitted GP model file.
pub const COVARIANCE_FAMILY: &str = "exponential with geometric space-time anisotropy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub beta: TrendCoefficients,
    /// Partial sill: variance of the latent field.
    pub sigma2: f64,
    /// Spatial range in meters.
    pub range_s: f64,
    /// Temporal range in seconds.
    pub range_t: f64,
    /// Nugget: measurement-noise variance.
    pub tau2: f64,
}

impl GpParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma2 > 0.0
            && self.range_s > 0.0
            && self.range_t > 0.0
            && self.tau2 >= 0.0
            && [self.sigma2, self.range_s, self.range_t, self.tau2].iter().all(|v| v.is_finite())
            && self.beta.beta.iter().all(|b| b.is_finite());
        if ok {
            Ok(())
        } else {
            Err(contract(format!(
                "invalid GP parameters: sigma2={} range_s={} range_t={} tau2={}",
                self.sigma2, self.range_s, self.range_t, self.tau2
            )))
        }
    }
}
