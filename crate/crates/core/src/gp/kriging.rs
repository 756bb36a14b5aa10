//! Universal kriging with plug-in trend coefficients.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::covariance::{covariance, covariance_matrix};
use super::vecchia::{nearest, scaled_coords};
use super::GpParams;
use crate::error::{contract, Error, Result};
use crate::linalg::cholesky_jitter;
use crate::types::{Dataset, Query};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrigingOptions {
    /// Largest training set solved densely; above it each query conditions
    /// on its `m` nearest training points in scaled space-time distance.
    pub dense_max: usize,
    pub m: usize,
}

impl Default for KrigingOptions {
    fn default() -> Self {
        Self { dense_max: 1000, m: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingOutput {
    pub mean: Vec<f64>,
    /// Variance of the latent field given the data, in `[0, sigma2]`.
    pub variance: Vec<f64>,
    pub jittered: bool,
}

pub fn krige_predict(params: &GpParams, train: &Dataset, query: &Query, opts: &KrigingOptions) -> Result<KrigingOutput> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let p = train.n_covariates();
    if params.beta.beta.len() != p + 1 || query.covariates.iter().any(|c| c.0.len() != p) {
        return Err(contract("trend, training and query covariate dimensions disagree"));
    }
    if query.points.len() != query.covariates.len() {
        return Err(contract("query points and covariates differ in length"));
    }
    let points = train.points();
    let resid: Vec<f64> = train
        .observations
        .iter()
        .zip(&train.covariates)
        .map(|(o, c)| o.value - params.beta.evaluate(&c.0))
        .collect();
    let clamp = |v: f64| v.clamp(0.0, params.sigma2);

    if train.len() <= opts.dense_max {
        let k = covariance_matrix(&points, params, true);
        let (chol, jitter) = cholesky_jitter(k, params.sigma2)?;
        let alpha = chol.solve(&DVector::from_column_slice(&resid));
        let l = chol.l();
        let out: Vec<(f64, f64)> = query
            .points
            .par_iter()
            .zip(query.covariates.par_iter())
            .map(|(q, c)| {
                let kv = DVector::from_iterator(points.len(), points.iter().map(|p| covariance(q, p, params)));
                let mean = params.beta.evaluate(&c.0) + kv.dot(&alpha);
                let v = l.solve_lower_triangular(&kv).unwrap_or_else(|| DVector::zeros(points.len()));
                (mean, clamp(params.sigma2 - v.norm_squared()))
            })
            .collect();
        return Ok(KrigingOutput {
            mean: out.iter().map(|o| o.0).collect(),
            variance: out.iter().map(|o| o.1).collect(),
            jittered: jitter > 0.0,
        });
    }

    if opts.m == 0 {
        return Err(contract("kriging neighbor count must be at least 1"));
    }
    let coords = scaled_coords(&points, params.range_s, params.range_t);
    let qcoords = scaled_coords(&query.points, params.range_s, params.range_t);
    let all: Vec<usize> = (0..points.len()).collect();
    let out = qcoords
        .par_iter()
        .zip(query.points.par_iter())
        .zip(query.covariates.par_iter())
        .map(|((qc, q), c)| {
            let nb = nearest(&coords, qc, &all, opts.m);
            let m = nb.len();
            let mut k = DMatrix::zeros(m, m);
            for r in 0..m {
                k[(r, r)] = params.sigma2 + params.tau2;
                for s in 0..r {
                    let v = covariance(&points[nb[r]], &points[nb[s]], params);
                    k[(r, s)] = v;
                    k[(s, r)] = v;
                }
            }
            let kv = DVector::from_iterator(m, nb.iter().map(|&j| covariance(q, &points[j], params)));
            let (chol, jitter) = cholesky_jitter(k, params.sigma2)?;
            let w = chol.solve(&kv);
            let mean = params.beta.evaluate(&c.0) + nb.iter().zip(w.iter()).map(|(&j, wj)| wj * resid[j]).sum::<f64>();
            Ok((mean, clamp(params.sigma2 - kv.dot(&w)), jitter > 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KrigingOutput {
        mean: out.iter().map(|o| o.0).collect(),
        variance: out.iter().map(|o| o.1).collect(),
        jittered: out.iter().any(|o| o.2),
    })
}
