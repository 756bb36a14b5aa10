use nalgebra::DMatrix;

use super::GpParams;
use crate::types::SpatioTemporalPoint;

/// `sqrt((ds/range_s)² + (dt/range_t)²)`.
#[inline]
pub fn scaled_lag(a: &SpatioTemporalPoint, b: &SpatioTemporalPoint, range_s: f64, range_t: f64) -> f64 {
    let ds = a.spatial_distance(b) / range_s;
    let dt = (a.t - b.t) / range_t;
    (ds * ds + dt * dt).sqrt()
}

/// Latent-field covariance.
#[inline]
pub fn covariance(a: &SpatioTemporalPoint, b: &SpatioTemporalPoint, params: &GpParams) -> f64 {
    params.sigma2 * (-scaled_lag(a, b, params.range_s, params.range_t)).exp()
}

/// Covariance between two noisy observations; the nugget enters only when
/// the two points coincide exactly.
pub fn observation_covariance(a: &SpatioTemporalPoint, b: &SpatioTemporalPoint, params: &GpParams) -> f64 {
    covariance(a, b, params) + if a == b { params.tau2 } else { 0.0 }
}

/// Covariance matrix of observations at `points`; `tau2` is added on the
/// diagonal (each observation carries its own independent noise).
pub fn covariance_matrix(points: &[SpatioTemporalPoint], params: &GpParams, with_nugget: bool) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.sigma2 + if with_nugget { params.tau2 } else { 0.0 };
        for j in 0..i {
            let c = covariance(&points[i], &points[j], params);
            k[(i, j)] = c;
            k[(j, i)] = c;
        }
    }
    k
}
