//! Vecchia approximation: the joint density factorizes into univariate
//! conditionals, each conditioning on at most `m` earlier points of a fixed
//! ordering. With `m ≥ n − 1` the factorization is exact.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GpParams;
use crate::error::{contract, Result};
use crate::linalg::{cholesky_jitter, lstsq};
use crate::types::{Dataset, SpatioTemporalPoint};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VecchiaOrdering {
    #[default]
    MaxMin,
    Random,
    TimeSorted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VecchiaConfig {
    pub m: usize,
    pub ordering: VecchiaOrdering,
    /// Seed for the random ordering.
    pub seed: u64,
}

impl Default for VecchiaConfig {
    fn default() -> Self {
        Self {
            m: 30,
            ordering: VecchiaOrdering::MaxMin,
            seed: 0,
        }
    }
}

/// Ordering and conditioning sets. `neighbors[k]` holds original indices of
/// the points conditioning `order[k]`, all earlier in the ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct VecchiaStructure {
    pub order: Vec<usize>,
    pub neighbors: Vec<Vec<usize>>,
}

pub(crate) fn scaled_coords(points: &[SpatioTemporalPoint], range_s: f64, range_t: f64) -> Vec<[f64; 3]> {
    points
        .iter()
        .map(|p| [p.x / range_s, p.y / range_s, p.t / range_t])
        .collect()
}

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dt = a[2] - b[2];
    dx * dx + dy * dy + dt * dt
}

/// Max-min ordering: start near the centroid, then repeatedly take the point
/// farthest from everything already chosen. Ties go to the lower index.
pub fn maxmin_order(coords: &[[f64; 3]]) -> Vec<usize> {
    let n = coords.len();
    if n == 0 {
        return Vec::new();
    }
    let mut c = [0.0; 3];
    for p in coords {
        for d in 0..3 {
            c[d] += p[d] / n as f64;
        }
    }
    let first = (0..n)
        .min_by(|&a, &b| dist2(&coords[a], &c).total_cmp(&dist2(&coords[b], &c)).then(a.cmp(&b)))
        .unwrap();
    let mut order = Vec::with_capacity(n);
    let mut taken = vec![false; n];
    let mut mind = vec![f64::INFINITY; n];
    let mut next = first;
    for _ in 0..n {
        order.push(next);
        taken[next] = true;
        let mut best = usize::MAX;
        let mut best_d = -1.0;
        for j in 0..n {
            if taken[j] {
                continue;
            }
            let d = dist2(&coords[j], &coords[next]);
            if d < mind[j] {
                mind[j] = d;
            }
            if mind[j] > best_d {
                best_d = mind[j];
                best = j;
            }
        }
        next = best;
    }
    order
}

/// Indices (into `candidates`) of the `m` nearest candidates to `target`,
/// ties broken by candidate position.
pub(crate) fn nearest(coords: &[[f64; 3]], target: &[f64; 3], candidates: &[usize], m: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = candidates.iter().map(|&j| (dist2(&coords[j], target), j)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if d.len() > m {
        d.select_nth_unstable_by(m, cmp);
        d.truncate(m);
    }
    d.sort_by(cmp);
    d.into_iter().map(|(_, j)| j).collect()
}

impl VecchiaStructure {
    pub fn build(points: &[SpatioTemporalPoint], range_s: f64, range_t: f64, cfg: &VecchiaConfig) -> Result<Self> {
        if cfg.m == 0 {
            return Err(contract("Vecchia neighbor count m must be at least 1"));
        }
        let n = points.len();
        let coords = scaled_coords(points, range_s, range_t);
        let order = match cfg.ordering {
            VecchiaOrdering::MaxMin => maxmin_order(&coords),
            VecchiaOrdering::TimeSorted => {
                let mut o: Vec<usize> = (0..n).collect();
                o.sort_by(|&a, &b| points[a].t.total_cmp(&points[b].t).then(a.cmp(&b)));
                o
            }
            VecchiaOrdering::Random => {
                let mut o: Vec<usize> = (0..n).collect();
                o.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
                o
            }
        };
        let neighbors = (0..n)
            .into_par_iter()
            .map(|k| nearest(&coords, &coords[order[k]], &order[..k], cfg.m))
            .collect();
        Ok(Self { order, neighbors })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoglikValue {
    pub value: f64,
    /// True when a conditioning system needed diagonal jitter.
    pub jittered: bool,
}

/// Conditional-regression weights `b = K_NN⁻¹ k_N` and conditional variance
/// for one point, with covariance `sill·exp(−h)` plus `nugget` on the diagonal.
fn conditional(
    points: &[SpatioTemporalPoint],
    i: usize,
    nb: &[usize],
    range_s: f64,
    range_t: f64,
    sill: f64,
    nugget: f64,
) -> Result<(DVector<f64>, f64, bool)> {
    let total = sill + nugget;
    let m = nb.len();
    if m == 0 {
        return Ok((DVector::zeros(0), total, false));
    }
    let cov = |a: usize, b: usize| sill * (-super::scaled_lag(&points[a], &points[b], range_s, range_t)).exp();
    let mut k = DMatrix::zeros(m, m);
    for r in 0..m {
        k[(r, r)] = total;
        for c in 0..r {
            let v = cov(nb[r], nb[c]);
            k[(r, c)] = v;
            k[(c, r)] = v;
        }
    }
    let kv = DVector::from_iterator(m, nb.iter().map(|&j| cov(i, j)));
    let (chol, jitter) = cholesky_jitter(k, sill)?;
    let b = chol.solve(&kv);
    let mut v = total - kv.dot(&b);
    let mut jittered = jitter > 0.0;
    let floor = 1e-8 * sill;
    if v < floor {
        v = floor;
        jittered = true;
    }
    Ok((b, v, jittered))
}

/// Vecchia log-likelihood of `data` at fixed parameters (trend included).
pub fn vecchia_loglik(params: &GpParams, data: &Dataset, cfg: &VecchiaConfig) -> Result<LoglikValue> {
    params.validate()?;
    if params.beta.beta.len() != data.n_covariates() + 1 {
        return Err(contract("trend length does not match the dataset schema"));
    }
    let points = data.points();
    let resid: Vec<f64> = data
        .observations
        .iter()
        .zip(&data.covariates)
        .map(|(o, c)| o.value - params.beta.evaluate(&c.0))
        .collect();
    let st = VecchiaStructure::build(&points, params.range_s, params.range_t, cfg)?;
    let terms = (0..points.len())
        .into_par_iter()
        .map(|k| {
            let i = st.order[k];
            let nb = &st.neighbors[k];
            let (b, v, jit) = conditional(&points, i, nb, params.range_s, params.range_t, params.sigma2, params.tau2)?;
            let mu: f64 = nb.iter().zip(b.iter()).map(|(&j, w)| w * resid[j]).sum();
            let e = resid[i] - mu;
            Ok((-0.5 * ((2.0 * std::f64::consts::PI * v).ln() + e * e / v), jit))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoglikValue {
        value: terms.iter().map(|t| t.0).sum(),
        jittered: terms.iter().any(|t| t.1),
    })
}

/// Rows whitened by the Vecchia factor at unit sill with nugget ratio `eta`.
pub(crate) struct Whitened {
    pub z: DVector<f64>,
    pub x: DMatrix<f64>,
    pub log_v_sum: f64,
    pub jittered: bool,
}

pub(crate) fn whiten(
    st: &VecchiaStructure,
    points: &[SpatioTemporalPoint],
    z: &[f64],
    x: &DMatrix<f64>,
    range_s: f64,
    range_t: f64,
    eta: f64,
) -> Result<Whitened> {
    let n = points.len();
    let p = x.ncols();
    let rows = (0..n)
        .into_par_iter()
        .map(|k| {
            let i = st.order[k];
            let nb = &st.neighbors[k];
            let (b, v, jit) = conditional(points, i, nb, range_s, range_t, 1.0, eta)?;
            let s = v.sqrt();
            let zi = (z[i] - nb.iter().zip(b.iter()).map(|(&j, w)| w * z[j]).sum::<f64>()) / s;
            let xi: Vec<f64> = (0..p)
                .map(|c| (x[(i, c)] - nb.iter().zip(b.iter()).map(|(&j, w)| w * x[(j, c)]).sum::<f64>()) / s)
                .collect();
            Ok((zi, xi, v.ln(), jit))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut xw = DMatrix::zeros(n, p);
    for (r, row) in rows.iter().enumerate() {
        for c in 0..p {
            xw[(r, c)] = row.1[c];
        }
    }
    Ok(Whitened {
        z: DVector::from_iterator(n, rows.iter().map(|r| r.0)),
        x: xw,
        log_v_sum: rows.iter().map(|r| r.2).sum(),
        jittered: rows.iter().any(|r| r.3),
    })
}

/// Log-likelihood with the trend profiled out by GLS and the sill profiled
/// analytically. Returns `(loglik, beta, sigma2)`.
pub(crate) fn profile(w: &Whitened, sigma2_floor: f64) -> Result<(f64, DVector<f64>, f64)> {
    let n = w.z.len() as f64;
    let beta = lstsq(&w.x, &w.z)?;
    let r = &w.z - &w.x * &beta;
    let rss = r.norm_squared();
    let sigma2 = (rss / n).max(sigma2_floor);
    let ll = -0.5 * (n * (2.0 * std::f64::consts::PI * sigma2).ln() + w.log_v_sum + rss / sigma2);
    Ok((ll, beta, sigma2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::dataset_at;
    use crate::gp::covariance_matrix;
    use crate::models::linear::TrendCoefficients;
    use rand::Rng;

    fn fixture(n: usize, seed: u64) -> (Dataset, GpParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<SpatioTemporalPoint> = (0..n)
            .map(|_| SpatioTemporalPoint::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0), rng.random_range(0.0..7200.0)))
            .collect();
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = GpParams {
            beta: TrendCoefficients { beta: vec![0.2, 0.5] },
            sigma2: 1.3,
            range_s: 400.0,
            range_t: 3000.0,
            tau2: 0.1,
        };
        (dataset_at(&pts, &xs, &z), params)
    }

    // Dense oracle through an LU decomposition.
    fn dense_loglik(ds: &Dataset, p: &GpParams) -> f64 {
        let k = covariance_matrix(&ds.points(), p, true);
        let r = DVector::from_iterator(ds.len(), ds.observations.iter().zip(&ds.covariates).map(|(o, c)| o.value - p.beta.evaluate(&c.0)));
        let lu = k.clone().lu();
        let sol = lu.solve(&r).unwrap();
        let det = lu.determinant();
        -0.5 * (r.dot(&sol) + det.ln() + ds.len() as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    #[test]
    fn full_conditioning_is_exact() {
        let (ds, p) = fixture(5, 1);
        let cfg = VecchiaConfig { m: 4, ..Default::default() };
        let v = vecchia_loglik(&p, &ds, &cfg).unwrap();
        assert!((v.value - dense_loglik(&ds, &p)).abs() < 1e-8);
        assert!(!v.jittered);
        for ordering in [VecchiaOrdering::Random, VecchiaOrdering::TimeSorted] {
            let cfg = VecchiaConfig { m: 4, ordering, seed: 3 };
            assert!((vecchia_loglik(&p, &ds, &cfg).unwrap().value - dense_loglik(&ds, &p)).abs() < 1e-8);
        }
    }

    #[test]
    fn independent_limit() {
        let (ds, mut p) = fixture(20, 2);
        p.range_s = 1e-9;
        p.range_t = 1e-9;
        let v = vecchia_loglik(&p, &ds, &VecchiaConfig::default()).unwrap().value;
        let s2 = p.sigma2 + p.tau2;
        let oracle: f64 = ds
            .observations
            .iter()
            .zip(&ds.covariates)
            .map(|(o, c)| {
                let e = o.value - p.beta.evaluate(&c.0);
                -0.5 * ((2.0 * std::f64::consts::PI * s2).ln() + e * e / s2)
            })
            .sum();
        assert!((v - oracle).abs() < 1e-10);
    }

    #[test]
    fn error_shrinks_with_m() {
        let (ds, p) = fixture(40, 3);
        let exact = dense_loglik(&ds, &p);
        let errs: Vec<f64> = [1, 5, 10, 39]
            .iter()
            .map(|&m| (vecchia_loglik(&p, &ds, &VecchiaConfig { m, ..Default::default() }).unwrap().value - exact).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
        assert!(errs[3] < 1e-8);
    }

    #[test]
    fn neighbors_precede_in_order() {
        let (ds, p) = fixture(60, 4);
        let st = VecchiaStructure::build(&ds.points(), p.range_s, p.range_t, &VecchiaConfig { m: 7, ..Default::default() }).unwrap();
        let mut pos = vec![0; 60];
        for (k, &i) in st.order.iter().enumerate() {
            pos[i] = k;
        }
        for (k, nb) in st.neighbors.iter().enumerate() {
            assert_eq!(nb.len(), k.min(7));
            assert!(nb.iter().all(|&j| pos[j] < k));
        }
        let mut sorted = st.order.clone();
        sorted.sort();
        assert_eq!(sorted, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn m_zero_is_rejected() {
        let (ds, p) = fixture(5, 5);
        assert!(vecchia_loglik(&p, &ds, &VecchiaConfig { m: 0, ..Default::default() }).is_err());
    }
}
