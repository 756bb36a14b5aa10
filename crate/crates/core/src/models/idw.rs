//! Inverse distance weighting in space-time.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::types::{Dataset, SpatioTemporalPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdwParams {
    /// Power exponent.
    pub p: f64,
    /// Space-time conversion factor in m²/s².
    pub c: f64,
    /// Use only the `k` nearest training points.
    pub k: Option<usize>,
}

impl Default for IdwParams {
    fn default() -> Self {
        Self { p: 2.0, c: 0.0, k: None }
    }
}

impl IdwParams {
    fn validate(&self) -> Result<()> {
        if !(self.p > 0.0) || !(self.c >= 0.0) || !self.c.is_finite() || self.k == Some(0) {
            return Err(contract(format!("invalid IDW parameters {self:?}")));
        }
        Ok(())
    }
}

pub const DEFAULT_C_CANDIDATES: [f64; 8] = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0];

fn predict_one(points: &[SpatioTemporalPoint], values: &[f64], q: &SpatioTemporalPoint, params: &IdwParams) -> f64 {
    // squared distances; weights are d2^(-p/2)
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + params.c * (p.t - q.t).powi(2), i))
        .collect();
    if let Some(k) = params.k {
        if d.len() > k {
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            d.select_nth_unstable_by(k, cmp);
            d.truncate(k);
        }
    }
    let exact: Vec<f64> = d.iter().filter(|(di, _)| *di == 0.0).map(|&(_, i)| values[i]).collect();
    if !exact.is_empty() {
        return exact.iter().sum::<f64>() / exact.len() as f64;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(di, i) in &d {
        let w = if params.p == 2.0 { 1.0 / di } else { di.powf(-params.p / 2.0) };
        num += w * values[i];
        den += w;
    }
    num / den
}

/// `Σλ_i Z_i` with `λ_i ∝ d_i^{-p}`; a query at zero distance from training
/// points returns their value.
pub fn idw_predict(train: &Dataset, query: &[SpatioTemporalPoint], params: &IdwParams) -> Result<Vec<f64>> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let points = train.points();
    let values = train.values();
    Ok(query.par_iter().map(|q| predict_one(&points, &values, q, params)).collect())
}

/// Leave-one-sensor-out RMSE of IDW with the given parameters.
pub fn loso_rmse(train: &Dataset, params: &IdwParams) -> Result<f64> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in train.observations.iter().enumerate() {
        groups.entry(o.sensor_id.as_str()).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::InsufficientSensors("IDW tuning needs at least two sensors".into()));
    }
    let points = train.points();
    let values = train.values();
    let sse: Vec<f64> = groups
        .par_iter()
        .map(|(id, idx)| {
            let keep: Vec<usize> = (0..points.len()).filter(|&i| train.observations[i].sensor_id != *id).collect();
            let tp: Vec<SpatioTemporalPoint> = keep.iter().map(|&i| points[i]).collect();
            let tv: Vec<f64> = keep.iter().map(|&i| values[i]).collect();
            idx.iter()
                .map(|&i| (predict_one(&tp, &tv, &points[i], params) - values[i]).powi(2))
                .sum::<f64>()
        })
        .collect();
    Ok((sse.iter().sum::<f64>() / points.len() as f64).sqrt())
}

/// Candidate `c` with the lowest leave-one-sensor-out RMSE; ties (to a
/// relative 1e-9) go to the smaller candidate.
pub fn idw_tune_c(train: &Dataset, candidates: &[f64], base: &IdwParams) -> Result<f64> {
    if candidates.is_empty() {
        return Err(contract("no candidate values for c"));
    }
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, sorted[0]);
    for c in sorted {
        let r = loso_rmse(train, &IdwParams { c, ..base.clone() })?;
        if r < best.0 * (1.0 - 1e-9) {
            best = (r, c);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdwModel {
    pub params: IdwParams,
    pub points: Vec<SpatioTemporalPoint>,
    pub values: Vec<f64>,
}

impl IdwModel {
    pub fn fit(train: &Dataset, params: IdwParams) -> Result<Self> {
        params.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyTraining);
        }
        Ok(Self {
            params,
            points: train.points(),
            values: train.values(),
        })
    }

    pub fn predict(&self, query: &[SpatioTemporalPoint]) -> Vec<f64> {
        query
            .par_iter()
            .map(|q| predict_one(&self.points, &self.values, q, &self.params))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::dataset_at;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, y: f64, t: f64) -> SpatioTemporalPoint {
        SpatioTemporalPoint::new(x, y, t)
    }

    fn ds(points: &[SpatioTemporalPoint], z: &[f64]) -> Dataset {
        dataset_at(points, &vec![vec![]; z.len()], z)
    }

    #[test]
    fn examples() {
        let train = ds(&[pt(0.0, 0.0, 0.0), pt(2.0, 0.0, 0.0)], &[10.0, 20.0]);
        let p = IdwParams::default();
        assert_eq!(idw_predict(&train, &[pt(0.0, 0.0, 0.0)], &p).unwrap(), vec![10.0]);
        assert_eq!(idw_predict(&train, &[pt(1.0, 0.0, 0.0)], &p).unwrap(), vec![15.0]);
        let train = ds(&[pt(1.0, 0.0, 0.0), pt(-2.0, 0.0, 0.0)], &[10.0, 40.0]);
        let v = idw_predict(&train, &[pt(0.0, 0.0, 0.0)], &p).unwrap()[0];
        assert!((v - 16.0).abs() < 1e-12);
    }

    #[test]
    fn empty_training_is_an_error() {
        let train = ds(&[], &[]);
        assert!(matches!(idw_predict(&train, &[pt(0.0, 0.0, 0.0)], &IdwParams::default()), Err(Error::EmptyTraining)));
    }

    #[test]
    fn neighbor_cap() {
        let train = ds(&[pt(1.0, 0.0, 0.0), pt(2.0, 0.0, 0.0), pt(100.0, 0.0, 0.0)], &[1.0, 1.0, 50.0]);
        let p = IdwParams { k: Some(2), ..Default::default() };
        assert_eq!(idw_predict(&train, &[pt(0.0, 0.0, 0.0)], &p).unwrap(), vec![1.0]);
    }

    #[test]
    fn zero_c_equal_times_is_spatial_idw() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<_> = (0..20).map(|_| pt(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), 500.0)).collect();
        let z: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..10.0)).collect();
        let q = pt(33.0, 44.0, 500.0);
        let got = idw_predict(&ds(&pts, &z), &[q], &IdwParams::default()).unwrap()[0];
        let (mut num, mut den) = (0.0, 0.0);
        for (p, v) in pts.iter().zip(&z) {
            let w = 1.0 / ((p.x - q.x).powi(2) + (p.y - q.y).powi(2));
            num += w * v;
            den += w;
        }
        assert_eq!(got, num / den);
    }

    fn sensors_at(sites: &[(f64, f64)], times: &[f64], f: impl Fn(f64, f64, f64) -> f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = Vec::new();
        let mut z = Vec::new();
        let mut ids = Vec::new();
        for (s, &(x, y)) in sites.iter().enumerate() {
            for &t0 in times {
                // sensors report asynchronously
                let t = t0 + rng.random_range(0.0..600.0);
                pts.push(pt(x, y, t));
                z.push(f(x, y, t));
                ids.push(format!("s{s}"));
            }
        }
        let mut d = ds(&pts, &z);
        for (o, id) in d.observations.iter_mut().zip(ids) {
            o.sensor_id = id;
        }
        d
    }

    #[test]
    fn tuning_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sites: Vec<(f64, f64)> = (0..12).map(|_| (rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0))).collect();
        let times: Vec<f64> = (0..6).map(|k| k as f64 * 600.0).collect();
        let spatial = sensors_at(&sites, &times, |x, y, _| (x / 300.0).sin() + (y / 400.0).cos());
        let base = IdwParams::default();
        assert_eq!(idw_tune_c(&spatial, &[5.0], &base).unwrap(), 5.0);
        assert_eq!(idw_tune_c(&spatial, &[100.0, 1.0, 1e-6], &base).unwrap(), 1e-6);
        assert!(idw_tune_c(&spatial, &[], &base).is_err());

        // anisotropic field: exhaustive leave-one-sensor-out scan as oracle
        let aniso = sensors_at(&sites, &times, |x, y, t| (x / 300.0).sin() + (t / 900.0).cos() + 0.1 * y / 1000.0);
        let cands = [0.01, 1.0, 100.0];
        let oracle = cands
            .iter()
            .map(|&c| {
                let mut sse = 0.0;
                for (i, o) in aniso.observations.iter().enumerate() {
                    let (mut num, mut den) = (0.0, 0.0);
                    for (j, p) in aniso.observations.iter().enumerate() {
                        if p.sensor_id == o.sensor_id {
                            continue;
                        }
                        let d2 = (p.point.x - o.point.x).powi(2) + (p.point.y - o.point.y).powi(2) + c * (p.point.t - o.point.t).powi(2);
                        let w = 1.0 / d2;
                        num += w * aniso.observations[j].value;
                        den += w;
                    }
                    sse += (num / den - aniso.observations[i].value).powi(2);
                }
                (sse, c)
            })
            .fold((f64::INFINITY, 0.0), |b, x| if x.0 < b.0 { x } else { b })
            .1;
        assert_eq!(idw_tune_c(&aniso, &cands, &base).unwrap(), oracle);
    }

    proptest! {
        #[test]
        fn predictions_are_convex_combinations(
            vals in proptest::collection::vec(-50.0f64..50.0, 1..15),
            qx in -10.0f64..110.0, qy in -10.0f64..110.0, qt in 0.0f64..1000.0, c in 0.0f64..10.0,
        ) {
            let pts: Vec<_> = (0..vals.len()).map(|i| pt(7.0 * i as f64, (13 * i % 100) as f64, 50.0 * i as f64)).collect();
            let v = idw_predict(&ds(&pts, &vals), &[pt(qx, qy, qt)], &IdwParams { c, ..Default::default() }).unwrap()[0];
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }
}
