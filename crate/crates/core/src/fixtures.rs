//! Small dataset builders shared by unit tests, integration tests and the
//! FFI layer.

use crate::types::{
    CovariateKind, CovariateSchema, CovariateVector, Dataset, Mobility, Observation, SpatioTemporalPoint,
    StationClass,
};

/// Covariate names `x0, x1, ...`, all spatial.
pub fn schema_xn(p: usize) -> CovariateSchema {
    CovariateSchema {
        names: (0..p).map(|j| format!("x{j}")).collect(),
        kinds: vec![CovariateKind::Spatial; p],
    }
}

/// One fixed low-cost sensor per row, placed along the x axis at t = 0.
pub fn dataset_from(xs: &[Vec<f64>], z: &[f64]) -> Dataset {
    let points: Vec<SpatioTemporalPoint> = (0..z.len())
        .map(|i| SpatioTemporalPoint::new(i as f64, 0.0, 0.0))
        .collect();
    dataset_at(&points, xs, z)
}

/// Dataset with explicit locations; sensor ids are `s0, s1, ...`.
pub fn dataset_at(points: &[SpatioTemporalPoint], xs: &[Vec<f64>], z: &[f64]) -> Dataset {
    assert_eq!(points.len(), z.len());
    assert_eq!(xs.len(), z.len());
    let p = xs.first().map_or(0, |r| r.len());
    let observations = points
        .iter()
        .zip(z)
        .enumerate()
        .map(|(i, (pt, v))| Observation {
            point: *pt,
            value: *v,
            sensor_id: format!("s{i}"),
            mobility: Mobility::Fixed,
            station_class: StationClass::LowCost,
        })
        .collect();
    Dataset {
        observations,
        covariates: xs.iter().map(|r| CovariateVector(r.clone())).collect(),
        schema: schema_xn(p),
        utc_offset_s: 0,
    }
}

/// Several days of a small network: six fixed low-cost sensors and two
/// reference stations sampling every 30 minutes from 08:00 to 17:30 UTC,
/// starting 2024-03-04. Two spatial covariates; values follow a linear
/// trend plus a smooth pattern and noise, with a per-day offset.
pub fn benchmark_dataset(n_days: usize, seed: u64) -> Dataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let sites: Vec<(f64, f64, StationClass)> = (0..8)
        .map(|s| {
            let class = if s < 6 { StationClass::LowCost } else { StationClass::Reference };
            (rng.random_range(0.0..2000.0), rng.random_range(0.0..2000.0), class)
        })
        .collect();
    let d0 = 1_709_510_400.0;
    let mut observations = Vec::new();
    let mut covariates = Vec::new();
    for day in 0..n_days {
        for (s, &(x, y, class)) in sites.iter().enumerate() {
            for k in 0..20 {
                let t = d0 + day as f64 * 86_400.0 + 28_800.0 + k as f64 * 1800.0;
                let (a, b) = (x / 1000.0, (y / 700.0).sin());
                let value = 2.0 + 0.4 * a - 0.3 * b + 0.2 * (t / 7200.0).sin() + 0.1 * day as f64 + rng.random_range(-0.05..0.05);
                observations.push(Observation {
                    point: SpatioTemporalPoint::new(x, y, t),
                    value,
                    sensor_id: if class == StationClass::LowCost { format!("s{s}") } else { format!("ref{s}") },
                    mobility: Mobility::Fixed,
                    station_class: class,
                });
                covariates.push(CovariateVector(vec![a, b]));
            }
        }
    }
    Dataset {
        observations,
        covariates,
        schema: schema_xn(2),
        utc_offset_s: 0,
    }
}
