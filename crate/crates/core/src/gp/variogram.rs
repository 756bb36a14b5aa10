//! Empirical space-time semivariogram and its weighted least-squares fit.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::optim::NelderMead;
use crate::types::SpatioTemporalPoint;

use super::GpParams;
use crate::models::linear::TrendCoefficients;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramBins {
    /// Increasing spatial lag edges in meters; a pair falls in bin `b` when
    /// `edges[b] ≤ h < edges[b+1]`.
    pub space_edges: Vec<f64>,
    /// Increasing temporal lag edges in seconds.
    pub time_edges: Vec<f64>,
    /// Pair budget; above it pairs are drawn at random.
    pub max_pairs: usize,
    pub seed: u64,
}

pub const DEFAULT_MAX_PAIRS: usize = 2_000_000;

fn linspace_edges(max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| max * k as f64 / n as f64).collect()
}

impl VariogramBins {
    /// Lags up to half the spatial diagonal and half the time span. When the
    /// sampling times sit on a few distinct lags, time bins are centered on them.
    pub fn auto(points: &[SpatioTemporalPoint], n_space: usize, n_time: usize) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        let mut times: Vec<f64> = Vec::with_capacity(points.len());
        for p in points {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
            times.push(p.t);
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let span_s = ((x1 - x0).hypot(y1 - y0) / 2.0).max(1.0);
        let span_t = times.last().zip(times.first()).map_or(0.0, |(a, b)| a - b) / 2.0;
        let time_edges = if span_t <= 0.0 {
            vec![0.0, 1.0]
        } else {
            lattice_time_edges(&times, span_t, 2 * n_time).unwrap_or_else(|| linspace_edges(span_t, n_time))
        };
        Self {
            space_edges: linspace_edges(span_s, n_space),
            time_edges,
            max_pairs: DEFAULT_MAX_PAIRS,
            seed: 0,
        }
    }
}

fn lattice_time_edges(times: &[f64], max_lag: f64, max_lags: usize) -> Option<Vec<f64>> {
    if times.len() > 64 {
        return None;
    }
    let mut lags: Vec<f64> = Vec::new();
    for (i, a) in times.iter().enumerate() {
        for b in &times[..i] {
            let d = a - b;
            if d <= max_lag {
                lags.push(d);
            }
        }
    }
    lags.push(0.0);
    lags.sort_by(f64::total_cmp);
    lags.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    if lags.len() > max_lags || lags.len() < 2 {
        return None;
    }
    let mut edges = vec![0.0];
    edges.extend(lags.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let last = *lags.last().unwrap();
    edges.push(last + 0.5 * (last - lags[lags.len() - 2]));
    Some(edges)
}

/// Per-bin semivariance over a space lag × time lag grid, stored row-major
/// by space bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalVariogram {
    pub space_edges: Vec<f64>,
    pub time_edges: Vec<f64>,
    /// `None` for empty bins.
    pub gamma: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    /// Mean spatial lag of the pairs in each bin.
    pub mean_hs: Vec<f64>,
    /// Mean temporal lag of the pairs in each bin.
    pub mean_ht: Vec<f64>,
}

fn bin_of(edges: &[f64], h: f64) -> Option<usize> {
    if h < edges[0] || h >= *edges.last()? {
        return None;
    }
    Some(edges.partition_point(|e| *e <= h) - 1)
}

impl EmpiricalVariogram {
    pub fn n_space(&self) -> usize {
        self.space_edges.len() - 1
    }

    pub fn n_time(&self) -> usize {
        self.time_edges.len() - 1
    }

    /// `(mean_hs, mean_ht, gamma, count)` of every nonempty bin.
    pub fn nonempty(&self) -> Vec<(f64, f64, f64, usize)> {
        (0..self.gamma.len())
            .filter_map(|b| self.gamma[b].map(|g| (self.mean_hs[b], self.mean_ht[b], g, self.counts[b])))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "space_lo,space_hi,time_lo,time_hi,mean_hs,mean_ht,gamma,count")?;
        for s in 0..self.n_space() {
            for t in 0..self.n_time() {
                let b = s * self.n_time() + t;
                let g = self.gamma[b].map_or("NA".to_string(), |g| g.to_string());
                writeln!(
                    f,
                    "{},{},{},{},{},{},{},{}",
                    self.space_edges[s],
                    self.space_edges[s + 1],
                    self.time_edges[t],
                    self.time_edges[t + 1],
                    self.mean_hs[b],
                    self.mean_ht[b],
                    g,
                    self.counts[b]
                )?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

fn validate_edges(edges: &[f64], what: &str) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges[0] < 0.0 {
        return Err(contract(format!("{what} lag edges must be nonnegative and strictly increasing")));
    }
    Ok(())
}

/// `γ(h_s, h_t) = mean ½(r_i − r_j)²` over the pairs in each lag bin.
pub fn empirical_variogram(
    points: &[SpatioTemporalPoint],
    residuals: &[f64],
    bins: &VariogramBins,
) -> Result<EmpiricalVariogram> {
    if points.len() != residuals.len() {
        return Err(contract("points and residuals differ in length"));
    }
    validate_edges(&bins.space_edges, "space")?;
    validate_edges(&bins.time_edges, "time")?;
    let ns = bins.space_edges.len() - 1;
    let nt = bins.time_edges.len() - 1;
    let mut sum = vec![0.0; ns * nt];
    let mut hs = vec![0.0; ns * nt];
    let mut ht = vec![0.0; ns * nt];
    let mut counts = vec![0usize; ns * nt];
    let mut add = |i: usize, j: usize| {
        let (a, b) = (&points[i], &points[j]);
        let ds = a.spatial_distance(b);
        let dt = (a.t - b.t).abs();
        if let (Some(s), Some(t)) = (bin_of(&bins.space_edges, ds), bin_of(&bins.time_edges, dt)) {
            let k = s * nt + t;
            let d = residuals[i] - residuals[j];
            sum[k] += 0.5 * d * d;
            hs[k] += ds;
            ht[k] += dt;
            counts[k] += 1;
        }
    };
    let n = points.len();
    let total = n.saturating_sub(1) * n / 2;
    if total <= bins.max_pairs {
        for i in 0..n {
            for j in 0..i {
                add(i, j);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(bins.seed);
        for _ in 0..bins.max_pairs {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            add(i, j);
        }
    }
    let gamma = (0..ns * nt)
        .map(|k| (counts[k] > 0).then(|| sum[k] / counts[k] as f64))
        .collect();
    let div = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(&counts)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect()
    };
    Ok(EmpiricalVariogram {
        space_edges: bins.space_edges.clone(),
        time_edges: bins.time_edges.clone(),
        gamma,
        mean_hs: div(&hs),
        mean_ht: div(&ht),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramFit {
    pub sigma2: f64,
    pub range_s: f64,
    pub range_t: f64,
    pub tau2: f64,
    pub objective: f64,
    pub converged: bool,
    pub evals: usize,
}

/// Model semivariance for `h > 0`.
pub fn model_gamma(hs: f64, ht: f64, sigma2: f64, range_s: f64, range_t: f64, tau2: f64) -> f64 {
    let h = ((hs / range_s).powi(2) + (ht / range_t).powi(2)).sqrt();
    tau2 + sigma2 * (1.0 - (-h).exp())
}

/// Cressie-weighted least squares: minimizes `Σ N_b (γ_b − γ(b))² / γ(b)²`
/// from several starting points in log-parameter space.
pub fn fit_variogram_wls(emp: &EmpiricalVariogram) -> Result<VariogramFit> {
    let bins = emp.nonempty();
    if bins.len() < 4 {
        return Err(contract(format!("variogram fit needs at least 4 nonempty bins, got {}", bins.len())));
    }
    let gmax = bins.iter().map(|b| b.2).fold(0.0f64, f64::max);
    let scale = if gmax > 0.0 { gmax } else { 1.0 };
    let hs_max = bins.iter().map(|b| b.0).fold(0.0f64, f64::max);
    let ht_max = bins.iter().map(|b| b.1).fold(0.0f64, f64::max);
    let hs_min = bins.iter().map(|b| b.0).filter(|h| *h > 0.0).fold(f64::INFINITY, f64::min);
    let ht_min = bins.iter().map(|b| b.1).filter(|h| *h > 0.0).fold(f64::INFINITY, f64::min);
    // an axis with no lag spread cannot inform its range; hold it at 1
    let free_s = hs_max > 0.0;
    let free_t = ht_max > 0.0;

    let objective = |sigma2: f64, rs: f64, rt: f64, tau2: f64| -> f64 {
        bins.iter()
            .map(|&(hs, ht, g, n)| {
                let m = model_gamma(hs, ht, sigma2, rs, rt, tau2);
                n as f64 * (g - m).powi(2) / (m * m)
            })
            .sum::<f64>()
    };

    let mut bounds = vec![((1e-6 * scale).ln(), (10.0 * scale).ln()), ((1e-8 * scale).ln(), (10.0 * scale).ln())];
    if free_s {
        bounds.push(((0.5 * hs_min).ln(), (10.0 * hs_max).ln()));
    }
    if free_t {
        bounds.push(((0.5 * ht_min).ln(), (10.0 * ht_max).ln()));
    }
    let unpack = |x: &[f64]| -> (f64, f64, f64, f64) {
        let mut k = 2;
        let rs = if free_s {
            k += 1;
            x[k - 1].exp()
        } else {
            1.0
        };
        let rt = if free_t { x[k].exp() } else { 1.0 };
        (x[0].exp(), rs, rt, x[1].exp())
    };

    let nm = NelderMead {
        max_evals: 4000,
        f_tol: 1e-12,
        x_tol: 1e-9,
        initial_step: 0.5,
    };
    let fracs_s: &[f64] = if free_s { &[0.1, 0.3, 1.0] } else { &[1.0] };
    let fracs_t: &[f64] = if free_t { &[0.1, 0.3, 1.0] } else { &[1.0] };
    let mut best: Option<crate::optim::Minimum> = None;
    let mut evals = 0;
    for nug in [0.1, 0.5] {
        for fs in fracs_s {
            for ft in fracs_t {
                let mut x0 = vec![((1.0 - nug) * scale).ln(), (nug * scale).ln()];
                if free_s {
                    x0.push((fs * hs_max).ln());
                }
                if free_t {
                    x0.push((ft * ht_max).ln());
                }
                let r = nm.minimize(
                    |x| {
                        let (s, rs, rt, t) = unpack(x);
                        objective(s, rs, rt, t)
                    },
                    &x0,
                    &bounds,
                );
                evals += r.evals;
                if best.as_ref().is_none_or(|b| r.f < b.f) {
                    best = Some(r);
                }
            }
        }
    }
    let mut best = best.expect("at least one start");
    if !best.converged {
        // polish from the best point once
        let r = nm.minimize(
            |x| {
                let (s, rs, rt, t) = unpack(x);
                objective(s, rs, rt, t)
            },
            &best.x,
            &bounds,
        );
        evals += r.evals;
        if r.f <= best.f {
            best = r;
        }
    }
    let (sigma2, range_s, range_t, tau2) = unpack(&best.x);
    if !best.converged || !best.f.is_finite() {
        return Err(Error::NoConvergence {
            message: format!("variogram fit stopped after {evals} evaluations at objective {}", best.f),
            best: Some(Box::new(GpParams {
                beta: TrendCoefficients { beta: vec![0.0] },
                sigma2,
                range_s,
                range_t,
                tau2,
            })),
        });
    }
    Ok(VariogramFit {
        sigma2,
        range_s,
        range_t,
        tau2,
        objective: best.f,
        converged: true,
        evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn lattice(nx: usize, nt: usize, step: f64, dt: f64) -> Vec<SpatioTemporalPoint> {
        let mut v = Vec::new();
        for k in 0..nt {
            for i in 0..nx {
                for j in 0..nx {
                    v.push(SpatioTemporalPoint::new(i as f64 * step, j as f64 * step, k as f64 * dt));
                }
            }
        }
        v
    }

    #[test]
    fn constant_field_has_zero_gamma() {
        let pts = lattice(6, 3, 100.0, 600.0);
        let r = vec![1.5; pts.len()];
        let emp = empirical_variogram(&pts, &r, &VariogramBins::auto(&pts, 8, 4)).unwrap();
        assert!(emp.gamma.iter().flatten().all(|g| *g == 0.0));
        assert!(emp.counts.iter().sum::<usize>() > 0);
    }

    #[test]
    fn iid_noise_gives_flat_gamma() {
        let pts = lattice(20, 5, 50.0, 600.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let nd = Normal::new(0.0, 0.7f64).unwrap();
        let r: Vec<f64> = (0..pts.len()).map(|_| nd.sample(&mut rng)).collect();
        let emp = empirical_variogram(&pts, &r, &VariogramBins::auto(&pts, 6, 3)).unwrap();
        for (_, _, g, n) in emp.nonempty() {
            if n >= 500 {
                assert!((g - 0.49).abs() < 0.15 * 0.49, "gamma {g} with {n} pairs");
            }
        }
        let fit = fit_variogram_wls(&emp).unwrap();
        assert!((fit.tau2 - 0.49).abs() < 0.1 * 0.49, "{fit:?}");
        assert!(fit.sigma2 < 0.05 * 0.49, "{fit:?}");
    }

    #[test]
    fn exact_model_variogram_is_recovered() {
        let (s2, rs, rt, t2) = (1.0, 500.0, 3600.0, 0.1);
        let space_edges: Vec<f64> = (0..=12).map(|k| k as f64 * 150.0).collect();
        let time_edges: Vec<f64> = (0..=6).map(|k| k as f64 * 1800.0).collect();
        let mut gamma = Vec::new();
        let mut mean_hs = Vec::new();
        let mut mean_ht = Vec::new();
        for s in 0..12 {
            for t in 0..6 {
                let hs = 75.0 + 150.0 * s as f64;
                let ht = 900.0 * t as f64 + 10.0;
                gamma.push(Some(model_gamma(hs, ht, s2, rs, rt, t2)));
                mean_hs.push(hs);
                mean_ht.push(ht);
            }
        }
        let emp = EmpiricalVariogram {
            space_edges,
            time_edges,
            counts: vec![100; gamma.len()],
            gamma,
            mean_hs,
            mean_ht,
        };
        let fit = fit_variogram_wls(&emp).unwrap();
        for (got, want) in [(fit.sigma2, s2), (fit.range_s, rs), (fit.range_t, rt), (fit.tau2, t2)] {
            assert!((got - want).abs() < 0.01 * want, "{fit:?}");
        }
    }

    #[test]
    fn too_few_bins_is_an_error() {
        let pts = lattice(2, 1, 100.0, 1.0);
        let emp = empirical_variogram(&pts, &[0.0, 1.0, 2.0, 3.0], &VariogramBins::auto(&pts, 2, 1)).unwrap();
        assert!(fit_variogram_wls(&emp).is_err());
    }

    #[test]
    fn lattice_time_bins_center_on_lags() {
        let pts = lattice(3, 4, 100.0, 600.0);
        let bins = VariogramBins::auto(&pts, 4, 4);
        // only lags up to half the 1800 s span get bins: 0 and 600 s
        assert_eq!(bins.time_edges, vec![0.0, 300.0, 900.0]);
    }
}
