//! The two parameter-estimation routes.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::variogram::{empirical_variogram, fit_variogram_wls, EmpiricalVariogram, VariogramBins, DEFAULT_MAX_PAIRS};
use super::vecchia::{profile, whiten, VecchiaConfig, VecchiaStructure};
use super::GpParams;
use crate::error::{contract, Error, Result};
use crate::linalg::variance;
use crate::models::linear::{lr_fit, rows_of, TrendCoefficients, TrendDesign};
use crate::optim::NelderMead;
use crate::types::{Dataset, SpatioTemporalPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VgFitOptions {
    pub n_space_bins: usize,
    pub n_time_bins: usize,
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for VgFitOptions {
    fn default() -> Self {
        Self {
            n_space_bins: 15,
            n_time_bins: 8,
            max_pairs: DEFAULT_MAX_PAIRS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlFitOptions {
    pub vecchia: VecchiaConfig,
    pub max_evals: usize,
    /// Rebuild the ordering and neighbor sets once at the first optimum and
    /// optimize again.
    pub refresh_neighbors: bool,
    /// Options of the variogram fit used as a warm start.
    pub warm_start: VgFitOptions,
}

impl Default for MlFitOptions {
    fn default() -> Self {
        Self {
            vecchia: VecchiaConfig::default(),
            max_evals: 400,
            refresh_neighbors: true,
            warm_start: VgFitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpFit {
    pub params: GpParams,
    /// Log-likelihood (ML route) or weighted least-squares objective (VG route).
    pub objective: f64,
    pub converged: bool,
    pub evals: usize,
    /// Best objective after each optimizer iteration.
    pub trace: Vec<f64>,
    pub jittered: bool,
    pub variogram: Option<EmpiricalVariogram>,
}

/// Trend by OLS, covariance parameters by a weighted least-squares fit to
/// the empirical variogram of the OLS residuals.
pub fn gp_vg_fit(data: &Dataset, opts: &VgFitOptions) -> Result<GpFit> {
    if data.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let beta = lr_fit(data)?;
    let resid: Vec<f64> = data
        .observations
        .iter()
        .zip(&data.covariates)
        .map(|(o, c)| o.value - beta.evaluate(&c.0))
        .collect();
    let points = data.points();
    let mut bins = VariogramBins::auto(&points, opts.n_space_bins, opts.n_time_bins);
    bins.max_pairs = opts.max_pairs;
    bins.seed = opts.seed;
    let emp = empirical_variogram(&points, &resid, &bins)?;
    let fit = match fit_variogram_wls(&emp) {
        Ok(f) => f,
        Err(Error::NoConvergence { message, best }) => {
            return Err(Error::NoConvergence {
                message,
                best: best.map(|mut b| {
                    b.beta = beta.clone();
                    b
                }),
            })
        }
        Err(e) => return Err(e),
    };
    Ok(GpFit {
        params: GpParams {
            beta,
            sigma2: fit.sigma2,
            range_s: fit.range_s,
            range_t: fit.range_t,
            tau2: fit.tau2,
        },
        objective: fit.objective,
        converged: fit.converged,
        evals: fit.evals,
        trace: Vec::new(),
        jittered: false,
        variogram: Some(emp),
    })
}

fn extents(points: &[SpatioTemporalPoint]) -> (f64, f64) {
    let fold = |f: fn(&SpatioTemporalPoint) -> f64| {
        points
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = fold(|p| p.x);
    let (y0, y1) = fold(|p| p.y);
    let (t0, t1) = fold(|p| p.t);
    ((x1 - x0).hypot(y1 - y0), t1 - t0)
}

/// Maximizes the Vecchia likelihood over `(range_s, range_t, tau2/sigma2)`;
/// the trend is profiled by GLS and the sill analytically at every step.
/// Without `init`, the variogram route provides the starting point.
pub fn gp_ml_fit(data: &Dataset, opts: &MlFitOptions, init: Option<&GpParams>) -> Result<GpFit> {
    let n = data.len();
    if n < 50 {
        return Err(contract(format!("maximum-likelihood fit needs at least 50 observations, got {n}")));
    }
    let points = data.points();
    let z = data.values();
    let rows = rows_of(&data.covariates);
    let design = TrendDesign::new(&rows, &data.schema.names)?;
    let x = design.matrix(&rows);
    let (ext_s, ext_t) = extents(&points);
    let ext_s = ext_s.max(1.0);

    let start = match init {
        Some(p) => p.clone(),
        None => match gp_vg_fit(data, &opts.warm_start) {
            Ok(f) => f.params,
            Err(Error::NoConvergence { best: Some(b), .. }) => *b,
            Err(_) => GpParams {
                beta: lr_fit(data)?,
                sigma2: variance(&z).max(1e-12),
                range_s: ext_s / 5.0,
                range_t: (ext_t / 5.0).max(1.0),
                tau2: 0.5 * variance(&z),
            },
        },
    };
    let free_t = ext_t > 0.0;
    let eta0 = (start.tau2 / start.sigma2).clamp(1e-4, 10.0);
    let rs_b = ((1e-3 * ext_s).ln(), (10.0 * ext_s).ln());
    let rt_b = ((1e-3 * ext_t.max(1.0)).ln(), (10.0 * ext_t.max(1.0)).ln());
    let mut x0 = vec![start.range_s.ln().clamp(rs_b.0, rs_b.1), eta0.ln()];
    let mut bounds = vec![rs_b, (1e-6f64.ln(), 1e2f64.ln())];
    if free_t {
        x0.push(start.range_t.ln().clamp(rt_b.0, rt_b.1));
        bounds.push(rt_b);
    }
    let fixed_rt = start.range_t;
    let unpack = |v: &[f64]| -> (f64, f64, f64) {
        let rt = if free_t { v[2].exp() } else { fixed_rt };
        (v[0].exp(), rt, v[1].exp())
    };
    let floor = 1e-12 * variance(&z).max(1e-12);
    let neg_ll = |st: &VecchiaStructure, v: &[f64]| -> f64 {
        let (rs, rt, eta) = unpack(v);
        match whiten(st, &points, &z, &x, rs, rt, eta).and_then(|w| profile(&w, floor)) {
            Ok((ll, _, _)) => -ll,
            Err(_) => f64::INFINITY,
        }
    };

    let mut st = VecchiaStructure::build(&points, start.range_s, start.range_t, &opts.vecchia)?;
    let mut nm = NelderMead {
        max_evals: opts.max_evals,
        f_tol: 1e-9,
        x_tol: 1e-4,
        initial_step: 0.4,
    };
    let mut res = nm.minimize(|v| neg_ll(&st, v), &x0, &bounds);
    let mut evals = res.evals;
    let mut trace: Vec<f64> = res.trace.iter().map(|f| -f).collect();
    if opts.refresh_neighbors {
        let (rs, rt, _) = unpack(&res.x);
        st = VecchiaStructure::build(&points, rs, rt, &opts.vecchia)?;
        nm.initial_step = 0.1;
        let again = nm.minimize(|v| neg_ll(&st, v), &res.x, &bounds);
        evals += again.evals;
        trace.extend(again.trace.iter().map(|f| -f));
        res = again;
    }
    let (rs, rt, eta) = unpack(&res.x);
    let w = whiten(&st, &points, &z, &x, rs, rt, eta)?;
    let (ll, b, sigma2) = profile(&w, floor)?;
    let params = GpParams {
        beta: design.expand(&DVector::from_column_slice(b.as_slice())),
        sigma2,
        range_s: rs,
        range_t: rt,
        tau2: eta * sigma2,
    };
    if !res.converged || !ll.is_finite() {
        let tail: Vec<String> = trace.iter().rev().take(5).map(|v| format!("{v:.6}")).collect();
        return Err(Error::NoConvergence {
            message: format!("likelihood optimizer stopped after {evals} evaluations; last log-likelihoods {}", tail.join(", ")),
            best: Some(Box::new(params)),
        });
    }
    Ok(GpFit {
        params,
        objective: ll,
        converged: true,
        evals,
        trace,
        jittered: w.jittered,
        variogram: None,
    })
}

/// GLS trend coefficients under fixed covariance parameters, using the
/// Vecchia factor for the whitening.
pub fn gls_beta(data: &Dataset, theta: &GpParams, cfg: &VecchiaConfig) -> Result<TrendCoefficients> {
    theta.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let points = data.points();
    let rows = rows_of(&data.covariates);
    let design = TrendDesign::new(&rows, &data.schema.names)?;
    let x = design.matrix(&rows);
    let st = VecchiaStructure::build(&points, theta.range_s, theta.range_t, cfg)?;
    let eta = (theta.tau2 / theta.sigma2).max(1e-12);
    let w = whiten(&st, &points, &data.values(), &x, theta.range_s, theta.range_t, eta)?;
    let b = crate::linalg::lstsq(&w.x, &w.z)?;
    Ok(design.expand(&b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::dataset_at;
    use crate::gp::{covariance_matrix, vecchia_loglik};
    use crate::models::linear::TrendCoefficients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn simulate(n: usize, p: &GpParams, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<SpatioTemporalPoint> = (0..n)
            .map(|_| SpatioTemporalPoint::new(rng.random_range(0.0..2000.0), rng.random_range(0.0..2000.0), rng.random_range(0.0..14400.0)))
            .collect();
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        let k = covariance_matrix(&pts, p, true);
        let l = k.cholesky().unwrap().l();
        let e = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
        let f = l * e;
        let z: Vec<f64> = (0..n).map(|i| p.beta.evaluate(&xs[i]) + f[i]).collect();
        dataset_at(&pts, &xs, &z)
    }

    fn truth() -> GpParams {
        GpParams {
            beta: TrendCoefficients { beta: vec![3.0, 0.5] },
            sigma2: 1.0,
            range_s: 500.0,
            range_t: 3600.0,
            tau2: 0.1,
        }
    }

    #[test]
    fn optimum_beats_generating_params() {
        let ds = simulate(60, &truth(), 1);
        let opts = MlFitOptions {
            vecchia: VecchiaConfig { m: 59, ..Default::default() },
            ..Default::default()
        };
        let fit = gp_ml_fit(&ds, &opts, None).unwrap();
        let at_truth = vecchia_loglik(&truth(), &ds, &opts.vecchia).unwrap().value;
        assert!(fit.objective >= at_truth - 1e-9, "{} < {at_truth}", fit.objective);
        let at_fit = vecchia_loglik(&fit.params, &ds, &opts.vecchia).unwrap().value;
        assert!((at_fit - fit.objective).abs() < 1e-6);
    }

    #[test]
    fn degenerate_trend_only_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 60;
        let pts: Vec<SpatioTemporalPoint> = (0..n)
            .map(|_| SpatioTemporalPoint::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0), rng.random_range(0.0..3600.0)))
            .collect();
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let z: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x[0] - 0.5 * x[1]).collect();
        let ds = dataset_at(&pts, &xs, &z);
        let fit = match gp_ml_fit(&ds, &MlFitOptions::default(), None) {
            Ok(f) => f.params,
            Err(Error::NoConvergence { best: Some(b), .. }) => *b,
            Err(e) => panic!("{e}"),
        };
        let ols = lr_fit(&ds).unwrap();
        for (a, b) in fit.beta.beta.iter().zip(&ols.beta) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(fit.sigma2 < 1e-9 && fit.tau2 < 1e-9, "{fit:?}");
    }

    #[test]
    fn small_fixture_rejected() {
        let ds = simulate(20, &truth(), 3);
        assert!(gp_ml_fit(&ds, &MlFitOptions::default(), None).is_err());
    }

    #[test]
    fn vg_route_returns_valid_params() {
        let ds = simulate(400, &truth(), 4);
        let fit = gp_vg_fit(&ds, &VgFitOptions::default()).unwrap();
        fit.params.validate().unwrap();
        assert_eq!(fit.params.beta, lr_fit(&ds).unwrap());
        assert!(fit.variogram.is_some());
    }
}
