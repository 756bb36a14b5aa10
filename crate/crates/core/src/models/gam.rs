//! Additive model with penalized cubic regression splines, smoothing chosen
//! by generalized cross-validation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::linalg::cholesky_jitter;
use crate::types::{Dataset, Query};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GamParams {
    /// Upper bound on the degrees of freedom of each smooth.
    pub df_max: usize,
    /// Smoothing strengths searched, as powers of ten.
    pub log10_lambda_min: f64,
    pub log10_lambda_max: f64,
    pub sweeps: usize,
}

impl Default for GamParams {
    fn default() -> Self {
        Self {
            df_max: 9,
            log10_lambda_min: -6.0,
            log10_lambda_max: 6.0,
            sweeps: 3,
        }
    }
}

/// Natural cubic spline parameterized by its values at the knots, with the
/// sum-to-zero constraint absorbed into a reduced basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrSpline {
    pub knots: Vec<f64>,
    /// Maps knot values to second derivatives at the knots, row-major k×k.
    f_plus: Vec<f64>,
    /// Constraint null-space basis, row-major k×(k-1).
    z: Vec<f64>,
}

fn cr_matrices(knots: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = knots.len();
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let mut d = DMatrix::zeros(k - 2, k);
    let mut b = DMatrix::zeros(k - 2, k - 2);
    for i in 0..k - 2 {
        d[(i, i)] = 1.0 / h[i];
        d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
        d[(i, i + 2)] = 1.0 / h[i + 1];
        b[(i, i)] = (h[i] + h[i + 1]) / 3.0;
        if i + 1 < k - 2 {
            b[(i, i + 1)] = h[i + 1] / 6.0;
            b[(i + 1, i)] = h[i + 1] / 6.0;
        }
    }
    let binv_d = b.clone().cholesky().expect("tridiagonal with positive diagonal dominance").solve(&d);
    let mut f_plus = DMatrix::zeros(k, k);
    f_plus.view_mut((1, 0), (k - 2, k)).copy_from(&binv_d);
    let s = d.transpose() * binv_d;
    (f_plus, s)
}

impl CrSpline {
    fn k(&self) -> usize {
        self.knots.len()
    }

    fn fp(&self, r: usize, c: usize) -> f64 {
        self.f_plus[r * self.k() + c]
    }

    /// Unconstrained basis row: spline value as a linear function of knot values.
    fn raw_row(&self, x: f64) -> Vec<f64> {
        let k = self.k();
        let kn = &self.knots;
        let mut row = vec![0.0; k];
        if x < kn[0] {
            // linear extrapolation with the end slope
            let h = kn[1] - kn[0];
            let dx = x - kn[0];
            row[0] += 1.0 - dx / h;
            row[1] += dx / h;
            for c in 0..k {
                row[c] -= dx * h / 6.0 * self.fp(1, c);
            }
            return row;
        }
        if x > kn[k - 1] {
            let h = kn[k - 1] - kn[k - 2];
            let dx = x - kn[k - 1];
            row[k - 1] += 1.0 + dx / h;
            row[k - 2] -= dx / h;
            for c in 0..k {
                row[c] += dx * h / 6.0 * self.fp(k - 2, c);
            }
            return row;
        }
        let j = kn.partition_point(|&v| v <= x).clamp(1, k - 1) - 1;
        let h = kn[j + 1] - kn[j];
        let (am, ap) = ((kn[j + 1] - x) / h, (x - kn[j]) / h);
        let cm = ((kn[j + 1] - x).powi(3) / h - h * (kn[j + 1] - x)) / 6.0;
        let cp = ((x - kn[j]).powi(3) / h - h * (x - kn[j])) / 6.0;
        row[j] += am;
        row[j + 1] += ap;
        for c in 0..k {
            row[c] += cm * self.fp(j, c) + cp * self.fp(j + 1, c);
        }
        row
    }

    pub fn row(&self, x: f64) -> Vec<f64> {
        let k = self.k();
        let raw = self.raw_row(x);
        (0..k - 1).map(|c| (0..k).map(|r| raw[r] * self.z[r * (k - 1) + c]).sum()).collect()
    }

    pub fn df(&self) -> usize {
        self.k() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Spline { column: usize, spline: CrSpline },
    /// Too few distinct values for a smooth; enters linearly, centered.
    Linear { column: usize, center: f64 },
    Dropped { column: usize },
}

impl Term {
    fn width(&self) -> usize {
        match self {
            Term::Spline { spline, .. } => spline.df(),
            Term::Linear { .. } => 1,
            Term::Dropped { .. } => 0,
        }
    }

    fn row(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Term::Spline { column, spline } => spline.row(x[*column]),
            Term::Linear { column, center } => vec![x[*column] - center],
            Term::Dropped { .. } => vec![],
        }
    }
}

fn build_term(column: usize, values: &[f64], df_max: usize) -> (Term, Option<DMatrix<f64>>) {
    let mut u = values.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    if u.len() < 2 {
        return (Term::Dropped { column }, None);
    }
    if u.len() < 3 || df_max < 2 {
        let center = values.iter().sum::<f64>() / values.len() as f64;
        return (Term::Linear { column, center }, None);
    }
    let k = (df_max + 1).min(u.len());
    let knots: Vec<f64> = (0..k).map(|i| u[((i as f64) * (u.len() - 1) as f64 / (k - 1) as f64).round() as usize]).collect();
    let (f_plus, s) = cr_matrices(&knots);
    let mut sp = CrSpline {
        knots,
        f_plus: f_plus.transpose().as_slice().to_vec(),
        z: Vec::new(),
    };
    // Householder reflection whose trailing columns span {b : cᵀb = 0},
    // c being the column sums of the basis over the data
    let mut c = DVector::zeros(k);
    for &v in values {
        c += DVector::from_vec(sp.raw_row(v));
    }
    let mut v = c.clone();
    v[0] += if c[0] >= 0.0 { c.norm() } else { -c.norm() };
    let hh = DMatrix::identity(k, k) - 2.0 * &v * v.transpose() / v.norm_squared();
    let z = hh.columns(1, k - 1).into_owned();
    sp.z = z.transpose().as_slice().to_vec();
    let sz = z.transpose() * s * &z;
    (Term::Spline { column, spline: sp }, Some(sz))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamModel {
    pub terms: Vec<Term>,
    /// Intercept followed by the coefficients of each term in order.
    pub coefficients: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Effective degrees of freedom of the whole fit.
    pub edf: f64,
    pub gcv: f64,
}

struct Problem {
    n: usize,
    x: DMatrix<f64>,
    xtx: DMatrix<f64>,
    xtz: DVector<f64>,
    z: DVector<f64>,
    /// Penalty blocks: column offset and weighted matrix.
    penalties: Vec<(usize, DMatrix<f64>)>,
}

impl Problem {
    fn solve(&self, log_l: &[f64]) -> Result<(DVector<f64>, f64, f64)> {
        let mut a = self.xtx.clone();
        for ((off, s), ll) in self.penalties.iter().zip(log_l) {
            let l = 10f64.powf(*ll);
            let d = s.nrows();
            let mut blk = a.view_mut((*off, *off), (d, d));
            blk += s * l;
        }
        let scale = self.xtx.diagonal().max().max(1e-300);
        let (chol, _) = cholesky_jitter(a, scale)?;
        let beta = chol.solve(&self.xtz);
        let edf = chol.solve(&self.xtx).trace();
        let rss = (&self.z - &self.x * &beta).norm_squared();
        let dof = (self.n as f64 - edf).max(1e-9);
        Ok((beta, edf, self.n as f64 * rss / (dof * dof)))
    }
}

impl GamModel {
    pub fn fit(train: &Dataset, params: &GamParams) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyTraining);
        }
        if params.df_max == 0 || params.sweeps == 0 || !(params.log10_lambda_min <= params.log10_lambda_max) {
            return Err(contract(format!("invalid GAM parameters {params:?}")));
        }
        let n = train.len();
        let p = train.n_covariates();
        let mut terms = Vec::with_capacity(p);
        let mut raw_pen = Vec::new();
        let mut offset = 1;
        for j in 0..p {
            let col: Vec<f64> = train.covariates.iter().map(|c| c.0[j]).collect();
            let (t, s) = build_term(j, &col, params.df_max);
            if let Some(s) = s {
                raw_pen.push((offset, s));
            }
            offset += t.width();
            terms.push(t);
        }
        let ncol = offset;
        if ncol > n {
            return Err(contract(format!("basis dimension {ncol} exceeds the {n} training rows")));
        }
        let mut x = DMatrix::zeros(n, ncol);
        for (i, c) in train.covariates.iter().enumerate() {
            x[(i, 0)] = 1.0;
            let mut o = 1;
            for t in &terms {
                for v in t.row(&c.0) {
                    x[(i, o)] = v;
                    o += 1;
                }
            }
        }
        let xtx = x.transpose() * &x;
        let z = DVector::from_vec(train.values());
        let xtz = x.transpose() * &z;
        // put each penalty on the scale of its block of XᵀX
        let penalties = raw_pen
            .into_iter()
            .map(|(off, s)| {
                let d = s.nrows();
                let w = xtx.view((off, off), (d, d)).norm() / s.norm().max(1e-300);
                (off, s * w)
            })
            .collect();
        let prob = Problem { n, x, xtx, xtz, z, penalties };

        let grid: Vec<f64> = {
            let (lo, hi) = (params.log10_lambda_min, params.log10_lambda_max);
            let steps = (hi - lo).round().max(0.0) as usize;
            (0..=steps).map(|i| lo + i as f64).collect()
        };
        let m = prob.penalties.len();
        let mut idx = vec![grid.iter().position(|&g| g >= 0.0).unwrap_or(grid.len() / 2); m];
        let at = |idx: &[usize]| idx.iter().map(|&i| grid[i]).collect::<Vec<f64>>();
        let mut best = prob.solve(&at(&idx))?;
        for sweep in 0..params.sweeps {
            let mut changed = false;
            for t in 0..m {
                let cands: Vec<usize> = if sweep == 0 {
                    (0..grid.len()).collect()
                } else {
                    [idx[t].wrapping_sub(1), idx[t] + 1].into_iter().filter(|&i| i < grid.len()).collect()
                };
                for c in cands {
                    if c == idx[t] {
                        continue;
                    }
                    let mut trial = idx.clone();
                    trial[t] = c;
                    let r = prob.solve(&at(&trial))?;
                    if r.2 < best.2 * (1.0 - 1e-12) {
                        best = r;
                        idx = trial;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let (beta, edf, gcv) = best;
        Ok(Self {
            terms,
            coefficients: beta.iter().copied().collect(),
            lambdas: at(&idx).iter().map(|l| 10f64.powf(*l)).collect(),
            edf,
            gcv,
        })
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        let mut v = self.coefficients[0];
        let mut o = 1;
        for t in &self.terms {
            for b in t.row(x) {
                v += b * self.coefficients[o];
                o += 1;
            }
        }
        v
    }

    pub fn predict(&self, query: &Query) -> Vec<f64> {
        query.covariates.iter().map(|c| self.predict_one(&c.0)).collect()
    }

    pub fn max_term_df(&self) -> usize {
        self.terms.iter().map(Term::width).max().unwrap_or(0)
    }
}

pub fn gam_fit_predict(train: &Dataset, query: &Query, df_max: usize) -> Result<Vec<f64>> {
    let m = GamModel::fit(train, &GamParams { df_max, ..Default::default() })?;
    Ok(m.predict(query))
}
