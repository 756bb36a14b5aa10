//! ε-support vector regression with an RBF kernel, solved by SMO.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scale::Standardizer;
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrParams {
    pub c_reg: f64,
    pub epsilon: f64,
    /// RBF bandwidth on standardized covariates; `1/P` when unset.
    pub gamma: Option<f64>,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c_reg: 1.0,
            epsilon: 0.1,
            gamma: None,
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
}

/// Dual solution in the doubled form: variables `0..n` are α, `n..2n` are α*.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    /// `½αᵀQα + pᵀα` at the solution.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final maximal KKT violation.
    pub violation: f64,
}

/// Kernel rows, precomputed when they fit in memory.
enum Kernel<'a> {
    Dense(Vec<f64>, usize),
    Lazy(&'a [Vec<f64>], f64),
}

const DENSE_MAX: usize = 5000;

impl Kernel<'_> {
    fn row(&self, i: usize) -> std::borrow::Cow<'_, [f64]> {
        match self {
            Kernel::Dense(k, n) => std::borrow::Cow::Borrowed(&k[i * n..(i + 1) * n]),
            Kernel::Lazy(x, g) => std::borrow::Cow::Owned(x.iter().map(|r| rbf(&x[i], r, *g)).collect()),
        }
    }
}

/// Solves `min ½αᵀQα + pᵀα` s.t. `yᵀα = 0`, `0 ≤ α ≤ C` for the ε-SVR dual.
pub fn svr_dual(x: &[Vec<f64>], z: &[f64], c: f64, eps: f64, gamma: f64, tol: f64, max_iter: usize) -> DualSolution {
    let n = z.len();
    let l = 2 * n;
    let kernel = if n <= DENSE_MAX {
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| x.iter().map(|r| rbf(&x[i], r, gamma)).collect()).collect();
        Kernel::Dense(rows.concat(), n)
    } else {
        Kernel::Lazy(x, gamma)
    };
    let y = |k: usize| if k < n { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..l).map(|k| if k < n { eps - z[k] } else { eps + z[k - n] }).collect();
    let mut a = vec![0.0; l];
    let mut g = p.clone();
    const TAU: f64 = 1e-12;
    let qd = 1.0; // k(x, x) for the RBF kernel
    let mut iter = 0;
    let mut violation;
    loop {
        // working-set selection with second-order information
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            let up = if y(t) > 0.0 { a[t] < c } else { a[t] > 0.0 };
            if up && -y(t) * g[t] >= gmax {
                gmax = -y(t) * g[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        let ki = if i != usize::MAX { Some(kernel.row(i % n)) } else { None };
        if let Some(ki) = &ki {
            for t in 0..l {
                let (ok, gd) = if y(t) > 0.0 {
                    (a[t] > 0.0, gmax + g[t])
                } else {
                    (a[t] < c, gmax - g[t])
                };
                if !ok {
                    continue;
                }
                gmax2 = gmax2.max(if y(t) > 0.0 { g[t] } else { -g[t] });
                if gd > 0.0 {
                    // equals K_ii + K_tt − 2K_it for either label of t
                    let quad = qd + qd - 2.0 * ki[t % n];
                    let od = -gd * gd / if quad > 0.0 { quad } else { TAU };
                    if od <= best {
                        best = od;
                        j = t;
                    }
                }
            }
        }
        violation = gmax + gmax2;
        if j == usize::MAX || violation < tol {
            break;
        }
        if iter >= max_iter {
            break;
        }
        iter += 1;
        let ki = ki.expect("i selected");
        let kj = kernel.row(j % n);
        let qij = y(i) * y(j) * ki[j % n];
        let (oi, oj) = (a[i], a[j]);
        if y(i) != y(j) {
            let quad = (qd + qd + 2.0 * qij).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > 0.0 {
                if a[i] > c {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if a[j] > c {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            let quad = (qd + qd - 2.0 * qij).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > c {
                if a[i] > c {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > c {
                if a[j] > c {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        let (di, dj) = (a[i] - oi, a[j] - oj);
        for t in 0..l {
            g[t] += y(t) * (y(i) * ki[t % n] * di + y(j) * kj[t % n] * dj);
        }
    }

    // offset from free variables, else the midpoint of the feasible interval
    let (mut ub, mut lb, mut sum, mut nfree) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0);
    for t in 0..l {
        let yg = y(t) * g[t];
        if a[t] >= c {
            if y(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if a[t] <= 0.0 {
            if y(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            nfree += 1;
            sum += yg;
        }
    }
    let rho = if nfree > 0 { sum / nfree as f64 } else { (ub + lb) / 2.0 };
    let objective = a.iter().zip(&g).zip(&p).map(|((ai, gi), pi)| ai * (gi + pi)).sum::<f64>() / 2.0;
    DualSolution {
        alpha: a,
        rho,
        objective,
        iterations: iter,
        converged: violation < tol,
        violation,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub scaler: Standardizer,
    pub gamma: f64,
    /// Standardized support vectors and their coefficients `α − α*`.
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub bias: f64,
    pub dual_objective: f64,
    pub converged: bool,
}

pub fn svr_fit(x: &[Vec<f64>], z: &[f64], params: &SvrParams) -> Result<SvrModel> {
    if !(params.c_reg > 0.0 && params.epsilon > 0.0 && params.tol > 0.0) || params.gamma.is_some_and(|g| !(g > 0.0)) {
        return Err(contract(format!("invalid SVR parameters {params:?}")));
    }
    if z.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let scaler = Standardizer::fit(&x.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
    let xs: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
    let p = xs[0].len().max(1);
    let gamma = params.gamma.unwrap_or(1.0 / p as f64);
    let sol = svr_dual(&xs, z, params.c_reg, params.epsilon, gamma, params.tol, params.max_iter);
    let n = z.len();
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for i in 0..n {
        let c = sol.alpha[i] - sol.alpha[i + n];
        if c != 0.0 {
            support.push(xs[i].clone());
            coef.push(c);
        }
    }
    Ok(SvrModel {
        scaler,
        gamma,
        support,
        coef,
        bias: -sol.rho,
        dual_objective: sol.objective,
        converged: sol.converged,
    })
}

impl SvrModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let xs = self.scaler.apply(x);
        self.bias + self.support.iter().zip(&self.coef).map(|(s, c)| c * rbf(s, &xs, self.gamma)).sum::<f64>()
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.par_iter().map(|r| self.predict_row(r)).collect()
    }
}
