//! Ordinary least squares on an intercept plus the covariates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dependent_columns, lstsq};
use crate::types::{CovariateVector, Dataset, Query};

/// Intercept followed by one coefficient per covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCoefficients {
    pub beta: Vec<f64>,
}

impl TrendCoefficients {
    pub fn intercept_only(b0: f64, p: usize) -> Self {
        let mut beta = vec![0.0; p + 1];
        beta[0] = b0;
        Self { beta }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len() + 1, self.beta.len());
        self.beta[0] + self.beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Columns entering a trend design: the intercept plus every non-constant covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendDesign {
    pub p: usize,
    /// Indices of covariates kept in the design.
    pub kept: Vec<usize>,
}

fn is_constant(rows: &[&[f64]], j: usize) -> bool {
    let Some(first) = rows.first().map(|r| r[j]) else {
        return true;
    };
    let tol = 1e-12 * first.abs().max(1.0);
    rows.iter().all(|r| (r[j] - first).abs() <= tol)
}

impl TrendDesign {
    /// Drops constant covariates, then rejects linearly dependent ones.
    pub fn new(rows: &[&[f64]], names: &[String]) -> Result<Self> {
        let p = names.len();
        let kept: Vec<usize> = (0..p).filter(|&j| !is_constant(rows, j)).collect();
        let design = Self { p, kept };
        let x = design.matrix(rows);
        if x.nrows() < x.ncols() {
            return Err(Error::RankDeficient {
                columns: design.kept.iter().map(|&j| names[j].clone()).collect(),
            });
        }
        // scale columns so the dependence test is unit-free
        let mut xs = x.clone();
        for mut c in xs.column_iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                c /= n;
            }
        }
        let dep = dependent_columns(&xs, 1e-9);
        if !dep.is_empty() {
            let columns = dep
                .iter()
                .map(|&c| if c == 0 { "(intercept)".to_string() } else { names[design.kept[c - 1]].clone() })
                .collect();
            return Err(Error::RankDeficient { columns });
        }
        Ok(design)
    }

    pub fn ncols(&self) -> usize {
        self.kept.len() + 1
    }

    pub fn row(&self, x: &[f64]) -> Vec<f64> {
        std::iter::once(1.0).chain(self.kept.iter().map(|&j| x[j])).collect()
    }

    pub fn matrix(&self, rows: &[&[f64]]) -> DMatrix<f64> {
        let k = self.ncols();
        DMatrix::from_fn(rows.len(), k, |i, j| if j == 0 { 1.0 } else { rows[i][self.kept[j - 1]] })
    }

    /// Full-length coefficients with zeros for dropped covariates.
    pub fn expand(&self, b: &DVector<f64>) -> TrendCoefficients {
        let mut beta = vec![0.0; self.p + 1];
        beta[0] = b[0];
        for (k, &j) in self.kept.iter().enumerate() {
            beta[j + 1] = b[k + 1];
        }
        TrendCoefficients { beta }
    }
}

pub fn rows_of(covs: &[CovariateVector]) -> Vec<&[f64]> {
    covs.iter().map(|c| c.0.as_slice()).collect()
}

/// OLS of `z` on the given rows.
pub fn ols(rows: &[&[f64]], names: &[String], z: &[f64]) -> Result<TrendCoefficients> {
    if rows.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let design = TrendDesign::new(rows, names)?;
    let x = design.matrix(rows);
    let b = lstsq(&x, &DVector::from_column_slice(z))?;
    Ok(design.expand(&b))
}

pub fn lr_fit(train: &Dataset) -> Result<TrendCoefficients> {
    ols(&rows_of(&train.covariates), &train.schema.names, &train.values())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: TrendCoefficients,
}

impl LinearModel {
    pub fn fit(train: &Dataset) -> Result<Self> {
        Ok(Self {
            coefficients: lr_fit(train)?,
        })
    }

    pub fn predict(&self, query: &Query) -> Vec<f64> {
        query.covariates.iter().map(|c| self.coefficients.evaluate(&c.0)).collect()
    }
}
