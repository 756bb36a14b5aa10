//! Gradient boosting of shallow trees on squared loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{tree_fit, RegressionTree, TreeParams};
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub l2_leaf: f64,
    pub min_samples_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 200,
            learning_rate: 0.1,
            max_depth: 4,
            l2_leaf: 1.0,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    /// Training mean.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    /// Mean squared training loss before the first round and after each round.
    pub training_loss: Vec<f64>,
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

pub fn boost_fit(x: &[Vec<f64>], y: &[f64], params: &BoostParams) -> Result<Booster> {
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) || params.l2_leaf < 0.0 || params.min_samples_leaf == 0 {
        return Err(contract(format!("invalid boosting parameters {params:?}")));
    }
    if y.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let base_score = y.iter().sum::<f64>() / y.len() as f64;
    let mut f = vec![base_score; y.len()];
    let tp = TreeParams {
        max_depth: Some(params.max_depth),
        min_samples_leaf: params.min_samples_leaf,
        max_features: None,
        l2_leaf: params.l2_leaf,
    };
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut training_loss = vec![mse(&f, y)];
    for _ in 0..params.n_rounds {
        // negative gradient of ½(y − F)²
        let r: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
        let t = tree_fit(x, &r, &tp);
        for (fi, xi) in f.iter_mut().zip(x) {
            *fi += params.learning_rate * t.predict_row(xi);
        }
        training_loss.push(mse(&f, y));
        trees.push(t);
    }
    Ok(Booster {
        base_score,
        learning_rate: params.learning_rate,
        trees,
        training_loss,
    })
}

impl Booster {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.par_iter().map(|r| self.predict_row(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_target() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let b = boost_fit(&x, &[2.5; 20], &BoostParams { n_rounds: 10, ..Default::default() }).unwrap();
        assert!(b.predict(&x).iter().all(|v| *v == 2.5));
        assert!(b.training_loss.iter().all(|l| *l == 0.0));
    }

    #[test]
    fn hand_computed_two_rounds() {
        // F0 = 4, residuals (-3,-2,-1,6). SD reductions of the three stumps are
        // 0.867 (1.5), 1.536 (2.5), 2.923 (3.5): cut at 3.5, leaves -2 and 6,
        // F1 = (2,2,2,10). Residuals (-1,0,1,0) give reductions 0.354 (1.5),
        // 0.207 (2.5), 0.095 (3.5): cut at 1.5, leaves -1 and 1/3,
        // F2 = (1, 7/3, 7/3, 31/3).
        let x: Vec<Vec<f64>> = (1..=4).map(|i| vec![i as f64]).collect();
        let y = [1.0, 2.0, 3.0, 10.0];
        let p = BoostParams {
            n_rounds: 2,
            learning_rate: 1.0,
            max_depth: 1,
            l2_leaf: 0.0,
            min_samples_leaf: 1,
        };
        let b = boost_fit(&x, &y, &p).unwrap();
        assert_eq!(b.base_score, 4.0);
        let want = [1.0, 7.0 / 3.0, 7.0 / 3.0, 31.0 / 3.0];
        for (g, w) in b.predict(&x).iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!((b.predict_row(&[0.0]) - 1.0).abs() < 1e-12);
        assert!((b.predict_row(&[5.0]) - 31.0 / 3.0).abs() < 1e-12);
        for (g, w) in b.training_loss.iter().zip([12.5, 0.5, 1.0 / 6.0]) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..150).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0 + r[1].cos() + rng.random_range(-0.5..0.5)).collect();
        let b = boost_fit(&x, &y, &BoostParams::default()).unwrap();
        assert_eq!(b.training_loss.len(), 201);
        for w in b.training_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_learning_rate() {
        let x = vec![vec![0.0]];
        assert!(boost_fit(&x, &[1.0], &BoostParams { learning_rate: 0.0, ..Default::default() }).is_err());
        assert!(boost_fit(&x, &[1.0], &BoostParams { learning_rate: 1.5, ..Default::default() }).is_err());
    }
}
