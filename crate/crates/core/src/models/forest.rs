//! Random forest: bagged trees with per-split feature subsampling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, RegressionTree, TreeParams};
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    /// Defaults to ⌈P/3⌉.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: Some(12),
            features_per_split: None,
            bootstrap: true,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
}

pub fn rf_fit(x: &[Vec<f64>], y: &[f64], params: &ForestParams) -> Result<Forest> {
    if params.n_trees == 0 || params.min_samples_leaf == 0 || params.features_per_split == Some(0) {
        return Err(contract(format!("invalid forest parameters {params:?}")));
    }
    if y.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let p = x[0].len();
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: Some(params.features_per_split.unwrap_or(p.div_ceil(3)).min(p.max(1))),
        l2_leaf: 0.0,
    };
    // one independent stream per tree, drawn up front so the result does
    // not depend on scheduling
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<u64> = (0..params.n_trees).map(|_| master.next_u64()).collect();
    let n = y.len();
    let trees = seeds
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(x, y, idx, &tp, Some(&mut rng))
        })
        .collect();
    Ok(Forest { trees })
}

impl Forest {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.par_iter().map(|r| self.predict_row(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::tree_fit;

    fn fixture(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y = x.iter().map(|r| r[0].sin() + r[1] * r[2] + 0.1 * rng.random_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn single_full_tree_is_tree_fit() {
        let (x, y) = fixture(80, 1);
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            features_per_split: Some(4),
            max_depth: None,
            ..Default::default()
        };
        let f = rf_fit(&x, &y, &params).unwrap();
        let t = tree_fit(&x, &y, &TreeParams::default());
        for r in &x {
            assert_eq!(f.predict_row(r), t.predict_row(r));
        }
    }

    #[test]
    fn constant_target() {
        let (x, _) = fixture(50, 2);
        let f = rf_fit(&x, &[1.5; 50], &ForestParams { n_trees: 20, ..Default::default() }).unwrap();
        assert!(f.predict(&x).iter().all(|v| *v == 1.5));
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, y) = fixture(100, 3);
        let params = ForestParams { n_trees: 30, seed: 9, ..Default::default() };
        let a = rf_fit(&x, &y, &params).unwrap().predict(&x);
        let b = rf_fit(&x, &y, &params).unwrap().predict(&x);
        assert_eq!(a, b);
    }

    #[test]
    fn spread_across_seeds_shrinks_with_more_trees() {
        let (x, y) = fixture(100, 4);
        let (q, _) = fixture(20, 5);
        let spread = |n_trees: usize| {
            let preds: Vec<Vec<f64>> = (0..8)
                .map(|s| rf_fit(&x, &y, &ForestParams { n_trees, seed: s, ..Default::default() }).unwrap().predict(&q))
                .collect();
            (0..q.len())
                .map(|i| {
                    let m = preds.iter().map(|p| p[i]).sum::<f64>() / 8.0;
                    preds.iter().map(|p| (p[i] - m).powi(2)).sum::<f64>() / 7.0
                })
                .sum::<f64>()
        };
        let (v1, v10, v100) = (spread(1), spread(10), spread(100));
        assert!(v1 > v10 && v10 > v100, "{v1} {v10} {v100}");
    }

    #[test]
    fn rejects_zero_trees() {
        let (x, y) = fixture(10, 6);
        assert!(rf_fit(&x, &y, &ForestParams { n_trees: 0, ..Default::default() }).is_err());
    }
}
