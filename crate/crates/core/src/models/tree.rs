//! Regression trees grown by standard-deviation reduction.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per split; all when `None`.
    pub max_features: Option<usize>,
    /// Leaf value is `Σy / (n + l2_leaf)`; zero gives the plain mean.
    pub l2_leaf: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
            l2_leaf: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub reduction: f64,
}

/// Population standard deviation from centered sums.
fn sd(n: f64, s: f64, ss: f64) -> f64 {
    (ss / n - (s / n).powi(2)).max(0.0).sqrt()
}

/// Best split of `idx` over `features`, by `sd(parent) − Σ (n_c/n)·sd(child)`.
/// The first maximum in feature-then-threshold order wins.
pub fn best_split(x: &[Vec<f64>], y: &[f64], idx: &[usize], features: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n = idx.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let nf = n as f64;
    let m = idx.iter().map(|&i| y[i]).sum::<f64>() / nf;
    let (ts, tss) = idx.iter().fold((0.0, 0.0), |(s, ss), &i| {
        let d = y[i] - m;
        (s + d, ss + d * d)
    });
    let parent = sd(nf, ts, tss);
    let mut best: Option<SplitChoice> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &f in features {
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (x[i][f], y[i] - m)));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut ls, mut lss) = (0.0, 0.0);
        for k in 0..n - 1 {
            ls += pairs[k].1;
            lss += pairs[k].1 * pairs[k].1;
            let nl = k + 1;
            if pairs[k].0 == pairs[k + 1].0 || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let (nlf, nrf) = (nl as f64, (n - nl) as f64);
            let red = parent - nlf / nf * sd(nlf, ls, lss) - nrf / nf * sd(nrf, ts - ls, tss - lss);
            if best.is_none_or(|b| red > b.reduction) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: 0.5 * (pairs[k].0 + pairs[k + 1].0),
                    reduction: red,
                });
            }
        }
    }
    best.filter(|b| b.reduction > 1e-12 * parent.max(1e-300) && b.reduction > 0.0)
}

/// Grows a tree on rows `idx`, which may repeat (bootstrap).
pub(crate) fn grow(x: &[Vec<f64>], y: &[f64], idx: Vec<usize>, params: &TreeParams, mut rng: Option<&mut ChaCha8Rng>) -> RegressionTree {
    let p = x.first().map_or(0, |r| r.len());
    let all: Vec<usize> = (0..p).collect();
    let mut nodes = Vec::new();
    let leaf = |idx: &[usize]| {
        let s: f64 = idx.iter().map(|&i| y[i]).sum();
        let d = idx.len() as f64 + params.l2_leaf;
        TreeNode::Leaf { value: if d > 0.0 { s / d } else { 0.0 } }
    };
    // (node slot, rows, depth)
    let mut stack = vec![(0usize, idx, 0usize)];
    nodes.push(TreeNode::Leaf { value: 0.0 });
    while let Some((slot, rows, depth)) = stack.pop() {
        let at_limit = params.max_depth.is_some_and(|d| depth >= d);
        let features: Vec<usize> = match (params.max_features, rng.as_deref_mut()) {
            (Some(k), Some(r)) if k < p => {
                let mut f = sample(r, p, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => all.clone(),
        };
        let split = if at_limit { None } else { best_split(x, y, &rows, &features, params.min_samples_leaf) };
        match split {
            None => nodes[slot] = leaf(&rows),
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][s.feature] <= s.threshold);
                let (li, ri) = (nodes.len(), nodes.len() + 1);
                nodes.push(TreeNode::Leaf { value: 0.0 });
                nodes.push(TreeNode::Leaf { value: 0.0 });
                nodes[slot] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: li,
                    right: ri,
                };
                stack.push((ri, r, depth + 1));
                stack.push((li, l, depth + 1));
            }
        }
    }
    RegressionTree {
        nodes,
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    }
}

/// Deterministic tree on all rows and all features.
pub fn tree_fit(x: &[Vec<f64>], y: &[f64], params: &TreeParams) -> RegressionTree {
    grow(x, y, (0..y.len()).collect(), params, None)
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    k = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pop_sd(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let t = tree_fit(&x, &[3.0; 10], &TreeParams::default());
        assert_eq!(t.nodes, vec![TreeNode::Leaf { value: 3.0 }]);
    }

    #[test]
    fn memorizes_step_function() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| (i / 7) as f64).collect();
        let t = tree_fit(&x, &y, &TreeParams::default());
        for (r, v) in x.iter().zip(&y) {
            assert_eq!(t.predict_row(r), *v);
        }
    }

    #[test]
    fn root_split_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
            let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut best = (f64::NEG_INFINITY, 0, 0.0);
            for f in 0..3 {
                for cand in &x {
                    let thr = cand[f];
                    let l: Vec<f64> = (0..20).filter(|&i| x[i][f] <= thr).map(|i| y[i]).collect();
                    let r: Vec<f64> = (0..20).filter(|&i| x[i][f] > thr).map(|i| y[i]).collect();
                    if l.is_empty() || r.is_empty() {
                        continue;
                    }
                    let red = pop_sd(&y) - l.len() as f64 / 20.0 * pop_sd(&l) - r.len() as f64 / 20.0 * pop_sd(&r);
                    if red > best.0 {
                        best = (red, f, thr);
                    }
                }
            }
            let t = tree_fit(&x, &y, &TreeParams { max_depth: Some(1), ..Default::default() });
            let TreeNode::Split { feature, threshold, .. } = t.nodes[0] else { panic!("no split") };
            assert_eq!(feature, best.1);
            // same partition of the training rows
            for r in &x {
                assert_eq!(r[feature] <= threshold, r[feature] <= best.2);
            }
        }
    }

    #[test]
    fn leaf_limits() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64).collect();
        let t = tree_fit(&x, &y, &TreeParams { min_samples_leaf: 5, ..Default::default() });
        assert!(t.n_leaves() <= 8);
        let t = tree_fit(&x, &y, &TreeParams { max_depth: Some(2), ..Default::default() });
        assert!(t.n_leaves() <= 4);
    }

    proptest! {
        #[test]
        fn invariant_to_monotone_covariate_transform(
            rows in proptest::collection::vec((0.0f64..10.0, -5.0f64..5.0, -1.0f64..1.0), 5..40)
        ) {
            let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
            let xt: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0.exp(), r.1]).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let params = TreeParams { max_depth: Some(4), ..Default::default() };
            let a = tree_fit(&x, &y, &params);
            let b = tree_fit(&xt, &y, &params);
            for (r, rt) in x.iter().zip(&xt) {
                prop_assert!((a.predict_row(r) - b.predict_row(rt)).abs() < 1e-12);
            }
        }
    }
}
