//! The four performance indicators: RMSE, BIAS, CORR and the maximum
//! absolute error. All are evaluated on log-space values; `predicted` is Z*
//! and `actual` is Z, so a positive bias means over-prediction.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse: f64,
    pub bias: f64,
    /// `None` when either series is constant.
    pub corr: Option<f64>,
    /// Maximum absolute error.
    pub mae: f64,
    pub n: usize,
}

fn check(predicted: &[f64], actual: &[f64]) -> Result<()> {
    if predicted.len() != actual.len() {
        return Err(contract(format!(
            "length mismatch: {} predictions vs {} observations",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(contract("metrics need at least one pair"));
    }
    if predicted.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(contract("non-finite value in metric input"));
    }
    Ok(())
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check(predicted, actual)?;
    let ss: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();
    Ok((ss / predicted.len() as f64).sqrt())
}

pub fn bias(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check(predicted, actual)?;
    let s: f64 = predicted.iter().zip(actual).map(|(p, a)| p - a).sum();
    Ok(s / predicted.len() as f64)
}

/// Pearson correlation; `Ok(None)` if either series is constant.
pub fn corr(predicted: &[f64], actual: &[f64]) -> Result<Option<f64>> {
    check(predicted, actual)?;
    if predicted.len() < 2 {
        return Err(contract("correlation needs at least two pairs"));
    }
    let n = predicted.len() as f64;
    let mp = predicted.iter().sum::<f64>() / n;
    let ma = actual.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, a) in predicted.iter().zip(actual) {
        let dp = p - mp;
        let da = a - ma;
        sxy += dp * da;
        sxx += dp * dp;
        syy += da * da;
    }
    Ok(pearson(sxy, sxx, syy))
}

fn pearson(sxy: f64, sxx: f64, syy: f64) -> Option<f64> {
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn mae_max(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check(predicted, actual)?;
    Ok(predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .fold(0.0, f64::max))
}

impl MetricSet {
    /// All four indicators in one streaming pass (Welford co-moments).
    pub fn compute(predicted: &[f64], actual: &[f64]) -> Result<MetricSet> {
        check(predicted, actual)?;
        let (mut ss, mut sum_err, mut max_abs) = (0.0f64, 0.0f64, 0.0f64);
        let (mut mp, mut ma, mut cxy, mut cxx, mut cyy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (k, (&p, &a)) in predicted.iter().zip(actual).enumerate() {
            let e = p - a;
            ss += e * e;
            sum_err += e;
            max_abs = max_abs.max(e.abs());

            let kf = (k + 1) as f64;
            let dp = p - mp;
            let da = a - ma;
            mp += dp / kf;
            ma += da / kf;
            cxy += dp * (a - ma);
            cxx += dp * (p - mp);
            cyy += da * (a - ma);
        }
        let n = predicted.len();
        Ok(MetricSet {
            rmse: (ss / n as f64).sqrt(),
            bias: sum_err / n as f64,
            corr: if n >= 2 { pearson(cxy, cxx, cyy) } else { None },
            mae: max_abs,
            n,
        })
    }

    /// Same indicators after mapping both series back to µg/m³.
    pub fn compute_back_transformed(predicted: &[f64], actual: &[f64]) -> Result<MetricSet> {
        let p: Vec<f64> = predicted.iter().map(|v| v.exp()).collect();
        let a: Vec<f64> = actual.iter().map(|v| v.exp()).collect();
        Self::compute(&p, &a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[2.0, 4.0], &[1.0, 3.0]).unwrap(), 1.0);
        assert_eq!(bias(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(bias(&[3.0, 5.0], &[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(mae_max(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae_max(&[0.0, 10.0], &[1.0, 3.0]).unwrap(), 7.0);
        let a = [1.0, 3.0, 2.0, 8.0];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((corr(&a, &a).unwrap().unwrap() - 1.0).abs() < 1e-15);
        assert!((corr(&neg, &a).unwrap().unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn error_paths() {
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
        assert!(bias(&[f64::NAN], &[1.0]).is_err());
        assert!(corr(&[1.0], &[1.0]).is_err());
        assert_eq!(corr(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), None);
        let m = MetricSet::compute(&[2.0, 2.0], &[1.0, 3.0]).unwrap();
        assert_eq!(m.corr, None);
    }

    // Straight transcription of the four formulas, kept deliberately naive.
    fn naive(p: &[f64], a: &[f64]) -> (f64, f64, f64, f64) {
        let n = p.len() as f64;
        let mut ss = 0.0;
        let mut s = 0.0;
        let mut mx = 0.0f64;
        for i in 0..p.len() {
            ss += (p[i] - a[i]) * (p[i] - a[i]);
            s += p[i] - a[i];
            if (p[i] - a[i]).abs() > mx {
                mx = (p[i] - a[i]).abs();
            }
        }
        let mut mp = 0.0;
        let mut ma = 0.0;
        for i in 0..p.len() {
            mp += p[i];
            ma += a[i];
        }
        mp /= n;
        ma /= n;
        let mut num = 0.0;
        let mut dp = 0.0;
        let mut da = 0.0;
        for i in 0..p.len() {
            num += (p[i] - mp) * (a[i] - ma);
            dp += (p[i] - mp) * (p[i] - mp);
            da += (a[i] - ma) * (a[i] - ma);
        }
        ((ss / n).sqrt(), s / n, num / (dp * da).sqrt(), mx)
    }

    #[test]
    fn random_pairs_match_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(2..200);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..5.0)).collect();
            let p: Vec<f64> = a.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
            let (r, b, c, m) = naive(&p, &a);
            assert!((rmse(&p, &a).unwrap() - r).abs() < 1e-12);
            assert!((bias(&p, &a).unwrap() - b).abs() < 1e-12);
            assert!((corr(&p, &a).unwrap().unwrap() - c).abs() < 1e-12);
            assert_eq!(mae_max(&p, &a).unwrap(), m);
            let set = MetricSet::compute(&p, &a).unwrap();
            assert!((set.rmse - r).abs() < 1e-12);
            assert!((set.bias - b).abs() < 1e-12);
            assert!((set.corr.unwrap() - c).abs() < 1e-12);
            assert_eq!(set.mae, m);
        }
    }

    mod props {
        use super::*;
        use proptest::collection::vec;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mae_dominates_rmse_dominates_bias(
                pairs in vec((-100.0..100.0f64, -100.0..100.0f64), 1..64)
            ) {
                let (p, a): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                let m = MetricSet::compute(&p, &a).unwrap();
                prop_assert!(m.mae + 1e-9 >= m.rmse);
                prop_assert!(m.rmse + 1e-9 >= m.bias.abs());
                if let Some(c) = m.corr {
                    prop_assert!((-1.0..=1.0).contains(&c));
                }
            }
        }
    }
}
