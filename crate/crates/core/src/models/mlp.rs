//! Feed-forward network with sigmoid hidden layers, trained by mini-batch
//! gradient descent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scale::Standardizer;
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            epochs: 500,
            learning_rate: 0.01,
            batch_size: 32,
            seed: 0,
        }
    }
}

pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn random(sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) || *sizes.last().unwrap() != 1 {
            return Err(contract(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let lim = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    n_in: w[0],
                    n_out: w[1],
                    w: (0..w[0] * w[1]).map(|_| rng.random_range(-lim..lim)).collect(),
                    b: vec![0.0; w[1]],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Activations of every layer, input first.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let a = acts.last().unwrap();
            let out: Vec<f64> = (0..l.n_out)
                .map(|o| {
                    let s = l.b[o] + l.w[o * l.n_in..(o + 1) * l.n_in].iter().zip(a).map(|(w, v)| w * v).sum::<f64>();
                    if k == last {
                        s
                    } else {
                        sigmoid(s)
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_all(x).last().unwrap()[0]
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
    }

    /// Mean of `½(f(x) − y)²` over the rows and its gradient in `params` order.
    pub fn loss_and_gradient(&self, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self.layers.iter().map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()])).collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for (x, &y) in xs.iter().zip(ys) {
            let acts = self.forward_all(x);
            let err = acts[last + 1][0] - y;
            loss += 0.5 * err * err;
            let mut delta = vec![err];
            for k in (0..=last).rev() {
                let l = &self.layers[k];
                let a = &acts[k];
                let (gw, gb) = &mut grads[k];
                for o in 0..l.n_out {
                    gb[o] += delta[o];
                    for i in 0..l.n_in {
                        gw[o * l.n_in + i] += delta[o] * a[i];
                    }
                }
                if k > 0 {
                    // back through the sigmoid of the layer below
                    delta = (0..l.n_in)
                        .map(|i| {
                            let s: f64 = (0..l.n_out).map(|o| l.w[o * l.n_in + i] * delta[o]).sum();
                            s * a[i] * (1.0 - a[i])
                        })
                        .collect();
                }
            }
        }
        let m = ys.len().max(1) as f64;
        let g = grads.into_iter().flat_map(|(w, b)| w.into_iter().chain(b)).map(|v| v / m).collect();
        (loss / m, g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub x_scale: Standardizer,
    pub y_mean: f64,
    pub y_sd: f64,
    pub net: Mlp,
    /// Mean squared error on the standardized target after each epoch.
    pub training_loss: Vec<f64>,
}

pub fn mlp_fit(x: &[Vec<f64>], y: &[f64], config: &MlpConfig) -> Result<MlpModel> {
    if y.is_empty() {
        return Err(Error::EmptyTraining);
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(contract(format!("invalid network configuration {config:?}")));
    }
    let p = x[0].len();
    let mut sizes = vec![p.max(1)];
    sizes.extend(&config.hidden);
    sizes.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Mlp::random(&sizes, &mut rng)?;
    let x_scale = Standardizer::fit(&x.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
    let xs: Vec<Vec<f64>> = x
        .iter()
        .map(|r| if p == 0 { vec![0.0] } else { x_scale.apply(r) })
        .collect();
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
    let y_sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();

    let mut order: Vec<usize> = (0..ys.len()).collect();
    let mut params = net.params();
    let mut training_loss = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| xs[i].as_slice()).collect();
            let by: Vec<f64> = batch.iter().map(|&i| ys[i]).collect();
            let (l, g) = net.loss_and_gradient(&bx, &by);
            total += l * batch.len() as f64;
            for (w, gi) in params.iter_mut().zip(&g) {
                *w -= config.learning_rate * gi;
            }
            net.set_params(&params);
        }
        let mse = 2.0 * total / n;
        if !mse.is_finite() || mse > DIVERGENCE_LOSS {
            return Err(Error::Diverged(format!(
                "loss {mse:.3e} at epoch {epoch} (learning rate {}, {} epochs completed)",
                config.learning_rate,
                training_loss.len()
            )));
        }
        training_loss.push(mse);
    }
    Ok(MlpModel {
        config: config.clone(),
        x_scale,
        y_mean,
        y_sd,
        net,
        training_loss,
    })
}

impl MlpModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let xs = if x.is_empty() { vec![0.0] } else { self.x_scale.apply(x) };
        self.y_mean + self.y_sd * self.net.forward(&xs)
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_its_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::random(&[3, 5, 1], &mut rng).unwrap();
        let mut p = vec![0.0; net.n_params()];
        *p.last_mut().unwrap() = 0.7;
        net.set_params(&p);
        for x in [[0.0, 0.0, 0.0], [5.0, -3.0, 1.0]] {
            assert_eq!(net.forward(&x), 0.7);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for sizes in [vec![12, 8, 1], vec![4, 6, 3, 1]] {
            let net = Mlp::random(&sizes, &mut rng).unwrap();
            let mut net = Mlp {
                layers: net
                    .layers
                    .into_iter()
                    .map(|mut l| {
                        l.b.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
                        l
                    })
                    .collect(),
            };
            let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let ys: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let refs: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
            let (_, g) = net.loss_and_gradient(&refs, &ys);
            let p0 = net.params();
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for k in 0..p0.len() {
                let mut p = p0.clone();
                p[k] += h;
                net.set_params(&p);
                let up = net.loss_and_gradient(&refs, &ys).0;
                p[k] -= 2.0 * h;
                net.set_params(&p);
                let down = net.loss_and_gradient(&refs, &ys).0;
                let fd = (up - down) / (2.0 * h);
                let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
            net.set_params(&p0);
            assert!(worst < 1e-4, "{sizes:?}: {worst}");
        }
    }

    #[test]
    fn learns_linear_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.8 * r[0] - 0.5 * r[1] + 2.0).collect();
        let cfg = MlpConfig {
            hidden: vec![8],
            learning_rate: 0.1,
            ..Default::default()
        };
        let m = mlp_fit(&x, &y, &cfg).unwrap();
        let rmse = (x.iter().zip(&y).map(|(r, v)| (m.predict_row(r) - v).powi(2)).sum::<f64>() / 200.0).sqrt();
        assert!(rmse < 0.05, "{rmse}");
    }

    #[test]
    fn deterministic_under_seed() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let cfg = MlpConfig { epochs: 20, ..Default::default() };
        assert_eq!(mlp_fit(&x, &y, &cfg).unwrap(), mlp_fit(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn divergence_is_reported() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let cfg = MlpConfig {
            hidden: vec![4],
            learning_rate: 1e4,
            epochs: 50,
            batch_size: 40,
            seed: 0,
        };
        assert!(matches!(mlp_fit(&x, &y, &cfg), Err(Error::Diverged(_))));
    }
}
