//! Latent space-time field: exact Gaussian simulation on a node grid and
//! interpolation between nodes.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::gp::{covariance_matrix, GpParams};
use crate::linalg::cholesky_jitter;
use crate::models::linear::TrendCoefficients;
use crate::types::SpatioTemporalPoint;

/// Largest number of nodes simulated jointly.
pub const MAX_SIM_NODES: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldParams {
    pub sigma2: f64,
    pub range_s: f64,
    pub range_t: f64,
    /// Simulation nodes per day along x, y and time.
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            sigma2: 0.04,
            range_s: 600.0,
            range_t: 5400.0,
            nx: 12,
            ny: 12,
            nt: 18,
        }
    }
}

impl FieldParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0 && self.range_s > 0.0 && self.range_t > 0.0) || self.nx < 2 || self.ny < 2 || self.nt < 2 {
            return Err(contract(format!("invalid field parameters {self:?}")));
        }
        let nodes = self.nx * self.ny * self.nt;
        if nodes > MAX_SIM_NODES {
            return Err(Error::SceneTooLarge {
                nodes,
                limit: MAX_SIM_NODES,
            });
        }
        Ok(())
    }

    fn gp(&self) -> GpParams {
        GpParams {
            beta: TrendCoefficients { beta: vec![0.0] },
            sigma2: self.sigma2.max(1e-300),
            range_s: self.range_s,
            range_t: self.range_t,
            tau2: 0.0,
        }
    }
}

/// Node values of one day; index `(k·ny + j)·nx + i` for time k, row j, column i.
#[derive(Debug, Clone, PartialEq)]
pub struct DayField {
    pub t0: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthField {
    pub params: FieldParams,
    pub xmin: f64,
    pub ymin: f64,
    pub width: f64,
    pub height: f64,
    /// Time span covered by each day's grid, in seconds.
    pub span_t: f64,
    pub days: Vec<DayField>,
}

/// Bracketing node and weight of the upper node, for `v` in `[0, len]`.
fn bracket(v: f64, len: f64, n: usize) -> (usize, f64) {
    let u = v / len * (n - 1) as f64;
    let i = (u.floor() as usize).min(n - 2);
    (i, u - i as f64)
}

impl TruthField {
    pub fn node_point(&self, day: usize, i: usize, j: usize, k: usize) -> SpatioTemporalPoint {
        let p = &self.params;
        SpatioTemporalPoint::new(
            self.xmin + self.width * i as f64 / (p.nx - 1) as f64,
            self.ymin + self.height * j as f64 / (p.ny - 1) as f64,
            self.days[day].t0 + self.span_t * k as f64 / (p.nt - 1) as f64,
        )
    }

    pub fn node_value(&self, day: usize, i: usize, j: usize, k: usize) -> f64 {
        let p = &self.params;
        self.days[day].values[(k * p.ny + j) * p.nx + i]
    }

    /// Simulates every day independently on its own node grid.
    pub fn simulate(
        params: &FieldParams,
        extent: [f64; 4],
        day_starts: &[f64],
        span_t: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        params.validate()?;
        let [xmin, ymin, width, height] = extent;
        let mut field = TruthField {
            params: params.clone(),
            xmin,
            ymin,
            width,
            height,
            span_t,
            days: day_starts.iter().map(|&t0| DayField { t0, values: vec![] }).collect(),
        };
        let (nx, ny, nt) = (params.nx, params.ny, params.nt);
        for d in 0..day_starts.len() {
            let mut nodes = Vec::with_capacity(nx * ny * nt);
            for k in 0..nt {
                for j in 0..ny {
                    for i in 0..nx {
                        nodes.push(field.node_point(d, i, j, k));
                    }
                }
            }
            field.days[d].values = if params.sigma2 > 0.0 {
                draw(&nodes, &params.gp(), rng)?
            } else {
                vec![0.0; nodes.len()]
            };
        }
        Ok(field)
    }

    /// Field value: bilinear in space on the two bracketing time slices,
    /// linear in between. `None` outside the simulated domain and days.
    pub fn value_at(&self, p: &SpatioTemporalPoint) -> Option<f64> {
        let (dx, dy) = (p.x - self.xmin, p.y - self.ymin);
        if !(0.0..=self.width).contains(&dx) || !(0.0..=self.height).contains(&dy) {
            return None;
        }
        let day = self.days.iter().position(|d| (d.t0..=d.t0 + self.span_t).contains(&p.t))?;
        let pr = &self.params;
        let (i, wx) = bracket(dx, self.width, pr.nx);
        let (j, wy) = bracket(dy, self.height, pr.ny);
        let (k, wt) = bracket(p.t - self.days[day].t0, self.span_t, pr.nt);
        let slice = |k: usize| {
            let v = |a: usize, b: usize| self.node_value(day, a, b, k);
            (1.0 - wy) * ((1.0 - wx) * v(i, j) + wx * v(i + 1, j)) + wy * ((1.0 - wx) * v(i, j + 1) + wx * v(i + 1, j + 1))
        };
        Some(if wt == 0.0 { slice(k) } else { (1.0 - wt) * slice(k) + wt * slice(k + 1) })
    }
}

fn draw(points: &[SpatioTemporalPoint], params: &GpParams, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let k = covariance_matrix(points, params, false);
    let (chol, _) = cholesky_jitter(k, params.sigma2)?;
    let e = DVector::from_iterator(points.len(), (0..points.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok((chol.l() * e).iter().copied().collect())
}

/// Zero-mean latent field with the covariance of `params` (nugget
/// excluded), drawn exactly at `points`.
pub fn simulate_field(points: &[SpatioTemporalPoint], params: &GpParams, seed: u64) -> Result<Vec<f64>> {
    if points.len() > MAX_SIM_NODES {
        return Err(Error::SceneTooLarge {
            nodes: points.len(),
            limit: MAX_SIM_NODES,
        });
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw(points, params, &mut rng)
}
