//! Bounded Nelder-Mead minimizer used by the covariance-parameter fits.

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop when the spread of simplex function values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            f_tol: 1e-10,
            x_tol: 1e-7,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub trace: Vec<f64>,
}

fn clamp(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

impl NelderMead {
    /// Minimizes `f` over the box `bounds`, starting from `x0`.
    /// Non-finite objective values are treated as +∞.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], bounds: &[(f64, f64)]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        assert_eq!(bounds.len(), n);
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut start = x0.to_vec();
        clamp(&mut start, bounds);
        let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
        for i in 0..n {
            let mut v = start.clone();
            let width = bounds[i].1 - bounds[i].0;
            let mut step = self.initial_step.min(0.5 * width.max(0.0));
            if step == 0.0 {
                step = self.initial_step;
            }
            v[i] += step;
            if v[i] > bounds[i].1 {
                v[i] = start[i] - step;
            }
            clamp(&mut v, bounds);
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();
        let mut trace = Vec::new();
        let mut converged = false;

        while evals < self.max_evals {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();
            trace.push(values[0]);

            let spread = (values[n] - values[0]).abs();
            let diam = simplex
                .iter()
                .skip(1)
                .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if (values[0].is_finite() && spread <= self.f_tol * (1.0 + values[0].abs())) || diam <= self.x_tol {
                converged = values[0].is_finite();
                break;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect();
                clamp(&mut p, bounds);
                p
            };

            let xr = along(1.0);
            let fr = eval(&xr, &mut evals);
            if fr < values[0] {
                let xe = along(2.0);
                let fe = eval(&xe, &mut evals);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < values[n] {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
            // shrink toward the best vertex
            for i in 1..=n {
                let v: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, x)| b + 0.5 * (x - b)).collect();
                values[i] = eval(&v, &mut evals);
                simplex[i] = v;
            }
        }

        let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
        Minimum {
            x: simplex[best].clone(),
            f: values[best],
            evals,
            converged,
            trace,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let nm = NelderMead {
            max_evals: 5000,
            ..Default::default()
        };
        let r = nm.minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[(-5.0, 5.0), (-5.0, 5.0)],
        );
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn respects_bounds() {
        let r = NelderMead::default().minimize(|x| (x[0] - 10.0).powi(2), &[0.0], &[(-1.0, 2.0)]);
        assert!((r.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn trace_is_non_increasing() {
        let r = NelderMead::default().minimize(|x| x[0].powi(2) + (x[1] + 1.0).powi(4), &[3.0, 3.0], &[(-9.0, 9.0), (-9.0, 9.0)]);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
