//! Synthetic training problems whose trainable parameters are all matrices.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kl_analysis::SpikedModel;
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    /// Fit `W` (`m × n`) to minimize `½‖XW − Y‖_F² / samples`.
    MatrixRegression { m: usize, n: usize, samples: usize },
    /// `tanh` hidden layer and softmax cross-entropy against a random linear
    /// teacher; parameters `W₁` (`input × hidden`) and `W₂` (`hidden × classes`).
    TwoLayerMlp {
        input: usize,
        hidden: usize,
        classes: usize,
        samples: usize,
    },
    /// Gradients drawn from a spiked model; the reported loss is the linear
    /// surrogate `⟨A Bᵀ, W⟩`.
    SyntheticGradient {
        m: usize,
        n: usize,
        rho: usize,
        signal_scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    #[serde(flatten)]
    pub kind: TaskKind,
    /// Label noise for regression, gradient noise `σ` for the synthetic task.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// A task instantiated with its data.
#[derive(Debug, Clone)]
pub enum Problem {
    Regression { x: Mat, y: Mat },
    Mlp { x: Mat, labels: Vec<usize>, classes: usize },
    Synthetic(SpikedModel),
}

impl Task {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            TaskKind::MatrixRegression { m, n, samples } => m > 0 && n > 0 && samples > 0,
            TaskKind::TwoLayerMlp {
                input,
                hidden,
                classes,
                samples,
            } => input > 0 && hidden > 0 && classes > 1 && samples > 0,
            TaskKind::SyntheticGradient { m, n, rho, .. } => rho < m.min(n),
        };
        if !ok || !(self.noise >= 0.0) {
            return Err(Error::Config(format!("invalid task {self:?}")));
        }
        Ok(())
    }

    /// Data and initial parameters, both determined by `seed`.
    pub fn instantiate(&self) -> Result<(Problem, Vec<Mat>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(match self.kind {
            TaskKind::MatrixRegression { m, n, samples } => {
                let x = randn(samples, m, &mut rng);
                let w_star = randn(m, n, &mut rng);
                let y = &x * w_star + randn(samples, n, &mut rng) * self.noise;
                (Problem::Regression { x, y }, vec![Mat::zeros(m, n)])
            }
            TaskKind::TwoLayerMlp {
                input,
                hidden,
                classes,
                samples,
            } => {
                let x = randn(samples, input, &mut rng);
                let teacher = randn(input, classes, &mut rng);
                let scores = &x * teacher + randn(samples, classes, &mut rng) * self.noise;
                let labels = (0..samples).map(|i| scores.row(i).transpose().argmax().0).collect();
                let w1 = randn(input, hidden, &mut rng) / (input as f64).sqrt();
                let w2 = randn(hidden, classes, &mut rng) / (hidden as f64).sqrt();
                (Problem::Mlp { x, labels, classes }, vec![w1, w2])
            }
            TaskKind::SyntheticGradient {
                m,
                n,
                rho,
                signal_scale,
            } => {
                let sigma = if self.noise > 0.0 { self.noise } else { 1.0 };
                let model = SpikedModel::random(m, n, rho, signal_scale, sigma, &mut rng)?;
                (Problem::Synthetic(model), vec![Mat::zeros(m, n)])
            }
        })
    }
}

impl Problem {
    /// Data rows; `0` for the synthetic task.
    pub fn num_rows(&self) -> usize {
        match self {
            Problem::Regression { x, .. } | Problem::Mlp { x, .. } => x.nrows(),
            Problem::Synthetic(_) => 0,
        }
    }

    /// Row indices of a minibatch (`batch = 0` or `≥ rows` means all rows,
    /// in order).
    pub fn minibatch(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let rows = self.num_rows();
        if batch == 0 || batch >= rows {
            (0..rows).collect()
        } else {
            let mut idx = sample(rng, rows, batch).into_vec();
            idx.sort_unstable();
            idx
        }
    }

    /// Full-data loss.
    pub fn loss(&self, params: &[Mat]) -> f64 {
        match self {
            Problem::Synthetic(model) => model.mean().dot(&params[0]),
            _ => {
                let all: Vec<usize> = (0..self.num_rows()).collect();
                self.loss_and_grads(params, &all, None).0
            }
        }
    }

    /// Loss and gradients on the given rows. The synthetic task ignores
    /// `rows` and draws its gradient from `rng`.
    pub fn loss_and_grads(
        &self,
        params: &[Mat],
        rows: &[usize],
        rng: Option<&mut ChaCha8Rng>,
    ) -> (f64, Vec<Mat>) {
        match self {
            Problem::Regression { x, y } => {
                let xb = x.select_rows(rows);
                let yb = y.select_rows(rows);
                let k = rows.len() as f64;
                let resid = &xb * &params[0] - yb;
                let loss = 0.5 * resid.norm_squared() / k;
                (loss, vec![xb.transpose() * resid / k])
            }
            Problem::Mlp { x, labels, classes } => {
                let xb = x.select_rows(rows);
                let k = rows.len() as f64;
                let h = (&xb * &params[0]).map(f64::tanh);
                let logits = &h * &params[1];
                let mut dlogits = Mat::zeros(rows.len(), *classes);
                let mut loss = 0.0;
                for (i, &row) in rows.iter().enumerate() {
                    let z = logits.row(i);
                    let zmax = z.max();
                    let denom: f64 = z.iter().map(|v| (v - zmax).exp()).sum();
                    loss += denom.ln() + zmax - z[labels[row]];
                    for c in 0..*classes {
                        dlogits[(i, c)] = (z[c] - zmax).exp() / denom / k;
                    }
                    dlogits[(i, labels[row])] -= 1.0 / k;
                }
                let g2 = h.transpose() * &dlogits;
                let dh = (&dlogits * params[1].transpose()).component_mul(&h.map(|v| 1.0 - v * v));
                (loss / k, vec![xb.transpose() * dh, g2])
            }
            Problem::Synthetic(model) => {
                let rng = rng.expect("synthetic gradients need a sampling stream");
                (self.loss(params), vec![model.sample(rng)])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_difference(problem: &Problem, params: &[Mat], p: usize, i: usize, j: usize) -> f64 {
        let h = 1e-6;
        let mut plus = params.to_vec();
        plus[p][(i, j)] += h;
        let mut minus = params.to_vec();
        minus[p][(i, j)] -= h;
        (problem.loss(&plus) - problem.loss(&minus)) / (2.0 * h)
    }

    #[test]
    fn regression_gradient() {
        let task = Task {
            kind: TaskKind::MatrixRegression { m: 3, n: 4, samples: 10 },
            noise: 0.1,
            seed: 1,
        };
        let (problem, mut params) = task.instantiate().unwrap();
        params[0] = Mat::from_fn(3, 4, |i, j| (i as f64) - 0.5 * j as f64);
        let all: Vec<usize> = (0..10).collect();
        let (_, g) = problem.loss_and_grads(&params, &all, None);
        for (i, j) in [(0, 0), (2, 3), (1, 2)] {
            assert!((g[0][(i, j)] - finite_difference(&problem, &params, 0, i, j)).abs() < 1e-6);
        }
    }

    #[test]
    fn mlp_gradient() {
        let task = Task {
            kind: TaskKind::TwoLayerMlp {
                input: 4,
                hidden: 5,
                classes: 3,
                samples: 12,
            },
            noise: 0.0,
            seed: 2,
        };
        let (problem, params) = task.instantiate().unwrap();
        let all: Vec<usize> = (0..12).collect();
        let (loss, g) = problem.loss_and_grads(&params, &all, None);
        assert!((loss - problem.loss(&params)).abs() < 1e-14);
        for (p, i, j) in [(0, 0, 0), (0, 3, 4), (1, 2, 1), (1, 4, 2)] {
            let fd = finite_difference(&problem, &params, p, i, j);
            assert!((g[p][(i, j)] - fd).abs() < 1e-6, "{p} {i} {j}: {} vs {fd}", g[p][(i, j)]);
        }
    }

    #[test]
    fn deterministic_and_minibatch() {
        let task = Task {
            kind: TaskKind::MatrixRegression { m: 2, n: 2, samples: 8 },
            noise: 0.0,
            seed: 3,
        };
        let (a, _) = task.instantiate().unwrap();
        let (b, _) = task.instantiate().unwrap();
        let p = vec![Mat::identity(2, 2)];
        assert_eq!(a.loss(&p), b.loss(&p));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rows = a.minibatch(3, &mut rng);
        assert_eq!(rows.len(), 3);
        assert!(rows.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a.minibatch(0, &mut rng), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_tasks() {
        let task = Task {
            kind: TaskKind::SyntheticGradient {
                m: 3,
                n: 3,
                rho: 3,
                signal_scale: 1.0,
            },
            noise: 1.0,
            seed: 0,
        };
        assert!(task.instantiate().is_err());
    }
}
