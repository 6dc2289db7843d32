//! L2-regularized logistic regression trained by deterministic full-batch
//! gradient descent.
//!
//! Objective over the active features `A`:
//!
//! ```text
//! J(w, b) = mean_i log(1 + exp(-(2y_i - 1)(w.x_i + b))) + lambda/2 * |w|^2
//! ```
//!
//! Descent starts at zero with step `1/L`, where `L` bounds the Hessian
//! (`0.25 * mean|(x_i, 1)|^2 + lambda`), and stops once every gradient
//! component is below the tolerance or after the iteration budget.
//!
//! Two numerically equivalent routes are provided. The primal route updates
//! `w` directly. The dual route keeps `w = X_A^T a`, which holds for every
//! iterate because the descent starts at zero; it iterates on the `n x n` Gram
//! matrix and is much cheaper when there are fewer examples than features.

use super::{ActiveSet, ClassifierState, WindowBatch};

/// Which representation the descent runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    /// Dual when examples are fewer than active features, primal otherwise.
    #[default]
    Auto,
    Primal,
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub lambda: f64,
    pub max_iter: usize,
    /// Convergence threshold on the gradient's infinity norm.
    pub tolerance: f64,
    pub solver: Solver,
}

impl LogisticConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            max_iter: 500,
            tolerance: 1e-6,
            solver: Solver::Auto,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub state: ClassifierState,
    pub accuracy: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Dot product with four independent accumulators (fixed order, so results
/// are reproducible across runs).
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..n {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fraction of examples whose hard prediction (`score > 0` means abnormal,
/// a score of exactly zero means normal) matches the label.
pub(crate) fn accuracy(scores: &[f64], labels: &[bool]) -> f64 {
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| (s > 0.0) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Trainer bound to one batch; reused across the unmasking loops so the Gram
/// matrix is built once and only downdated as features are eliminated.
pub struct Trainer<'a> {
    batch: &'a WindowBatch,
    config: LogisticConfig,
    gram: Option<Vec<f64>>,
    targets: Vec<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(batch: &'a WindowBatch, config: LogisticConfig) -> Self {
        let targets = batch
            .labels()
            .iter()
            .map(|&y| if y { 1.0 } else { 0.0 })
            .collect();
        Self {
            batch,
            config,
            gram: None,
            targets,
        }
    }

    fn use_dual(&self, active: &ActiveSet) -> bool {
        match self.config.solver {
            Solver::Primal => false,
            Solver::Dual => true,
            Solver::Auto => self.gram.is_some() || self.batch.len() < active.len(),
        }
    }

    fn build_gram(&self, active: &ActiveSet) -> Vec<f64> {
        let n = self.batch.len();
        let mut gram = vec![0.0; n * n];
        let full = active.len() == self.batch.dim();
        let mut ri = vec![0.0; if full { 0 } else { self.batch.dim() }];
        let mut rj = ri.clone();
        for i in 0..n {
            for j in 0..=i {
                let v = if full {
                    dot(self.batch.row(i), self.batch.row(j))
                } else {
                    masked(self.batch.row(i), active, &mut ri);
                    masked(self.batch.row(j), active, &mut rj);
                    dot(&ri, &rj)
                };
                gram[i * n + j] = v;
                gram[j * n + i] = v;
            }
        }
        gram
    }

    /// Removes the contribution of `removed` features from the Gram matrix.
    pub fn downdate(&mut self, removed: &[usize]) {
        let Some(gram) = self.gram.as_mut() else {
            return;
        };
        let n = self.batch.len();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let row = self.batch.row(i);
                removed.iter().map(|&f| row[f]).collect()
            })
            .collect();
        for i in 0..n {
            for j in 0..=i {
                let v = gram[i * n + j] - dot(&cols[i], &cols[j]);
                gram[i * n + j] = v;
                gram[j * n + i] = v;
            }
        }
    }

    /// Trains on `active` from a zero start. The active set must be nonempty
    /// and both classes present (checked by the caller).
    pub fn fit(&mut self, active: &ActiveSet) -> Fit {
        if self.use_dual(active) {
            if self.gram.is_none() {
                self.gram = Some(self.build_gram(active));
            }
            self.fit_dual(active)
        } else {
            self.fit_primal(active)
        }
    }

    fn step_size(&self, mean_sq_norm: f64) -> f64 {
        1.0 / (0.25 * (mean_sq_norm + 1.0) + self.config.lambda)
    }

    fn fit_primal(&self, active: &ActiveSet) -> Fit {
        let batch = self.batch;
        let (n, d) = (batch.len(), batch.dim());
        let lambda = self.config.lambda;
        let inv_n = 1.0 / n as f64;
        let mut row_buf = vec![0.0; d];
        let mean_sq = (0..n)
            .map(|i| {
                masked(batch.row(i), active, &mut row_buf);
                dot(&row_buf, &row_buf)
            })
            .sum::<f64>()
            * inv_n;
        let eta = self.step_size(mean_sq);

        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut scores = vec![0.0; n];
        let mut resid = vec![0.0; n];
        let mut grad = vec![0.0; d];
        let mut iterations = 0;
        let mut converged = false;
        loop {
            for (i, (s, r)) in scores.iter_mut().zip(resid.iter_mut()).enumerate() {
                *s = dot(batch.row(i), &w) + b;
                *r = sigmoid(*s) - self.targets[i];
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (i, r) in resid.iter().enumerate() {
                axpy(r * inv_n, batch.row(i), &mut grad);
            }
            let grad_b = resid.iter().sum::<f64>() * inv_n;
            let mut gmax = grad_b.abs();
            for (j, g) in grad.iter_mut().enumerate() {
                if active.contains(j) {
                    *g += lambda * w[j];
                    gmax = gmax.max(g.abs());
                } else {
                    *g = 0.0;
                }
            }
            if gmax < self.config.tolerance {
                converged = true;
                break;
            }
            if iterations == self.config.max_iter {
                break;
            }
            axpy(-eta, &grad, &mut w);
            b -= eta * grad_b;
            iterations += 1;
        }
        Fit {
            accuracy: accuracy(&scores, batch.labels()),
            state: ClassifierState {
                weights: w,
                bias: b,
                active: active.clone(),
            },
            iterations,
            converged,
        }
    }

    fn fit_dual(&self, active: &ActiveSet) -> Fit {
        let batch = self.batch;
        let gram = self.gram.as_deref().expect("gram built before dual fit");
        let n = batch.len();
        let lambda = self.config.lambda;
        let inv_n = 1.0 / n as f64;
        let mean_sq = (0..n).map(|i| gram[i * n + i]).sum::<f64>() * inv_n;
        let eta = self.step_size(mean_sq);
        let sqrt_active = (active.len() as f64).sqrt();
        let tol = self.config.tolerance;

        let mut a = vec![0.0; n];
        let mut b = 0.0;
        let mut scores = vec![0.0; n];
        let mut coef = vec![0.0; n];
        let mut iterations = 0;
        let mut converged = false;
        loop {
            for i in 0..n {
                scores[i] = dot(&gram[i * n..(i + 1) * n], &a) + b;
            }
            let mut sum_r = 0.0;
            for i in 0..n {
                let r = sigmoid(scores[i]) - self.targets[i];
                sum_r += r;
                coef[i] = r * inv_n + lambda * a[i];
            }
            let grad_b = sum_r * inv_n;
            // |g_w|_2^2 = coef' K coef; |g|_inf lies in [|g|_2 / sqrt(|A|), |g|_2]
            if grad_b.abs() < tol {
                let norm2 = (0..n)
                    .map(|i| coef[i] * dot(&gram[i * n..(i + 1) * n], &coef))
                    .sum::<f64>()
                    .max(0.0)
                    .sqrt();
                if norm2 < tol
                    || (norm2 < tol * sqrt_active && self.primal_grad_max(active, &coef) < tol)
                {
                    converged = true;
                    break;
                }
            }
            if iterations == self.config.max_iter {
                break;
            }
            axpy(-eta, &coef, &mut a);
            b -= eta * grad_b;
            iterations += 1;
        }
        let mut weights = vec![0.0; batch.dim()];
        for (i, &ai) in a.iter().enumerate() {
            axpy(ai, batch.row(i), &mut weights);
        }
        for (j, wj) in weights.iter_mut().enumerate() {
            if !active.contains(j) {
                *wj = 0.0;
            }
        }
        Fit {
            accuracy: accuracy(&scores, batch.labels()),
            state: ClassifierState {
                weights,
                bias: b,
                active: active.clone(),
            },
            iterations,
            converged,
        }
    }

    fn primal_grad_max(&self, active: &ActiveSet, coef: &[f64]) -> f64 {
        let mut g = vec![0.0; self.batch.dim()];
        for (i, &c) in coef.iter().enumerate() {
            axpy(c, self.batch.row(i), &mut g);
        }
        active.indices().iter().map(|&j| g[j].abs()).fold(0.0, f64::max)
    }
}

fn masked(row: &[f64], active: &ActiveSet, out: &mut [f64]) {
    for (j, (o, &v)) in out.iter_mut().zip(row).enumerate() {
        *o = if active.contains(j) { v } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Channel;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }

    #[test]
    fn tie_rule_predicts_normal() {
        assert_eq!(accuracy(&[0.0, 0.0], &[false, true]), 0.5);
        assert_eq!(accuracy(&[-1.0, 1e-300], &[false, true]), 1.0);
    }

    #[test]
    fn primal_and_dual_agree() {
        let mut batch = WindowBatch::new(0, 0, Channel::Motion, 6);
        let rows = [
            ([0.9, 0.1, 0.3, 0.0, 0.2, 0.1], false),
            ([0.8, 0.2, 0.1, 0.1, 0.0, 0.3], false),
            ([0.7, 0.0, 0.4, 0.2, 0.1, 0.2], false),
            ([0.1, 0.9, 0.2, 0.3, 0.1, 0.0], true),
            ([0.2, 0.7, 0.0, 0.5, 0.3, 0.1], true),
        ];
        for (x, y) in rows {
            batch.push(&x, y).unwrap();
        }
        let mut active = ActiveSet::full(6);
        active.remove(&[2]);
        for lambda in [0.1, 1.0, 0.01] {
            let cfg = |solver| LogisticConfig {
                lambda,
                solver,
                ..LogisticConfig::default()
            };
            let p = Trainer::new(&batch, cfg(Solver::Primal)).fit(&active);
            let mut dual = Trainer::new(&batch, cfg(Solver::Dual));
            let d = dual.fit(&active);
            assert_eq!(p.accuracy, d.accuracy);
            assert!((p.state.bias - d.state.bias).abs() < 1e-9);
            for (a, b) in p.state.weights.iter().zip(&d.state.weights) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            assert_eq!(d.state.weights[2], 0.0);
            assert_eq!(p.state.weights[2], 0.0);
        }
    }

    #[test]
    fn downdate_matches_rebuild() {
        let mut batch = WindowBatch::new(0, 0, Channel::Motion, 5);
        for i in 0..4 {
            let x: Vec<f64> = (0..5).map(|j| ((i * 7 + j * 3) % 5) as f64 * 0.1).collect();
            batch.push(&x, i % 2 == 1).unwrap();
        }
        let cfg = LogisticConfig {
            solver: Solver::Dual,
            ..LogisticConfig::default()
        };
        let mut t = Trainer::new(&batch, cfg);
        let mut active = ActiveSet::full(5);
        t.fit(&active);
        active.remove(&[1, 3]);
        t.downdate(&[1, 3]);
        let rebuilt = Trainer::new(&batch, cfg).build_gram(&active);
        for (a, b) in t.gram.as_ref().unwrap().iter().zip(&rebuilt) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
