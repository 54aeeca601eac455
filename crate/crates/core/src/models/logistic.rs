//! L2-regularized logistic regression trained by mini-batch descent.

use rand::seq::SliceRandom;

use super::optim::Stepper;
use super::{logit_cross_entropy, rng, sigmoid, ModelSpec};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticParams {
    pub fn zeros(width: usize) -> Self {
        LogisticParams {
            weights: vec![0.0; width],
            bias: 0.0,
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(x)
                .filter(|(_, &v)| v != 0.0)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Weights followed by the bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.bias);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        let (w, b) = flat.split_at(flat.len() - 1);
        LogisticParams {
            weights: w.to_vec(),
            bias: b[0],
        }
    }
}

/// Weighted mean cross-entropy over `rows` plus `l2/2 * |w|^2`, and its
/// gradient in flat layout (weights, then bias).
pub fn loss_and_gradient(
    params: &LogisticParams,
    x: &Matrix,
    y: &[bool],
    sample_weight: &[f64],
    rows: &[usize],
    l2: f64,
) -> (f64, Vec<f64>) {
    let d = params.weights.len();
    let mut grad = vec![0.0; d + 1];
    let total: f64 = rows.iter().map(|&i| sample_weight[i]).sum();
    let mut loss = 0.0;
    for &i in rows {
        let row = x.row(i);
        let z = params.logit(row);
        let sw = sample_weight[i] / total;
        loss += sw * logit_cross_entropy(z, y[i]);
        let err = sw * (sigmoid(z) - if y[i] { 1.0 } else { 0.0 });
        for (g, &v) in grad[..d].iter_mut().zip(row) {
            if v != 0.0 {
                *g += err * v;
            }
        }
        grad[d] += err;
    }
    for (g, w) in grad[..d].iter_mut().zip(&params.weights) {
        *g += l2 * w;
    }
    loss += 0.5 * l2 * params.weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad)
}

/// Nonzero `(column, value)` pairs of each row.
fn sparse_rows(x: &Matrix) -> Vec<Vec<(usize, f64)>> {
    x.iter_rows()
        .map(|r| {
            r.iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect()
        })
        .collect()
}

/// Same objective as [`loss_and_gradient`], iterating feature vectors sparsely.
pub(crate) fn fit(x: &Matrix, y: &[bool], sample_weight: &[f64], spec: &ModelSpec) -> LogisticParams {
    let d = x.cols();
    let sparse = sparse_rows(x);
    let mut flat = vec![0.0; d + 1];
    let mut grad = vec![0.0; d + 1];
    let mut stepper = Stepper::new(spec.optimizer, spec.learning_rate, flat.len());
    let mut rng = rng(spec.seed);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for _ in 0..spec.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(spec.batch_size) {
            grad.fill(0.0);
            let total: f64 = batch.iter().map(|&i| sample_weight[i]).sum();
            for &i in batch {
                let z = flat[d] + sparse[i].iter().map(|&(j, v)| flat[j] * v).sum::<f64>();
                let err = sample_weight[i] / total * (sigmoid(z) - if y[i] { 1.0 } else { 0.0 });
                for &(j, v) in &sparse[i] {
                    grad[j] += err * v;
                }
                grad[d] += err;
            }
            for (g, w) in grad[..d].iter_mut().zip(&flat[..d]) {
                *g += spec.l2 * w;
            }
            stepper.step(&mut flat, &grad);
        }
    }
    LogisticParams::from_flat(&flat)
}
