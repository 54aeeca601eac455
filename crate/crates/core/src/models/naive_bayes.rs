//! Bernoulli naive Bayes over binarized features.

use super::sigmoid;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesParams {
    /// Log prior of the negative and positive class.
    pub log_prior: [f64; 2],
    /// Per class, `ln P(x_j > 0 | c)`.
    pub log_on: [Vec<f64>; 2],
    /// Per class, `ln P(x_j == 0 | c)`.
    pub log_off: [Vec<f64>; 2],
}

impl NaiveBayesParams {
    pub fn log_odds(&self, x: &[f64]) -> f64 {
        let mut lp = self.log_prior;
        for (c, slot) in lp.iter_mut().enumerate() {
            for (j, &v) in x.iter().enumerate() {
                *slot += if v > 0.0 { self.log_on[c][j] } else { self.log_off[c][j] };
            }
        }
        lp[1] - lp[0]
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.log_odds(x))
    }
}

pub(crate) fn fit(x: &Matrix, y: &[bool], sample_weight: &[f64], alpha: f64) -> NaiveBayesParams {
    let d = x.cols();
    let mut mass = [0.0f64; 2];
    let mut on = [vec![0.0f64; d], vec![0.0f64; d]];
    for ((row, &t), &w) in x.iter_rows().zip(y).zip(sample_weight) {
        let c = t as usize;
        mass[c] += w;
        for (j, &v) in row.iter().enumerate() {
            if v > 0.0 {
                on[c][j] += w;
            }
        }
    }
    let total = mass[0] + mass[1];
    let mut log_on = [vec![0.0; d], vec![0.0; d]];
    let mut log_off = [vec![0.0; d], vec![0.0; d]];
    for c in 0..2 {
        for j in 0..d {
            let p = (on[c][j] + alpha) / (mass[c] + 2.0 * alpha);
            log_on[c][j] = p.ln();
            log_off[c][j] = (1.0 - p).ln();
        }
    }
    NaiveBayesParams {
        log_prior: [(mass[0] / total).ln(), (mass[1] / total).ln()],
        log_on,
        log_off,
    }
}
