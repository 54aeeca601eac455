//! Fully connected network with tanh hidden layers and a sigmoid output.
//!
//! Parameters live in one flat vector. Each layer stores its weights as an
//! `inputs x outputs` row-major block followed by `outputs` biases, so a
//! nonzero input touches one contiguous weight row.

use rand::seq::SliceRandom;
use rand::Rng;

use super::optim::Stepper;
use super::{logit_cross_entropy, rng, sigmoid, ModelSpec};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// Layer widths from input to the single output unit.
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl Network {
    /// Glorot-uniform weights and zero biases.
    pub fn init(input: usize, hidden: &[usize], seed: u64) -> Network {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut net = Network {
            params: vec![0.0; param_count(&sizes)],
            sizes,
        };
        let mut rng = rng(seed);
        for l in 0..net.layers() {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w, _) = net.layer_range(l);
            for p in &mut net.params[w] {
                *p = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Option<Network> {
        (sizes.len() >= 2 && sizes.last() == Some(&1) && params.len() == param_count(&sizes))
            .then_some(Network { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Ranges of layer `l`'s weights and biases in the flat vector.
    fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start: usize = (0..l)
            .map(|k| self.sizes[k] * self.sizes[k + 1] + self.sizes[k + 1])
            .sum();
        let w_end = start + self.sizes[l] * self.sizes[l + 1];
        (start..w_end, w_end..w_end + self.sizes[l + 1])
    }

    /// Activations per layer (input layer excluded); the last holds the logit.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers());
        for l in 0..self.layers() {
            let (wr, br) = self.layer_range(l);
            let out = self.sizes[l + 1];
            let w = &self.params[wr];
            let mut z = self.params[br].to_vec();
            let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
            for (k, &v) in input.iter().enumerate() {
                if v != 0.0 {
                    for (zj, wkj) in z.iter_mut().zip(&w[k * out..(k + 1) * out]) {
                        *zj += v * wkj;
                    }
                }
            }
            if l + 1 < self.layers() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.forward(x).last().unwrap()[0]
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Weighted mean cross-entropy over `rows` plus `l2/2` times the squared
    /// norm of all weights (biases excluded), with its gradient in the flat
    /// parameter layout.
    pub fn loss_and_gradient(
        &self,
        x: &Matrix,
        y: &[bool],
        sample_weight: &[f64],
        rows: &[usize],
        l2: f64,
    ) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let total: f64 = rows.iter().map(|&i| sample_weight[i]).sum();
        let mut loss = 0.0;
        let layers = self.layers();
        for &i in rows {
            let xi = x.row(i);
            let acts = self.forward(xi);
            let z = acts[layers - 1][0];
            let sw = sample_weight[i] / total;
            loss += sw * logit_cross_entropy(z, y[i]);
            let mut delta = vec![sw * (sigmoid(z) - if y[i] { 1.0 } else { 0.0 })];
            for l in (0..layers).rev() {
                let (wr, br) = self.layer_range(l);
                let out = self.sizes[l + 1];
                let input: &[f64] = if l == 0 { xi } else { &acts[l - 1] };
                {
                    let gw = &mut grad[wr.clone()];
                    for (k, &v) in input.iter().enumerate() {
                        if v != 0.0 {
                            for (g, d) in gw[k * out..(k + 1) * out].iter_mut().zip(&delta) {
                                *g += v * d;
                            }
                        }
                    }
                }
                for (g, d) in grad[br].iter_mut().zip(&delta) {
                    *g += d;
                }
                if l == 0 {
                    break;
                }
                let w = &self.params[wr];
                let prev = &acts[l - 1];
                delta = (0..self.sizes[l])
                    .map(|k| {
                        let back: f64 = w[k * out..(k + 1) * out].iter().zip(&delta).map(|(a, b)| a * b).sum();
                        back * (1.0 - prev[k] * prev[k])
                    })
                    .collect();
            }
        }
        for l in 0..layers {
            let (wr, _) = self.layer_range(l);
            for j in wr {
                let w = self.params[j];
                grad[j] += l2 * w;
                loss += 0.5 * l2 * w * w;
            }
        }
        (loss, grad)
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

pub(crate) fn fit(x: &Matrix, y: &[bool], sample_weight: &[f64], spec: &ModelSpec) -> Network {
    let mut net = Network::init(x.cols(), &spec.hidden, spec.seed);
    let mut stepper = Stepper::new(spec.optimizer, spec.learning_rate, net.params.len());
    let mut rng = rng(spec.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for _ in 0..spec.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(spec.batch_size) {
            let (_, grad) = net.loss_and_gradient(x, y, sample_weight, batch, spec.l2);
            stepper.step(&mut net.params, &grad);
        }
    }
    net
}
