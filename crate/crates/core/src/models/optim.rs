use super::Optimizer;

/// First-order update rule over a flat parameter vector.
pub(crate) struct Stepper {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Stepper {
    pub fn new(kind: Optimizer, lr: f64, len: usize) -> Self {
        let (m, v) = match kind {
            Optimizer::Adam => (vec![0.0; len], vec![0.0; len]),
            Optimizer::Sgd => (Vec::new(), Vec::new()),
        };
        Stepper { kind, lr, m, v, t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam => {
                self.t += 1;
                let c1 = 1.0 - BETA1.powi(self.t);
                let c2 = 1.0 - BETA2.powi(self.t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
                    let mhat = self.m[i] / c1;
                    let vhat = self.v[i] / c2;
                    params[i] -= self.lr * mhat / (vhat.sqrt() + EPS);
                }
            }
        }
    }
}
