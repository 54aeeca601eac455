//! Per-tag binary classifiers and the tag stack that parses branches online.

mod bundle;
pub mod feedforward;
pub mod logistic;
mod naive_bayes;
mod optim;
mod stack;
mod tree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bundle::{load_bundle, save_bundle, BundleError, BUNDLE_MAGIC};
pub use feedforward::Network;
pub use logistic::LogisticParams;
pub use naive_bayes::NaiveBayesParams;
pub use stack::{
    parse_branch, parse_posts, predict_tree, predict_tree_with, train_stack, ContextMode, LabelContext, PathPost,
    StackMetadata, StackSpec, TagStack,
};
pub use tree::{DecisionTree, TreeNode};

use crate::features::FeatureError;
use crate::matrix::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("input width {found} does not match model width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("{examples} examples but {targets} targets")]
    LengthMismatch { examples: usize, targets: usize },
    #[error("no training examples")]
    Empty,
    #[error("branch is not a root-to-leaf path: {0}")]
    BadBranch(String),
    #[error("gold context requested but node `{0}` is unlabeled")]
    MissingGold(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    NaiveBayes,
    DecisionTree,
    FeedForward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// Classifier choice and hyperparameters. Unused fields are ignored by
/// kinds they do not apply to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub learning_rate: f64,
    /// L2 strength on weights (biases are not penalized).
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// Hidden layer widths of the feed-forward network.
    pub hidden: Vec<usize>,
    /// Additive smoothing for naive Bayes.
    pub alpha: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Decision threshold on the positive score.
    pub threshold: f64,
    /// Weight examples by inverse class frequency.
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::LogisticRegression,
            learning_rate: 0.05,
            l2: 1e-4,
            epochs: 40,
            batch_size: 32,
            optimizer: Optimizer::Adam,
            hidden: vec![64, 32, 16],
            alpha: 1.0,
            max_depth: 10,
            min_leaf: 2,
            threshold: 0.5,
            class_weighting: false,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn of_kind(kind: ModelKind) -> Self {
        let mut spec = ModelSpec {
            kind,
            ..Default::default()
        };
        if kind == ModelKind::FeedForward {
            spec.learning_rate = 0.01;
        }
        spec
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidSpec(m.to_owned()));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        match self.kind {
            ModelKind::LogisticRegression | ModelKind::FeedForward => {
                if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
                    return bad("learning_rate must be positive");
                }
                if self.epochs == 0 || self.batch_size == 0 {
                    return bad("epochs and batch_size must be positive");
                }
                if self.kind == ModelKind::FeedForward && (self.hidden.is_empty() || self.hidden.contains(&0)) {
                    return bad("hidden layers must be non-empty with positive widths");
                }
            }
            ModelKind::NaiveBayes => {
                if self.alpha.is_nan() || self.alpha <= 0.0 {
                    return bad("alpha must be positive");
                }
            }
            ModelKind::DecisionTree => {
                if self.max_depth == 0 || self.min_leaf == 0 {
                    return bad("max_depth and min_leaf must be positive");
                }
            }
        }
        Ok(())
    }
}

/// Learned parameters of one binary classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    /// Fixed score, used when training saw a single class.
    Constant(f64),
    Logistic(LogisticParams),
    NaiveBayes(NaiveBayesParams),
    Tree(DecisionTree),
    FeedForward(Network),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub spec: ModelSpec,
    pub width: usize,
    pub params: Params,
    /// Set when training saw only one class.
    pub degenerate: bool,
}

impl BinaryModel {
    pub fn constant(spec: ModelSpec, width: usize, score: f64) -> Self {
        BinaryModel {
            spec,
            width,
            params: Params::Constant(score),
            degenerate: true,
        }
    }

    /// Positive-class probability.
    pub fn predict_score(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.width {
            return Err(ModelError::WidthMismatch {
                expected: self.width,
                found: x.len(),
            });
        }
        Ok(self.score_unchecked(x))
    }

    pub(crate) fn score_unchecked(&self, x: &[f64]) -> f64 {
        match &self.params {
            Params::Constant(p) => *p,
            Params::Logistic(p) => p.score(x),
            Params::NaiveBayes(p) => p.score(x),
            Params::Tree(t) => t.score(x),
            Params::FeedForward(n) => n.score(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<bool, ModelError> {
        Ok(self.predict_score(x)? >= self.spec.threshold)
    }
}

/// Per-example weights: uniform, or inverse class frequency (each class
/// carries half the total mass).
pub(crate) fn sample_weights(y: &[bool], class_weighting: bool) -> Vec<f64> {
    if !class_weighting {
        return vec![1.0; y.len()];
    }
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&t| t).count() as f64;
    let neg = n - pos;
    y.iter()
        .map(|&t| if t { n / (2.0 * pos) } else { n / (2.0 * neg) })
        .collect()
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fit one binary classifier. A single-class target vector yields a
/// constant model with `degenerate` set.
pub fn train_binary(x: &Matrix, y: &[bool], spec: &ModelSpec) -> Result<BinaryModel, ModelError> {
    spec.validate()?;
    if x.rows() != y.len() {
        return Err(ModelError::LengthMismatch {
            examples: x.rows(),
            targets: y.len(),
        });
    }
    if y.is_empty() {
        return Err(ModelError::Empty);
    }
    let pos = y.iter().filter(|&&t| t).count();
    if pos == 0 || pos == y.len() {
        let score = if pos == 0 { 0.0 } else { 1.0 };
        return Ok(BinaryModel::constant(spec.clone(), x.cols(), score));
    }
    let w = sample_weights(y, spec.class_weighting);
    let params = match spec.kind {
        ModelKind::LogisticRegression => Params::Logistic(logistic::fit(x, y, &w, spec)),
        ModelKind::NaiveBayes => Params::NaiveBayes(naive_bayes::fit(x, y, &w, spec.alpha)),
        ModelKind::DecisionTree => Params::Tree(tree::fit(x, y, &w, spec.max_depth, spec.min_leaf)),
        ModelKind::FeedForward => Params::FeedForward(feedforward::fit(x, y, &w, spec)),
    };
    Ok(BinaryModel {
        spec: spec.clone(),
        width: x.cols(),
        params,
        degenerate: false,
    })
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of a logit against a binary target, numerically stable.
pub(crate) fn logit_cross_entropy(z: f64, y: bool) -> f64 {
    let t = if y { 1.0 } else { 0.0 };
    z.max(0.0) - t * z + (-z.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(points: &[([f64; 2], bool)]) -> (Matrix, Vec<bool>) {
        let x = Matrix::from_rows(points.iter().map(|(p, _)| p.to_vec()).collect());
        (x, points.iter().map(|p| p.1).collect())
    }

    fn accuracy(m: &BinaryModel, x: &Matrix, y: &[bool]) -> f64 {
        let hits = x
            .iter_rows()
            .zip(y)
            .filter(|(r, &t)| m.predict(r).unwrap() == t)
            .count();
        hits as f64 / y.len() as f64
    }

    fn xor() -> (Matrix, Vec<bool>) {
        toy(&[
            ([0.0, 0.0], false),
            ([0.0, 1.0], true),
            ([1.0, 0.0], true),
            ([1.0, 1.0], false),
        ])
    }

    #[test]
    fn separable_logistic() {
        let (x, y) = toy(&[
            ([0.0, 0.1], false),
            ([0.2, 0.3], false),
            ([0.1, 0.9], false),
            ([1.0, 0.0], true),
            ([0.9, 0.8], true),
            ([1.2, 0.4], true),
        ]);
        let m = train_binary(&x, &y, &ModelSpec::default()).unwrap();
        assert_eq!(accuracy(&m, &x, &y), 1.0);
    }

    /// No (w1, w2, b) on a coarse grid classifies all four XOR corners.
    fn xor_is_linearly_inseparable_on_grid() -> bool {
        let (x, y) = xor();
        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.25).collect();
        for &w1 in &grid {
            for &w2 in &grid {
                for &b in &grid {
                    let all = x
                        .iter_rows()
                        .zip(&y)
                        .all(|(r, &t)| (w1 * r[0] + w2 * r[1] + b > 0.0) == t);
                    if all {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[test]
    fn xor_needs_hidden_layers() {
        assert!(xor_is_linearly_inseparable_on_grid());
        let (x, y) = xor();
        let lr = train_binary(&x, &y, &ModelSpec::default()).unwrap();
        assert!(accuracy(&lr, &x, &y) <= 0.75);
        let ff_spec = ModelSpec {
            epochs: 2000,
            batch_size: 4,
            l2: 0.0,
            hidden: vec![8, 8, 8],
            ..ModelSpec::of_kind(ModelKind::FeedForward)
        };
        let ff = train_binary(&x, &y, &ff_spec).unwrap();
        assert_eq!(accuracy(&ff, &x, &y), 1.0);
    }

    #[test]
    fn xor_with_tree_and_bayes() {
        let (x, y) = xor();
        let dt = train_binary(
            &x,
            &y,
            &ModelSpec {
                min_leaf: 1,
                ..ModelSpec::of_kind(ModelKind::DecisionTree)
            },
        )
        .unwrap();
        // no single split has positive gain on XOR, so the tree is one leaf
        assert!(matches!(&dt.params, Params::Tree(t) if t.nodes.len() == 1));
        assert_eq!(dt.predict_score(&[1.0, 1.0]).unwrap(), 0.5);
        let nb = train_binary(&x, &y, &ModelSpec::of_kind(ModelKind::NaiveBayes)).unwrap();
        assert!((nb.predict_score(&[0.0, 0.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_constant() {
        let (x, _) = xor();
        let m = train_binary(&x, &[true; 4], &ModelSpec::default()).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.predict_score(&[3.0, 4.0]).unwrap(), 1.0);
        assert!(m.predict(&[0.0, 0.0]).unwrap());
    }

    #[test]
    fn zero_weights_score_half() {
        let m = BinaryModel {
            spec: ModelSpec::default(),
            width: 3,
            params: Params::Logistic(LogisticParams {
                weights: vec![0.0; 3],
                bias: 0.0,
            }),
            degenerate: false,
        };
        assert_eq!(m.predict_score(&[1.0, -2.0, 7.0]).unwrap(), 0.5);
        assert!(matches!(m.predict_score(&[1.0]), Err(ModelError::WidthMismatch { .. })));
    }

    #[test]
    fn hand_set_logistic() {
        let m = BinaryModel {
            spec: ModelSpec::default(),
            width: 2,
            params: Params::Logistic(LogisticParams {
                weights: vec![1.0, 0.0],
                bias: 0.0,
            }),
            degenerate: false,
        };
        let expect = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((m.predict_score(&[2.0, 5.0]).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::default().validate().is_ok());
        let bad = ModelSpec {
            threshold: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad_ff = ModelSpec {
            hidden: vec![],
            ..ModelSpec::of_kind(ModelKind::FeedForward)
        };
        assert!(bad_ff.validate().is_err());
        assert_eq!(ModelSpec::of_kind(ModelKind::FeedForward).hidden.len(), 3);
        let json: ModelSpec = serde_json::from_str(r#"{"kind":"naive_bayes","alpha":0.5}"#).unwrap();
        assert_eq!(json.kind, ModelKind::NaiveBayes);
    }

    #[test]
    fn class_weights_balance_mass() {
        let w = sample_weights(&[true, false, false, false], true);
        assert!((w[0] - 2.0).abs() < 1e-12);
        assert!((w[1..].iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }
}
