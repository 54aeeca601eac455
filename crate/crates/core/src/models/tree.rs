//! CART-style decision tree grown by information gain.

use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes in construction order; index 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// Weighted positive fraction of the leaf reached by `x`.
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

fn entropy(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [bool],
    w: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

const MIN_GAIN: f64 = 1e-12;

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let total: f64 = rows.iter().map(|&i| self.w[i]).sum();
        let pos: f64 = rows.iter().filter(|&&i| self.y[i]).map(|&i| self.w[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            value: if total > 0.0 { pos / total } else { 0.0 },
        });
        if depth >= self.max_depth || pos <= 0.0 || pos >= total || rows.len() < 2 * self.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, pos, total) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x.get(i, feature) <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Highest-gain split; ties keep the lowest feature index, then the
    /// lowest threshold.
    fn best_split(&self, rows: &[usize], pos: f64, total: f64) -> Option<(usize, f64)> {
        let parent = entropy(pos, total);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut vals: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for j in 0..self.x.cols() {
            vals.clear();
            vals.extend(rows.iter().map(|&i| (self.x.get(i, j), i)));
            let first = vals[0].0;
            if vals.iter().all(|v| v.0 == first) {
                continue;
            }
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut lw, mut lp) = (0.0, 0.0);
            for k in 0..vals.len() - 1 {
                let i = vals[k].1;
                lw += self.w[i];
                if self.y[i] {
                    lp += self.w[i];
                }
                let (a, b) = (vals[k].0, vals[k + 1].0);
                if a == b || k + 1 < self.min_leaf || vals.len() - k - 1 < self.min_leaf {
                    continue;
                }
                let rw = total - lw;
                let child = (lw * entropy(lp, lw) + rw * entropy(pos - lp, rw)) / total;
                let gain = parent - child;
                if gain > MIN_GAIN && best.is_none_or(|(g, _, _)| gain > g + MIN_GAIN) {
                    best = Some((gain, j, 0.5 * (a + b)));
                }
            }
        }
        best.map(|(_, j, t)| (j, t))
    }
}

pub(crate) fn fit(x: &Matrix, y: &[bool], w: &[f64], max_depth: usize, min_leaf: usize) -> DecisionTree {
    let mut b = Builder {
        x,
        y,
        w,
        max_depth,
        min_leaf,
        nodes: Vec::new(),
    };
    b.grow((0..x.rows()).collect(), 0);
    DecisionTree { nodes: b.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_informative_feature() {
        let x = Matrix::from_rows(vec![vec![5.0, 0.0], vec![5.0, 0.0], vec![5.0, 1.0], vec![5.0, 1.0]]);
        let y = [false, false, true, true];
        let t = fit(&x, &y, &[1.0; 4], 5, 1);
        assert_eq!(t.nodes.len(), 3);
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 1, threshold, .. } if threshold == 0.5));
        assert_eq!(t.score(&[0.0, 1.0]), 1.0);
        assert_eq!(t.score(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn ties_pick_lowest_feature() {
        let x = Matrix::from_rows(vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        let t = fit(&x, &[false, true], &[1.0; 2], 3, 1);
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn depth_and_leaf_limits() {
        let x = Matrix::from_rows((0..8).map(|i| vec![i as f64]).collect());
        let y: Vec<bool> = (0..8).map(|i| i % 2 == 1).collect();
        let stump = fit(&x, &y, &[1.0; 8], 1, 1);
        assert!(stump.nodes.len() <= 3);
        let big_leaf = fit(&x, &y, &[1.0; 8], 10, 5);
        assert_eq!(big_leaf.nodes.len(), 1);
    }
}
