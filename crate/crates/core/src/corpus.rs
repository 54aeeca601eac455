//! Conversation trees: loading, branch decomposition, partitioning and
//! dataset statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::tokenize;
use crate::tagset::LabelSet;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("tree `{tree_id}`: node `{node_id}` {problem}")]
    Integrity {
        tree_id: String,
        node_id: String,
        problem: IntegrityProblem,
    },
    #[error("tree `{0}` has no root")]
    NoRoot(String),
    #[error("tree `{tree_id}` has more than one root (`{first}`, `{second}`)")]
    MultipleRoots {
        tree_id: String,
        first: String,
        second: String,
    },
    #[error("corpus is empty")]
    Empty,
    #[error("held-out count {requested} out of range for {available} trees")]
    HeldOutOutOfRange { requested: usize, available: usize },
    #[error("fold count {k} out of range for {available} trees")]
    FoldsOutOfRange { k: usize, available: usize },
    #[error("unknown tree id `{0}`")]
    UnknownTree(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrityProblem {
    DanglingParent,
    DuplicateNode,
    Cycle,
}

impl std::fmt::Display for IntegrityProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IntegrityProblem::DanglingParent => "refers to a missing parent",
            IntegrityProblem::DuplicateNode => "is defined more than once",
            IntegrityProblem::Cycle => "lies on a parent cycle",
        })
    }
}

/// One post of a discussion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostNode {
    pub node_id: String,
    pub parent_id: Option<String>,
    pub author: String,
    pub text: String,
    pub timestamp: Option<i64>,
    pub labels: LabelSet,
}

impl PostNode {
    pub fn is_labeled(&self) -> bool {
        !self.labels.is_empty()
    }
}

/// One line of the tree file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub tree_id: String,
    pub node_id: String,
    pub parent_id: Option<String>,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub timestamp: Option<i64>,
    #[serde(default)]
    pub labels: LabelSet,
}

/// A validated discussion tree. Nodes are addressed by their position in
/// `nodes()`; the root is always reachable and children are ordered by
/// timestamp, then node id.
#[derive(Debug, Clone)]
pub struct ConversationTree {
    tree_id: String,
    nodes: Vec<PostNode>,
    root: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl ConversationTree {
    pub fn new(tree_id: impl Into<String>, nodes: Vec<PostNode>) -> Result<Self, CorpusError> {
        let tree_id = tree_id.into();
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.node_id.clone(), i).is_some() {
                return Err(CorpusError::Integrity {
                    tree_id,
                    node_id: node.node_id.clone(),
                    problem: IntegrityProblem::DuplicateNode,
                });
            }
        }

        let mut root = None;
        let mut parent = vec![None; nodes.len()];
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            match &node.parent_id {
                None => {
                    if let Some(r) = root {
                        let first: &PostNode = &nodes[r];
                        return Err(CorpusError::MultipleRoots {
                            tree_id,
                            first: first.node_id.clone(),
                            second: node.node_id.clone(),
                        });
                    }
                    root = Some(i);
                }
                Some(p) => match index.get(p) {
                    Some(&pi) => {
                        parent[i] = Some(pi);
                        children[pi].push(i);
                    }
                    None => {
                        return Err(CorpusError::Integrity {
                            tree_id,
                            node_id: node.node_id.clone(),
                            problem: IntegrityProblem::DanglingParent,
                        })
                    }
                },
            }
        }
        let root = root.ok_or_else(|| CorpusError::NoRoot(tree_id.clone()))?;

        // With a single root and no dangling parents, anything unreachable
        // from the root sits on a cycle.
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            seen[n] = true;
            stack.extend(children[n].iter().copied());
        }
        if let Some(bad) = seen.iter().position(|s| !s) {
            return Err(CorpusError::Integrity {
                tree_id,
                node_id: nodes[bad].node_id.clone(),
                problem: IntegrityProblem::Cycle,
            });
        }

        for kids in &mut children {
            kids.sort_by(|&a, &b| {
                (nodes[a].timestamp, &nodes[a].node_id).cmp(&(nodes[b].timestamp, &nodes[b].node_id))
            });
        }

        Ok(ConversationTree {
            tree_id,
            nodes,
            root,
            parent,
            children,
            index,
        })
    }

    pub fn tree_id(&self) -> &str {
        &self.tree_id
    }

    pub fn nodes(&self) -> &[PostNode] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &PostNode {
        &self.nodes[idx]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn root_id(&self) -> &str {
        &self.nodes[self.root].node_id
    }

    pub fn parent(&self, idx: usize) -> Option<usize> {
        self.parent[idx]
    }

    pub fn children(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    pub fn position(&self, node_id: &str) -> Option<usize> {
        self.index.get(node_id).copied()
    }

    pub fn is_leaf(&self, idx: usize) -> bool {
        self.children[idx].is_empty()
    }

    /// Node indices from the root down to `idx`, inclusive.
    pub fn path_to(&self, idx: usize) -> Vec<usize> {
        let mut path = vec![idx];
        let mut cur = idx;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Node indices in depth-first preorder (parents before children).
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            order.push(n);
            stack.extend(self.children[n].iter().rev().copied());
        }
        order
    }

    /// Parent-child index pairs, one per tree edge.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(child, p)| p.map(|p| (p, child)))
    }

    /// Leaf indices ordered by node id.
    pub fn leaves(&self) -> Vec<usize> {
        let mut leaves: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.is_leaf(i)).collect();
        leaves.sort_by(|&a, &b| self.nodes[a].node_id.cmp(&self.nodes[b].node_id));
        leaves
    }

    pub fn records(&self) -> impl Iterator<Item = NodeRecord> + '_ {
        self.preorder().into_iter().map(move |i| {
            let n = &self.nodes[i];
            NodeRecord {
                tree_id: self.tree_id.clone(),
                node_id: n.node_id.clone(),
                parent_id: n.parent_id.clone(),
                author: n.author.clone(),
                text: n.text.clone(),
                timestamp: n.timestamp,
                labels: n.labels,
            }
        })
    }
}

/// A root-to-leaf path through a tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub tree_id: String,
    pub node_ids: Vec<String>,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }
}

/// Read trees from newline-delimited JSON records. Trees keep the order in
/// which their ids first appear.
pub fn load_trees<R: BufRead>(reader: R) -> Result<Vec<ConversationTree>, CorpusError> {
    let mut grouped: Vec<(String, Vec<PostNode>)> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: NodeRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: lineno + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        let at = *slot.entry(record.tree_id.clone()).or_insert_with(|| {
            grouped.push((record.tree_id.clone(), Vec::new()));
            grouped.len() - 1
        });
        grouped[at].1.push(PostNode {
            node_id: record.node_id,
            parent_id: record.parent_id,
            author: record.author,
            text: record.text,
            timestamp: record.timestamp,
            labels: record.labels,
        });
    }
    grouped
        .into_iter()
        .map(|(id, nodes)| ConversationTree::new(id, nodes))
        .collect()
}

pub fn load_trees_path(path: impl AsRef<Path>) -> Result<Vec<ConversationTree>, CorpusError> {
    load_trees(BufReader::new(File::open(path)?))
}

/// One branch per leaf, ordered by leaf node id.
pub fn extract_branches(tree: &ConversationTree) -> Vec<Branch> {
    branch_paths(tree)
        .into_iter()
        .map(|path| Branch {
            tree_id: tree.tree_id.clone(),
            node_ids: path.iter().map(|&i| tree.nodes[i].node_id.clone()).collect(),
        })
        .collect()
}

/// Like [`extract_branches`], as node indices.
pub fn branch_paths(tree: &ConversationTree) -> Vec<Vec<usize>> {
    tree.leaves().into_iter().map(|leaf| tree.path_to(leaf)).collect()
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of<I: IntoIterator<Item = f64>>(values: I) -> MeanStd {
        let values: Vec<f64> = values.into_iter().collect();
        if values.is_empty() {
            return MeanStd::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_trees: usize,
    pub total_users: usize,
    pub total_branches: usize,
    pub total_nodes: usize,
    pub total_labeled_nodes: usize,
    pub total_labels: usize,
    pub total_tokens: usize,
    pub avg_branches_per_tree: MeanStd,
    pub avg_nodes_per_tree: MeanStd,
    pub avg_branch_length: MeanStd,
    pub avg_tree_depth: MeanStd,
    pub avg_users_per_branch: MeanStd,
    pub avg_users_per_tree: MeanStd,
    pub avg_nodes_per_user: MeanStd,
    pub avg_tokens_per_post: MeanStd,
}

impl CorpusStats {
    /// Rows of `(variable, value, std)` in display order; counts carry no std.
    pub fn rows(&self) -> Vec<(&'static str, f64, Option<f64>)> {
        let c = |name, v: usize| (name, v as f64, None);
        let m = |name, v: MeanStd| (name, v.mean, Some(v.std));
        vec![
            c("Num of trees", self.num_trees),
            c("Total users", self.total_users),
            c("Total branches", self.total_branches),
            c("Total nodes", self.total_nodes),
            c("Total labeled nodes", self.total_labeled_nodes),
            c("Total labels for all nodes", self.total_labels),
            c("Total tokens", self.total_tokens),
            m("Avg. branches per tree", self.avg_branches_per_tree),
            m("Avg. nodes per tree", self.avg_nodes_per_tree),
            m("Avg. branch length", self.avg_branch_length),
            m("Avg. tree depth", self.avg_tree_depth),
            m("Avg. users per branch", self.avg_users_per_branch),
            m("Avg. users per tree", self.avg_users_per_tree),
            m("Avg. nodes per user", self.avg_nodes_per_user),
            m("Avg. tokens per post (node)", self.avg_tokens_per_post),
        ]
    }
}

/// Dataset statistics over unique nodes. Tree depth counts the nodes on the
/// longest root-to-leaf path.
pub fn corpus_statistics(trees: &[ConversationTree]) -> Result<CorpusStats, CorpusError> {
    if trees.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut branches_per_tree = Vec::new();
    let mut nodes_per_tree = Vec::new();
    let mut branch_lengths = Vec::new();
    let mut depths = Vec::new();
    let mut users_per_branch = Vec::new();
    let mut users_per_tree = Vec::new();
    let mut tokens_per_post = Vec::new();
    let mut nodes_per_user: BTreeMap<&str, usize> = BTreeMap::new();
    let mut labeled = 0;
    let mut labels = 0;

    for tree in trees {
        let paths = branch_paths(tree);
        branches_per_tree.push(paths.len() as f64);
        nodes_per_tree.push(tree.len() as f64);
        depths.push(paths.iter().map(Vec::len).max().unwrap_or(0) as f64);
        for path in &paths {
            branch_lengths.push(path.len() as f64);
            let authors: HashSet<&str> = path.iter().map(|&i| tree.nodes[i].author.as_str()).collect();
            users_per_branch.push(authors.len() as f64);
        }
        let authors: HashSet<&str> = tree.nodes.iter().map(|n| n.author.as_str()).collect();
        users_per_tree.push(authors.len() as f64);
        for node in &tree.nodes {
            *nodes_per_user.entry(node.author.as_str()).or_default() += 1;
            tokens_per_post.push(tokenize(&node.text).len() as f64);
            if node.is_labeled() {
                labeled += 1;
                labels += node.labels.len();
            }
        }
    }

    Ok(CorpusStats {
        num_trees: trees.len(),
        total_users: nodes_per_user.len(),
        total_branches: branch_lengths.len(),
        total_nodes: nodes_per_tree.iter().sum::<f64>() as usize,
        total_labeled_nodes: labeled,
        total_labels: labels,
        total_tokens: tokens_per_post.iter().sum::<f64>() as usize,
        avg_branches_per_tree: MeanStd::of(branches_per_tree),
        avg_nodes_per_tree: MeanStd::of(nodes_per_tree),
        avg_branch_length: MeanStd::of(branch_lengths),
        avg_tree_depth: MeanStd::of(depths),
        avg_users_per_branch: MeanStd::of(users_per_branch),
        avg_users_per_tree: MeanStd::of(users_per_tree),
        avg_nodes_per_user: MeanStd::of(nodes_per_user.values().map(|&c| c as f64)),
        avg_tokens_per_post: MeanStd::of(tokens_per_post),
    })
}

/// A tree-level train/test partition, as indices into the input slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl TreeSplit {
    pub fn select(&self, trees: &[ConversationTree]) -> (Vec<ConversationTree>, Vec<ConversationTree>) {
        let pick = |ix: &[usize]| ix.iter().map(|&i| trees[i].clone()).collect();
        (pick(&self.train), pick(&self.test))
    }
}

/// Hold out `held_out_count` trees chosen uniformly at random.
pub fn split_trees(trees: &[ConversationTree], held_out_count: usize, seed: u64) -> Result<TreeSplit, CorpusError> {
    if held_out_count >= trees.len() {
        return Err(CorpusError::HeldOutOutOfRange {
            requested: held_out_count,
            available: trees.len(),
        });
    }
    let mut order: Vec<usize> = (0..trees.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..held_out_count].to_vec();
    let mut train = order[held_out_count..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(TreeSplit { train, test })
}

/// Hold out exactly the named trees.
pub fn split_trees_by_id<S: AsRef<str>>(trees: &[ConversationTree], test_ids: &[S]) -> Result<TreeSplit, CorpusError> {
    let mut test = Vec::with_capacity(test_ids.len());
    for id in test_ids {
        let pos = trees
            .iter()
            .position(|t| t.tree_id == id.as_ref())
            .ok_or_else(|| CorpusError::UnknownTree(id.as_ref().to_owned()))?;
        test.push(pos);
    }
    test.sort_unstable();
    test.dedup();
    if test.len() >= trees.len() {
        return Err(CorpusError::HeldOutOutOfRange {
            requested: test.len(),
            available: trees.len(),
        });
    }
    let train = (0..trees.len()).filter(|i| test.binary_search(i).is_err()).collect();
    Ok(TreeSplit { train, test })
}

/// Partition tree indices into `k` groups whose sizes differ by at most one.
pub fn make_folds(n_trees: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, CorpusError> {
    if k < 2 || k > n_trees {
        return Err(CorpusError::FoldsOutOfRange { k, available: n_trees });
    }
    let mut order: Vec<usize> = (0..n_trees).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, tree) in order.into_iter().enumerate() {
        folds[pos % k].push(tree);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}
