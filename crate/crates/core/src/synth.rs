//! Synthetic conversation trees with planted cue words and tag dependencies.
//!
//! Each labeled post carries the cue word of every tag it holds (with a
//! per-tag probability) among filler words. Dependency rules let a child's
//! primary tag be drawn from a distribution conditioned on a parent tag, so
//! some tags are recoverable only from label history.

use std::collections::{BTreeMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ConversationTree, PostNode};
use crate::features::{tokenize, PdtbInventory, PdtbSidecar};
use crate::models::rng;
use crate::tagset::{LabelSet, Tag};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid synthetic spec: {0}")]
pub struct SpecError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagCue {
    pub tag: Tag,
    /// Single-token cue; `None` makes the tag invisible in text.
    #[serde(default)]
    pub cue: Option<String>,
    /// Relative frequency as a freely drawn primary or extra tag.
    #[serde(default = "one")]
    pub weight: f64,
    /// Chance that a post carrying the tag shows its cue.
    #[serde(default = "one")]
    pub cue_probability: f64,
}

fn one() -> f64 {
    1.0
}

/// When the parent carries `parent`, the child's primary tag is drawn from
/// `child` with probability `probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependencyRule {
    pub parent: Tag,
    pub child: BTreeMap<Tag, f64>,
    #[serde(default = "one")]
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_trees: usize,
    /// `root_children[k]` is the probability that a root has `k` replies.
    pub root_children: Vec<f64>,
    /// Same for every other post above `max_depth`.
    pub children: Vec<f64>,
    /// Deepest reply level (root is depth 0).
    pub max_depth: usize,
    pub tags: Vec<TagCue>,
    #[serde(default)]
    pub dependencies: Vec<DependencyRule>,
    /// Chance of one extra freely drawn tag per labeled post.
    #[serde(default)]
    pub extra_label_probability: f64,
    #[serde(default)]
    pub unlabeled_fraction: f64,
    pub filler: Vec<String>,
    /// Inclusive range of filler words per post.
    pub filler_words: (usize, usize),
    #[serde(default = "default_authors")]
    pub authors_per_tree: usize,
    /// Discourse-relation inventory; empty disables the sidecar.
    #[serde(default)]
    pub pdtb_tags: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

fn default_authors() -> usize {
    6
}

const FILLER: &[&str] = &[
    "the", "a", "of", "to", "and", "in", "that", "is", "it", "for", "on", "with", "as", "this", "be", "at", "by",
    "not", "are", "or", "from", "but", "have", "they", "which", "one", "all", "there", "what", "so", "people", "think",
    "point", "view", "argument", "change", "world", "because", "would", "could",
];

fn check_distribution(name: &str, p: &[f64]) -> Result<(), SpecError> {
    if p.is_empty() || p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(SpecError(format!("{name} must be non-empty and non-negative")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SpecError(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

fn check_probability(name: &str, p: f64) -> Result<(), SpecError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SpecError(format!("{name} = {p} outside [0, 1]")))
    }
}

impl SyntheticSpec {
    /// All 31 tags with cue words `cue<tagname>` and uniform weights.
    pub fn planted_cues(num_trees: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            num_trees,
            root_children: vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25],
            children: vec![0.3, 0.3, 0.25, 0.15],
            max_depth: 7,
            tags: Tag::all()
                .map(|tag| TagCue {
                    tag,
                    cue: Some(format!("cue{}", tag.name().to_lowercase())),
                    weight: 1.0,
                    cue_probability: 1.0,
                })
                .collect(),
            dependencies: Vec::new(),
            extra_label_probability: 0.3,
            unlabeled_fraction: 0.05,
            filler: FILLER.iter().map(|s| (*s).to_owned()).collect(),
            filler_words: (4, 12),
            authors_per_tree: default_authors(),
            pdtb_tags: Vec::new(),
            seed,
        }
    }

    /// Planted cues plus five response tags that have no cue and appear only
    /// as replies to a trigger tag.
    pub fn with_dependencies(num_trees: usize, seed: u64) -> SyntheticSpec {
        let mut spec = Self::planted_cues(num_trees, seed);
        for (trigger, response) in Self::DEPENDENCY_PAIRS {
            let (t, r) = (Tag::from_name(trigger).unwrap(), Tag::from_name(response).unwrap());
            for cue in &mut spec.tags {
                if cue.tag == r {
                    cue.cue = None;
                    cue.weight = 0.0;
                } else if cue.tag == t {
                    cue.weight = 3.0;
                }
            }
            spec.dependencies.push(DependencyRule {
                parent: t,
                child: BTreeMap::from([(r, 1.0)]),
                probability: 0.9,
            });
        }
        spec
    }

    /// `(trigger, response)` pairs used by [`Self::with_dependencies`].
    pub const DEPENDENCY_PAIRS: [(&'static str, &'static str); 5] = [
        ("RequestClarification", "Clarification"),
        ("CriticalQuestion", "Answer"),
        ("DirectNo", "CounterArgument"),
        ("Sarcasm", "Ridicule"),
        ("Alternative", "Extension"),
    ];

    /// Tags that some dependency rule can produce.
    pub fn dependent_tags(&self) -> Vec<Tag> {
        let mut out: Vec<Tag> = self.dependencies.iter().flat_map(|r| r.child.keys().copied()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.num_trees == 0 {
            return Err(SpecError("num_trees must be positive".into()));
        }
        check_distribution("root_children", &self.root_children)?;
        check_distribution("children", &self.children)?;
        if self.tags.is_empty() {
            return Err(SpecError("no tags".into()));
        }
        let mut seen_tags = HashSet::new();
        let mut seen_cues: HashSet<&str> = HashSet::new();
        let filler: HashSet<&str> = self.filler.iter().map(String::as_str).collect();
        for c in &self.tags {
            if !seen_tags.insert(c.tag) {
                return Err(SpecError(format!("tag {} listed twice", c.tag)));
            }
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(SpecError(format!("weight of {} must be non-negative", c.tag)));
            }
            check_probability("cue_probability", c.cue_probability)?;
            if let Some(cue) = &c.cue {
                if tokenize(cue) != [cue.clone()] {
                    return Err(SpecError(format!("cue `{cue}` is not a single lowercase token")));
                }
                if filler.contains(cue.as_str()) || !seen_cues.insert(cue) {
                    return Err(SpecError(format!("cue `{cue}` is not unique")));
                }
            }
        }
        if self.tags.iter().map(|c| c.weight).sum::<f64>() <= 0.0 {
            return Err(SpecError("tag weights sum to zero".into()));
        }
        for r in &self.dependencies {
            check_probability("rule probability", r.probability)?;
            let p: Vec<f64> = r.child.values().copied().collect();
            check_distribution(&format!("child distribution of {}", r.parent), &p)?;
            if let Some(t) = std::iter::once(&r.parent)
                .chain(r.child.keys())
                .find(|t| !seen_tags.contains(*t))
            {
                return Err(SpecError(format!("rule mentions unlisted tag {t}")));
            }
        }
        check_probability("extra_label_probability", self.extra_label_probability)?;
        check_probability("unlabeled_fraction", self.unlabeled_fraction)?;
        let (lo, hi) = self.filler_words;
        if lo > hi || (hi > 0 && self.filler.is_empty()) {
            return Err(SpecError(
                "filler_words range needs lo <= hi and a filler vocabulary".into(),
            ));
        }
        if self.filler.iter().any(|w| tokenize(w) != [w.clone()]) {
            return Err(SpecError("filler words must be single lowercase tokens".into()));
        }
        if self.authors_per_tree == 0 {
            return Err(SpecError("authors_per_tree must be positive".into()));
        }
        Ok(())
    }
}

/// Ground truth of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub spec: SyntheticSpec,
    pub num_trees: usize,
    pub num_nodes: usize,
    pub num_labeled_nodes: usize,
    pub num_labels: usize,
    pub num_branches: usize,
    /// Labeled posts per tag, in tag order.
    pub tag_counts: BTreeMap<Tag, usize>,
    pub dependent_tags: Vec<Tag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarLine {
    pub tree_id: String,
    pub node_id: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub trees: Vec<ConversationTree>,
    pub truth: TruthManifest,
    /// Relation sequences, when the spec declares an inventory.
    pub pdtb: Option<(PdtbInventory, Vec<SidecarLine>)>,
}

impl SyntheticCorpus {
    pub fn sidecar(&self) -> Option<PdtbSidecar> {
        let (inv, lines) = self.pdtb.as_ref()?;
        let mut s = PdtbSidecar::new(inv.clone());
        for l in lines {
            s.insert(Some(&l.tree_id), &l.node_id, &l.tags)
                .expect("generated tags are in the inventory");
        }
        Some(s)
    }
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    rng: rand_chacha::ChaCha8Rng,
    free: Option<WeightedIndex<f64>>,
    root_children: WeightedIndex<f64>,
    children: WeightedIndex<f64>,
}

impl Generator<'_> {
    fn draw_free(&mut self) -> Option<Tag> {
        let i = self.free.as_ref()?.sample(&mut self.rng);
        Some(self.spec.tags[i].tag)
    }

    fn labels(&mut self, parent: LabelSet) -> LabelSet {
        let mut set = LabelSet::empty();
        if self.rng.gen_bool(self.spec.unlabeled_fraction) {
            return set;
        }
        let rule = self.spec.dependencies.iter().find(|r| parent.contains(r.parent));
        let primary = match rule {
            Some(r) if self.rng.gen_bool(r.probability) => {
                let tags: Vec<Tag> = r.child.keys().copied().collect();
                let w = WeightedIndex::new(r.child.values().copied()).expect("validated");
                Some(tags[w.sample(&mut self.rng)])
            }
            _ => self.draw_free(),
        };
        if let Some(t) = primary {
            set.insert(t);
        }
        if self.rng.gen_bool(self.spec.extra_label_probability) {
            if let Some(t) = self.draw_free() {
                set.insert(t);
            }
        }
        set
    }

    fn text(&mut self, labels: LabelSet) -> String {
        let (lo, hi) = self.spec.filler_words;
        let n = self.rng.gen_range(lo..=hi);
        let mut words: Vec<&str> = (0..n)
            .map(|_| self.spec.filler[self.rng.gen_range(0..self.spec.filler.len())].as_str())
            .collect();
        for c in &self.spec.tags {
            if labels.contains(c.tag) {
                if let Some(cue) = &c.cue {
                    if self.rng.gen_bool(c.cue_probability) {
                        words.push(cue);
                    }
                }
            }
        }
        words.shuffle(&mut self.rng);
        words.join(" ")
    }

    fn pdtb(&mut self) -> Vec<String> {
        let inv = &self.spec.pdtb_tags;
        let n = self.rng.gen_range(0..=3);
        (0..n).map(|_| inv[self.rng.gen_range(0..inv.len())].clone()).collect()
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus, SpecError> {
    spec.validate()?;
    let weights: Vec<f64> = spec.tags.iter().map(|c| c.weight).collect();
    let mut g = Generator {
        spec,
        rng: rng(spec.seed),
        free: WeightedIndex::new(&weights).ok(),
        root_children: WeightedIndex::new(&spec.root_children).expect("validated"),
        children: WeightedIndex::new(&spec.children).expect("validated"),
    };
    let mut trees = Vec::with_capacity(spec.num_trees);
    let mut sidecar = Vec::new();
    let mut clock = 1_500_000_000i64;
    for t in 0..spec.num_trees {
        let tree_id = format!("syn{t:04}");
        let mut nodes: Vec<PostNode> = Vec::new();
        // (index, depth)
        let mut queue = std::collections::VecDeque::from([(0usize, 0usize)]);
        let root_labels = g.labels(LabelSet::empty());
        let authors = spec.authors_per_tree;
        nodes.push(PostNode {
            node_id: "n0000".into(),
            parent_id: None,
            author: format!("{tree_id}-u{}", g.rng.gen_range(0..authors)),
            text: g.text(root_labels),
            timestamp: Some(clock),
            labels: root_labels,
        });
        while let Some((idx, depth)) = queue.pop_front() {
            if depth >= spec.max_depth {
                continue;
            }
            let k = if depth == 0 {
                g.root_children.sample(&mut g.rng)
            } else {
                g.children.sample(&mut g.rng)
            };
            for _ in 0..k {
                clock += g.rng.gen_range(1..600);
                let labels = g.labels(nodes[idx].labels);
                let child = PostNode {
                    node_id: format!("n{:04}", nodes.len()),
                    parent_id: Some(nodes[idx].node_id.clone()),
                    author: format!("{tree_id}-u{}", g.rng.gen_range(0..authors)),
                    text: g.text(labels),
                    timestamp: Some(clock),
                    labels,
                };
                queue.push_back((nodes.len(), depth + 1));
                nodes.push(child);
            }
        }
        if !spec.pdtb_tags.is_empty() {
            for n in &nodes {
                let tags = g.pdtb();
                sidecar.push(SidecarLine {
                    tree_id: tree_id.clone(),
                    node_id: n.node_id.clone(),
                    tags,
                });
            }
        }
        trees.push(ConversationTree::new(tree_id, nodes).expect("generated trees are valid"));
    }

    let mut tag_counts: BTreeMap<Tag, usize> = spec.tags.iter().map(|c| (c.tag, 0)).collect();
    let (mut num_nodes, mut num_labeled, mut num_labels, mut num_branches) = (0, 0, 0, 0);
    for tree in &trees {
        num_nodes += tree.len();
        num_branches += tree.leaves().len();
        for n in tree.nodes().iter().filter(|n| n.is_labeled()) {
            num_labeled += 1;
            num_labels += n.labels.len();
            for tag in n.labels.iter() {
                *tag_counts.entry(tag).or_default() += 1;
            }
        }
    }
    let pdtb = if spec.pdtb_tags.is_empty() {
        None
    } else {
        let inv = PdtbInventory::new(spec.pdtb_tags.iter().cloned()).map_err(|e| SpecError(e.to_string()))?;
        Some((inv, sidecar))
    };
    Ok(SyntheticCorpus {
        truth: TruthManifest {
            spec: spec.clone(),
            num_trees: trees.len(),
            num_nodes,
            num_labeled_nodes: num_labeled,
            num_labels,
            num_branches,
            tag_counts,
            dependent_tags: spec.dependent_tags(),
        },
        trees,
        pdtb,
    })
}
