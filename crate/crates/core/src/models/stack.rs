use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{train_binary, BinaryModel, ModelError, ModelSpec};
use crate::corpus::{Branch, ConversationTree};
use crate::features::{tokenize, FeatureConfig, FeatureExtractor, PostFeatures, Resources};
use crate::matrix::Matrix;
use crate::par_map;
use crate::tagset::{LabelSet, Tag};

/// Model spec for every tag, with optional per-tag overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSpec {
    #[serde(default)]
    pub default: ModelSpec,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_tag: BTreeMap<Tag, ModelSpec>,
}

impl StackSpec {
    pub fn uniform(spec: ModelSpec) -> Self {
        StackSpec {
            default: spec,
            per_tag: BTreeMap::new(),
        }
    }

    pub fn for_tag(&self, tag: Tag) -> &ModelSpec {
        self.per_tag.get(&tag).unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StackMetadata {
    pub seed: u64,
    pub train_trees: Vec<String>,
    pub num_examples: usize,
    /// Tags whose training targets had a single class.
    pub degenerate_tags: Vec<Tag>,
}

/// Where label-derived blocks get their labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Gold labels of the preceding posts and of the current post.
    Gold,
    /// Earlier predictions for the history; the collocation block comes
    /// from a first pass that leaves it empty.
    Predicted,
}

/// Label inputs of one prediction, ancestors nearest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelContext {
    pub previous: Vec<LabelSet>,
    pub collocated: LabelSet,
}

/// One post in a root-to-leaf sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPost {
    pub tree_id: String,
    pub node_id: String,
    pub text: String,
    pub gold: Option<LabelSet>,
}

/// One binary model per tag over a shared feature layout.
///
/// The model for tag `t` never sees its own entry of the collocation block:
/// that column is zeroed both in training and at prediction, so the block
/// only carries the other tags of the post.
#[derive(Debug, Clone)]
pub struct TagStack {
    tags: Vec<Tag>,
    models: Vec<BinaryModel>,
    extractor: FeatureExtractor,
    metadata: StackMetadata,
}

impl TagStack {
    pub fn from_parts(
        tags: Vec<Tag>,
        models: Vec<BinaryModel>,
        extractor: FeatureExtractor,
        metadata: StackMetadata,
    ) -> Result<TagStack, ModelError> {
        if tags.len() != models.len() {
            return Err(ModelError::LengthMismatch {
                examples: models.len(),
                targets: tags.len(),
            });
        }
        if let Some(m) = models.iter().find(|m| m.width != extractor.width()) {
            return Err(ModelError::WidthMismatch {
                expected: extractor.width(),
                found: m.width,
            });
        }
        Ok(TagStack {
            tags,
            models,
            extractor,
            metadata,
        })
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn models(&self) -> &[BinaryModel] {
        &self.models
    }

    pub fn model(&self, tag: Tag) -> Option<&BinaryModel> {
        self.tags.iter().position(|&t| t == tag).map(|i| &self.models[i])
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn metadata(&self) -> &StackMetadata {
        &self.metadata
    }

    pub fn config(&self) -> &FeatureConfig {
        self.extractor.config()
    }

    /// Positive scores per stack tag for one scaled vector.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.extractor.width() {
            return Err(ModelError::WidthMismatch {
                expected: self.extractor.width(),
                found: x.len(),
            });
        }
        let mut x = x.to_vec();
        let coll = self.extractor.collocation_offset();
        Ok(self
            .tags
            .iter()
            .zip(&self.models)
            .map(|(&tag, model)| match coll {
                Some(off) => {
                    let col = off + tag.index();
                    let saved = std::mem::replace(&mut x[col], 0.0);
                    let s = model.score_unchecked(&x);
                    x[col] = saved;
                    s
                }
                None => model.score_unchecked(&x),
            })
            .collect())
    }

    pub fn predict_vector(&self, x: &[f64]) -> Result<LabelSet, ModelError> {
        let scores = self.scores(x)?;
        Ok(self
            .tags
            .iter()
            .zip(&self.models)
            .zip(scores)
            .filter(|((_, m), s)| *s >= m.spec.threshold)
            .map(|((&t, _), _)| t)
            .collect())
    }

    fn post_features(&self, tree_id: &str, node_id: &str, text: &str) -> PostFeatures {
        self.extractor.post_features(tree_id, node_id, &tokenize(text))
    }

    fn vector(&self, posts: &[&PostFeatures], ctx: &LabelContext) -> Result<Vec<f64>, ModelError> {
        Ok(self.extractor.assemble(posts, &ctx.previous, ctx.collocated)?.values)
    }

    /// Labels for one post given the text features of it and its ancestors
    /// (nearest first) and the labels of the ancestors.
    fn predict_one(&self, posts: &[&PostFeatures], previous: Vec<LabelSet>) -> Result<LabelSet, ModelError> {
        let mut ctx = LabelContext {
            previous,
            collocated: LabelSet::empty(),
        };
        let first = self.predict_vector(&self.vector(posts, &ctx)?)?;
        if !self.config().use_collocation {
            return Ok(first);
        }
        ctx.collocated = first;
        self.predict_vector(&self.vector(posts, &ctx)?)
    }

    fn history_len(&self) -> usize {
        self.config().text_context().max(self.config().label_sequence_depth + 1)
    }
}

fn tag_seed(seed: u64, spec_seed: u64, tag: Tag) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(spec_seed)
        .rotate_left(17)
        .wrapping_add(tag.index() as u64 + 1)
}

/// Nearest-first ancestor chain of `idx`, including `idx`, cut at `len`.
fn context_chain(tree: &ConversationTree, idx: usize, len: usize) -> Vec<usize> {
    let mut chain = vec![idx];
    let mut cur = idx;
    while chain.len() < len {
        match tree.parent(cur) {
            Some(p) => {
                chain.push(p);
                cur = p;
            }
            None => break,
        }
    }
    chain
}

/// Fit feature resources and one model per tag on the labeled nodes of
/// `train`. Label blocks use gold labels; unlabeled ancestors contribute
/// empty label sets.
pub fn train_stack(
    train: &[ConversationTree],
    config: &FeatureConfig,
    specs: &StackSpec,
    resources: &Resources,
    tags: &[Tag],
    seed: u64,
) -> Result<TagStack, ModelError> {
    specs.default.validate()?;
    for s in specs.per_tag.values() {
        s.validate()?;
    }
    let tokens: Vec<Vec<Vec<String>>> = train
        .iter()
        .map(|t| t.nodes().iter().map(|n| tokenize(&n.text)).collect())
        .collect();
    let docs: Vec<&Vec<String>> = tokens.iter().flatten().collect();
    if docs.is_empty() {
        return Err(ModelError::Empty);
    }
    let mut extractor = FeatureExtractor::fit(config, resources, &docs)?;

    let depth = config.text_context().max(config.label_sequence_depth + 1);
    let mut x = Matrix::with_cols(extractor.width());
    let mut gold: Vec<LabelSet> = Vec::new();
    for (tree, toks) in train.iter().zip(&tokens) {
        let feats: Vec<PostFeatures> = tree
            .nodes()
            .iter()
            .zip(toks)
            .map(|(n, tk)| extractor.post_features(tree.tree_id(), &n.node_id, tk))
            .collect();
        for idx in 0..tree.len() {
            let node = tree.node(idx);
            if !node.is_labeled() {
                continue;
            }
            let chain = context_chain(tree, idx, depth);
            let posts: Vec<&PostFeatures> = chain.iter().map(|&i| &feats[i]).collect();
            let previous: Vec<LabelSet> = chain[1..].iter().map(|&i| tree.node(i).labels).collect();
            x.push_row(&extractor.assemble_unscaled(&posts, &previous, node.labels)?);
            gold.push(node.labels);
        }
    }
    if gold.is_empty() {
        return Err(ModelError::Empty);
    }
    extractor.fit_scaler(&mut x);

    let coll = extractor.collocation_offset();
    let models = par_map(tags, |&tag| {
        let mut spec = specs.for_tag(tag).clone();
        spec.seed = tag_seed(seed, spec.seed, tag);
        let y: Vec<bool> = gold.iter().map(|s| s.contains(tag)).collect();
        let xm = match coll {
            Some(off) => Cow::Owned(x.with_zeroed_column(off + tag.index())),
            None => Cow::Borrowed(&x),
        };
        train_binary(&xm, &y, &spec)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let metadata = StackMetadata {
        seed,
        train_trees: train.iter().map(|t| t.tree_id().to_owned()).collect(),
        num_examples: gold.len(),
        degenerate_tags: tags
            .iter()
            .zip(&models)
            .filter(|(_, m)| m.degenerate)
            .map(|(&t, _)| t)
            .collect(),
    };
    TagStack::from_parts(tags.to_vec(), models, extractor, metadata)
}

/// Predict every node of a tree, in node order. Nodes are visited in
/// preorder so a node only ever depends on its ancestors.
///
/// In gold mode unlabeled nodes stand in as empty label sets.
pub fn predict_tree(stack: &TagStack, tree: &ConversationTree, mode: ContextMode) -> Result<Vec<LabelSet>, ModelError> {
    match mode {
        ContextMode::Gold => predict_tree_with(stack, tree, |_, _| {}),
        ContextMode::Predicted => {
            let feats = tree_features(stack, tree);
            let mut out = vec![LabelSet::empty(); tree.len()];
            for idx in tree.preorder() {
                let chain = context_chain(tree, idx, stack.history_len());
                let posts: Vec<&PostFeatures> = chain.iter().map(|&i| &feats[i]).collect();
                let previous = chain[1..].iter().map(|&i| out[i]).collect();
                out[idx] = stack.predict_one(&posts, previous)?;
            }
            Ok(out)
        }
    }
}

/// Gold-context prediction with a hook that may rewrite each node's label
/// context before it is featurized. The hook runs once per node in preorder.
pub fn predict_tree_with<F>(
    stack: &TagStack,
    tree: &ConversationTree,
    mut perturb: F,
) -> Result<Vec<LabelSet>, ModelError>
where
    F: FnMut(usize, &mut LabelContext),
{
    let feats = tree_features(stack, tree);
    let mut out = vec![LabelSet::empty(); tree.len()];
    let depth = stack.config().label_sequence_depth;
    for idx in tree.preorder() {
        let chain = context_chain(tree, idx, stack.history_len());
        let posts: Vec<&PostFeatures> = chain.iter().map(|&i| &feats[i]).collect();
        let mut ctx = LabelContext {
            previous: chain[1..].iter().take(depth).map(|&i| tree.node(i).labels).collect(),
            collocated: if stack.config().use_collocation {
                tree.node(idx).labels
            } else {
                LabelSet::empty()
            },
        };
        perturb(idx, &mut ctx);
        out[idx] = stack.predict_vector(&stack.vector(&posts, &ctx)?)?;
    }
    Ok(out)
}

fn tree_features(stack: &TagStack, tree: &ConversationTree) -> Vec<PostFeatures> {
    tree.nodes()
        .iter()
        .map(|n| stack.post_features(tree.tree_id(), &n.node_id, &n.text))
        .collect()
}

/// Parse one branch of `tree` root to leaf.
pub fn parse_branch(
    stack: &TagStack,
    tree: &ConversationTree,
    branch: &Branch,
    mode: ContextMode,
) -> Result<Vec<LabelSet>, ModelError> {
    if branch.tree_id != tree.tree_id() {
        return Err(ModelError::BadBranch(format!(
            "branch of tree `{}` applied to tree `{}`",
            branch.tree_id,
            tree.tree_id()
        )));
    }
    let mut posts = Vec::with_capacity(branch.len());
    let mut prev: Option<usize> = None;
    for id in &branch.node_ids {
        let idx = tree
            .position(id)
            .ok_or_else(|| ModelError::BadBranch(format!("unknown node `{id}`")))?;
        if tree.parent(idx) != prev {
            return Err(ModelError::BadBranch(format!("`{id}` does not follow its parent")));
        }
        prev = Some(idx);
        let n = tree.node(idx);
        posts.push(PathPost {
            tree_id: tree.tree_id().to_owned(),
            node_id: n.node_id.clone(),
            text: n.text.clone(),
            gold: n.is_labeled().then_some(n.labels),
        });
    }
    parse_posts(stack, &posts, mode)
}

/// Parse a root-first sequence of posts online: post `i` only sees posts
/// `0..=i`. Gold mode requires gold labels wherever the feature config
/// reads them.
pub fn parse_posts(stack: &TagStack, posts: &[PathPost], mode: ContextMode) -> Result<Vec<LabelSet>, ModelError> {
    let feats: Vec<PostFeatures> = posts
        .iter()
        .map(|p| stack.post_features(&p.tree_id, &p.node_id, &p.text))
        .collect();
    let config = stack.config();
    let depth = config.label_sequence_depth;
    let span = stack.history_len();
    let mut out: Vec<LabelSet> = Vec::with_capacity(posts.len());
    for i in 0..posts.len() {
        let chain: Vec<usize> = (i.saturating_sub(span - 1)..=i).rev().collect();
        let post_feats: Vec<&PostFeatures> = chain.iter().map(|&k| &feats[k]).collect();
        let labels = match mode {
            ContextMode::Predicted => {
                let previous = chain[1..].iter().map(|&k| out[k]).collect();
                stack.predict_one(&post_feats, previous)?
            }
            ContextMode::Gold => {
                let gold_of = |k: usize| {
                    posts[k]
                        .gold
                        .ok_or_else(|| ModelError::MissingGold(posts[k].node_id.clone()))
                };
                let previous = chain[1..]
                    .iter()
                    .take(depth)
                    .map(|&k| gold_of(k))
                    .collect::<Result<Vec<_>, _>>()?;
                let collocated = if config.use_collocation {
                    gold_of(i)?
                } else {
                    LabelSet::empty()
                };
                let ctx = LabelContext { previous, collocated };
                stack.predict_vector(&stack.vector(&post_feats, &ctx)?)?
            }
        };
        out.push(labels);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{extract_branches, load_trees};
    use crate::features::{BowConfig, Weighting};
    use crate::models::ModelKind;

    const CORPUS: &str = r#"{"tree_id":"a","node_id":"r","parent_id":null,"text":"why would you think so","labels":["RequestClarification"]}
{"tree_id":"a","node_id":"c1","parent_id":"r","text":"because the data shows it","labels":["Clarification"]}
{"tree_id":"a","node_id":"c2","parent_id":"r","text":"no you are wrong","labels":["DirectNo"]}
{"tree_id":"a","node_id":"c3","parent_id":"c1","text":"why though","labels":["RequestClarification"]}
{"tree_id":"b","node_id":"r","parent_id":null,"text":"no that is wrong","labels":["DirectNo"]}
{"tree_id":"b","node_id":"x","parent_id":"r","text":"why do you say that","labels":["RequestClarification"]}
{"tree_id":"b","node_id":"y","parent_id":"x","text":"because of the data","labels":["Clarification","Sources"]}
"#;

    fn trees() -> Vec<ConversationTree> {
        load_trees(CORPUS.as_bytes()).unwrap()
    }

    fn bow() -> FeatureConfig {
        FeatureConfig {
            bow: Some(BowConfig {
                dimension: 20,
                weighting: Weighting::Binary,
                context: 1,
            }),
            ..Default::default()
        }
    }

    fn constant_stack(score: f64, config: &FeatureConfig) -> TagStack {
        let ts = trees();
        let mut s = train_stack(
            &ts,
            config,
            &StackSpec::default(),
            &Resources::default(),
            &[Tag::from_index(0).unwrap()],
            0,
        )
        .unwrap();
        let tags: Vec<Tag> = Tag::all().collect();
        let models = tags
            .iter()
            .map(|_| BinaryModel::constant(ModelSpec::default(), s.extractor.width(), score))
            .collect();
        s.tags.clone_from(&tags);
        s.models = models;
        s
    }

    #[test]
    fn one_model_per_tag() {
        let all: Vec<Tag> = Tag::all().collect();
        let s = train_stack(&trees(), &bow(), &StackSpec::default(), &Resources::default(), &all, 1).unwrap();
        assert_eq!(s.models().len(), 31);
        assert_eq!(s.metadata().num_examples, 7);
        assert!(s
            .metadata()
            .degenerate_tags
            .contains(&Tag::from_name("Sarcasm").unwrap()));
    }

    #[test]
    fn constant_positive_tags_everything() {
        let s = constant_stack(1.0, &bow());
        for t in trees() {
            for labels in predict_tree(&s, &t, ContextMode::Predicted).unwrap() {
                assert_eq!(labels, LabelSet::full());
            }
        }
    }

    #[test]
    fn cue_words_are_learned() {
        let tags: Vec<Tag> = ["RequestClarification", "Clarification", "DirectNo"]
            .iter()
            .map(|n| Tag::from_name(n).unwrap())
            .collect();
        let spec = StackSpec::uniform(ModelSpec {
            epochs: 300,
            batch_size: 4,
            l2: 0.0,
            ..ModelSpec::of_kind(ModelKind::LogisticRegression)
        });
        let ts = trees();
        let s = train_stack(&ts, &bow(), &spec, &Resources::default(), &tags, 3).unwrap();
        for t in &ts {
            let pred = predict_tree(&s, t, ContextMode::Predicted).unwrap();
            for (p, n) in pred.iter().zip(t.nodes()) {
                let want: LabelSet = n.labels.iter().filter(|t| tags.contains(t)).collect();
                assert_eq!(*p, want, "{}", n.node_id);
            }
        }
    }

    #[test]
    fn branch_matches_tree_prediction() {
        let config = FeatureConfig {
            label_sequence_depth: 2,
            use_collocation: true,
            ..bow()
        };
        let all: Vec<Tag> = Tag::all().collect();
        let ts = trees();
        let s = train_stack(&ts, &config, &StackSpec::default(), &Resources::default(), &all, 5).unwrap();
        for t in &ts {
            for mode in [ContextMode::Gold, ContextMode::Predicted] {
                let whole = predict_tree(&s, t, mode).unwrap();
                for b in extract_branches(t) {
                    let got = parse_branch(&s, t, &b, mode).unwrap();
                    for (id, labels) in b.node_ids.iter().zip(got) {
                        assert_eq!(whole[t.position(id).unwrap()], labels);
                    }
                }
            }
        }
    }

    #[test]
    fn gold_mode_needs_gold() {
        let config = FeatureConfig {
            label_sequence_depth: 1,
            ..bow()
        };
        let s = constant_stack(0.0, &config);
        let post = |id: &str, gold| PathPost {
            tree_id: "t".into(),
            node_id: id.into(),
            text: "hello".into(),
            gold,
        };
        let posts = [post("r", None), post("c", None)];
        assert!(parse_posts(&s, &posts, ContextMode::Predicted).is_ok());
        assert!(matches!(
            parse_posts(&s, &posts, ContextMode::Gold),
            Err(ModelError::MissingGold(id)) if id == "r"
        ));
    }

    #[test]
    fn rejects_broken_branch() {
        let ts = trees();
        let s = constant_stack(0.0, &bow());
        let b = Branch {
            tree_id: "a".into(),
            node_ids: vec!["r".into(), "c3".into()],
        };
        assert!(matches!(
            parse_branch(&s, &ts[0], &b, ContextMode::Predicted),
            Err(ModelError::BadBranch(_))
        ));
    }
}
