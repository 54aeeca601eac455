//! Feature extraction for an utterance in its branch context.
//!
//! A [`FeatureConfig`] selects blocks; [`FeatureExtractor::fit`] builds the
//! training-dependent resources (vocabulary, scaler) and
//! [`FeatureExtractor::assemble`] concatenates, in a fixed order:
//!
//! 1. bag-of-words blocks, current post first, then its ancestors
//! 2. lexicon category blocks, same ordering
//! 3. averaged word-vector blocks
//! 4. discourse-relation unigram blocks, then bigram blocks
//! 5. label vectors of the preceding posts, parent first
//! 6. the collocation vector of the current post
//!
//! History slots that run past the root are zero.

mod bow;
mod embeddings;
mod lexicon;
mod pdtb;
mod tokenize;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bow::{build_vocabulary, vectorize_bow, Vocabulary, Weighting};
pub use embeddings::{embed_average, WordVectors};
pub use lexicon::{categorize, CategoryLexicon, LexiconEntry, LexiconWeighting};
pub use pdtb::{pdtb_features, PdtbInventory, PdtbSidecar};
pub use tokenize::{tokenize, QUOTE, URL};

use crate::matrix::Matrix;
use crate::tagset::{LabelSet, NUM_TAGS};

/// Longest text context (current post included).
pub const MAX_TEXT_CONTEXT: usize = 4;
/// Longest label history (current post excluded).
pub const MAX_LABEL_DEPTH: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("no training documents")]
    EmptyTraining,
    #[error("{what}, line {line}: {message}")]
    Format {
        what: &'static str,
        line: usize,
        message: String,
    },
    #[error("invalid lexicon entry `{0}`")]
    BadLexiconEntry(String),
    #[error("unknown PDTB tag `{0}`")]
    UnknownPdtbTag(String),
    #[error("{block}: expected width {expected}, found {found}")]
    DimensionMismatch {
        block: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("feature config needs a {0} resource")]
    MissingResource(&'static str),
    #[error("no current post in context")]
    EmptyContext,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BowConfig {
    pub dimension: usize,
    #[serde(default = "default_weighting")]
    pub weighting: Weighting,
    #[serde(default = "one")]
    pub context: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconConfig {
    #[serde(default = "one")]
    pub context: usize,
    #[serde(default)]
    pub weighting: LexiconWeighting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextConfig {
    #[serde(default = "one")]
    pub context: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    None,
    MinMax,
}

fn one() -> usize {
    1
}

fn default_weighting() -> Weighting {
    Weighting::Binary
}

/// Declarative block selection. Text contexts count the current post;
/// `label_sequence_depth` counts preceding posts only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bow: Option<BowConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<LexiconConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<ContextConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdtb_unigrams: Option<ContextConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdtb_bigrams: Option<ContextConfig>,
    #[serde(default)]
    pub label_sequence_depth: usize,
    #[serde(default)]
    pub use_collocation: bool,
    #[serde(default)]
    pub scaling: Scaling,
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let contexts = [
            ("bow", self.bow.map(|b| b.context)),
            ("lexicon", self.lexicon.map(|b| b.context)),
            ("embeddings", self.embeddings.map(|b| b.context)),
            ("pdtb_unigrams", self.pdtb_unigrams.map(|b| b.context)),
            ("pdtb_bigrams", self.pdtb_bigrams.map(|b| b.context)),
        ];
        for (name, ctx) in contexts {
            if let Some(c) = ctx {
                if !(1..=MAX_TEXT_CONTEXT).contains(&c) {
                    return Err(FeatureError::InvalidConfig(format!(
                        "{name} context {c} outside 1..={MAX_TEXT_CONTEXT}"
                    )));
                }
            }
        }
        if self.label_sequence_depth > MAX_LABEL_DEPTH {
            return Err(FeatureError::InvalidConfig(format!(
                "label_sequence_depth {} outside 0..={MAX_LABEL_DEPTH}",
                self.label_sequence_depth
            )));
        }
        if let Some(b) = self.bow {
            if b.dimension == 0 {
                return Err(FeatureError::InvalidConfig("bow dimension must be positive".into()));
            }
        }
        let any_text = contexts.iter().any(|(_, c)| c.is_some());
        if !any_text && self.label_sequence_depth == 0 && !self.use_collocation {
            return Err(FeatureError::InvalidConfig("no feature block enabled".into()));
        }
        Ok(())
    }

    /// Posts of text context needed, current included.
    pub fn text_context(&self) -> usize {
        [
            self.bow.map(|b| b.context),
            self.lexicon.map(|b| b.context),
            self.embeddings.map(|b| b.context),
            self.pdtb_unigrams.map(|b| b.context),
            self.pdtb_bigrams.map(|b| b.context),
        ]
        .into_iter()
        .flatten()
        .max()
        .unwrap_or(1)
    }

    pub fn uses_labels(&self) -> bool {
        self.label_sequence_depth > 0 || self.use_collocation
    }

    /// Short ablation-table notation, e.g. `Tc+T2+L1+B1+PDB1`.
    pub fn notation(&self) -> String {
        let mut parts = Vec::new();
        if self.use_collocation {
            parts.push("Tc".to_owned());
        }
        if self.label_sequence_depth > 0 {
            parts.push(format!("T{}", self.label_sequence_depth));
        }
        if let Some(b) = self.lexicon {
            parts.push(format!("L{}", b.context));
        }
        if let Some(b) = self.bow {
            parts.push(format!("B{}", b.context));
        }
        if let Some(b) = self.embeddings {
            parts.push(format!("E{}", b.context));
        }
        if let Some(b) = self.pdtb_bigrams {
            parts.push(format!("PDB{}", b.context));
        }
        if let Some(b) = self.pdtb_unigrams {
            parts.push(format!("PDU{}", b.context));
        }
        parts.join("+")
    }
}

/// The 22 single-model ablation rows over collocation, two-post label
/// history, lexicon, bag-of-words, relation bigrams and two-post relation
/// unigrams, all min-max scaled.
pub fn ablation_grid(bow_dimension: usize, weighting: Weighting) -> Vec<FeatureConfig> {
    // (Tc, T2, L1, B1, PDB1, PDU2)
    const ROWS: [[bool; 6]; 22] = [
        [false, false, false, false, true, true],
        [false, false, true, false, false, false],
        [false, false, false, true, false, false],
        [false, false, true, true, false, false],
        [false, false, true, true, true, false],
        [false, false, true, true, true, true],
        [false, true, false, false, false, false],
        [false, true, true, false, false, false],
        [false, true, true, false, true, false],
        [false, true, true, false, true, true],
        [false, true, true, true, false, false],
        [false, true, true, true, false, true],
        [false, true, true, true, true, false],
        [false, true, true, true, true, true],
        [true, true, false, false, false, false],
        [true, true, true, false, false, false],
        [true, true, true, false, false, true],
        [true, true, true, false, true, true],
        [true, true, true, true, false, false],
        [true, true, true, true, false, true],
        [true, true, true, true, true, true],
        [true, true, true, true, true, false],
    ];
    ROWS.iter()
        .map(|r| FeatureConfig {
            use_collocation: r[0],
            label_sequence_depth: if r[1] { 2 } else { 0 },
            lexicon: r[2].then_some(LexiconConfig {
                context: 1,
                weighting: LexiconWeighting::Proportion,
            }),
            bow: r[3].then_some(BowConfig {
                dimension: bow_dimension,
                weighting,
                context: 1,
            }),
            pdtb_bigrams: r[4].then_some(ContextConfig { context: 1 }),
            pdtb_unigrams: r[5].then_some(ContextConfig { context: 2 }),
            embeddings: None,
            scaling: Scaling::MinMax,
        })
        .collect()
}

/// The best single-model row: Tc, T2, L1, B1, PDB1.
pub fn best_config(bow_dimension: usize, weighting: Weighting) -> FeatureConfig {
    ablation_grid(bow_dimension, weighting)
        .pop()
        .expect("grid is non-empty")
}

// ---------------------------------------------------------------------------
// Layout

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Bow,
    Lexicon,
    Embedding,
    PdtbUnigram,
    PdtbBigram,
    LabelHistory,
    Collocation,
}

/// Position of one block inside an assembled vector. `slot` is the distance
/// from the current post (0 = current, 1 = parent, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub slot: usize,
    pub offset: usize,
    pub width: usize,
}

impl Block {
    pub fn name(&self) -> String {
        let base = match self.kind {
            BlockKind::Bow => "bow",
            BlockKind::Lexicon => "lexicon",
            BlockKind::Embedding => "embedding",
            BlockKind::PdtbUnigram => "pdtb_unigram",
            BlockKind::PdtbBigram => "pdtb_bigram",
            BlockKind::LabelHistory => "labels",
            BlockKind::Collocation => return "collocation".into(),
        };
        if self.slot == 0 {
            format!("{base}[t]")
        } else {
            format!("{base}[t-{}]", self.slot)
        }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.width
    }
}

/// An assembled vector with its block map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub blocks: Arc<Vec<Block>>,
}

impl FeatureVector {
    pub fn width(&self) -> usize {
        self.values.len()
    }

    pub fn block(&self, kind: BlockKind, slot: usize) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|b| b.kind == kind && b.slot == slot)
            .map(|b| &self.values[b.range()])
    }
}

// ---------------------------------------------------------------------------
// Resources and fitted state

/// Externally supplied resources; training-independent.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub lexicon: Option<CategoryLexicon>,
    pub vectors: Option<Arc<WordVectors>>,
    pub pdtb: Option<Arc<PdtbSidecar>>,
}

/// Column-wise min-max scaler fitted on training vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &Matrix) -> MinMaxScaler {
        let mut min = vec![f64::INFINITY; rows.cols()];
        let mut max = vec![f64::NEG_INFINITY; rows.cols()];
        for row in rows.iter_rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        if rows.rows() == 0 {
            min.fill(0.0);
            max.fill(0.0);
        }
        MinMaxScaler { min, max }
    }

    /// Constant columns map to zero. With `clip`, results are forced into [0, 1].
    pub fn transform(&self, x: &mut [f64], clip: bool) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.min).zip(&self.max) {
            let span = hi - lo;
            *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
            if clip {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
}

/// Text-derived blocks of one post, computed once and reused for every
/// context it appears in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PostFeatures {
    pub bow: Vec<f64>,
    pub lexicon: Vec<f64>,
    pub embedding: Vec<f64>,
    pub pdtb_unigrams: Vec<f64>,
    pub pdtb_bigrams: Vec<f64>,
}

/// Serializable portion of a fitted extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorState {
    pub config: FeatureConfig,
    pub vocabulary: Option<Vocabulary>,
    pub lexicon: Option<CategoryLexicon>,
    pub pdtb_inventory: Option<PdtbInventory>,
    pub embedding_dimension: Option<usize>,
    pub scaler: Option<MinMaxScaler>,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    vocabulary: Option<Vocabulary>,
    lexicon: Option<CategoryLexicon>,
    vectors: Option<Arc<WordVectors>>,
    pdtb: Option<Arc<PdtbSidecar>>,
    pdtb_inventory: Option<PdtbInventory>,
    embedding_dimension: Option<usize>,
    scaler: Option<MinMaxScaler>,
    blocks: Arc<Vec<Block>>,
    width: usize,
}

impl FeatureExtractor {
    /// Fit training-dependent resources. `train_docs` are the tokenized
    /// training posts.
    pub fn fit<D: AsRef<[String]>>(
        config: &FeatureConfig,
        resources: &Resources,
        train_docs: &[D],
    ) -> Result<FeatureExtractor, FeatureError> {
        config.validate()?;
        let vocabulary = match config.bow {
            Some(b) => Some(build_vocabulary(train_docs, b.dimension, b.weighting)?),
            None => None,
        };
        let lexicon = match config.lexicon {
            Some(_) => Some(
                resources
                    .lexicon
                    .clone()
                    .ok_or(FeatureError::MissingResource("lexicon"))?,
            ),
            None => None,
        };
        let vectors = match config.embeddings {
            Some(_) => Some(
                resources
                    .vectors
                    .clone()
                    .ok_or(FeatureError::MissingResource("word vector"))?,
            ),
            None => None,
        };
        let needs_pdtb = config.pdtb_unigrams.is_some() || config.pdtb_bigrams.is_some();
        let pdtb = if needs_pdtb {
            Some(
                resources
                    .pdtb
                    .clone()
                    .ok_or(FeatureError::MissingResource("PDTB sidecar"))?,
            )
        } else {
            None
        };
        let state = ExtractorState {
            config: config.clone(),
            vocabulary,
            lexicon,
            pdtb_inventory: pdtb.as_ref().map(|p| p.inventory().clone()),
            embedding_dimension: vectors.as_ref().map(|v| v.dimension()),
            scaler: None,
            blocks: Vec::new(),
        };
        Self::from_state(state, vectors, pdtb)
    }

    /// Rebuild from saved state. Word vectors are required when the config
    /// embeds; a missing sidecar yields zero relation blocks.
    pub fn from_state(
        state: ExtractorState,
        vectors: Option<Arc<WordVectors>>,
        pdtb: Option<Arc<PdtbSidecar>>,
    ) -> Result<FeatureExtractor, FeatureError> {
        let config = state.config;
        config.validate()?;
        if config.bow.is_some() && state.vocabulary.is_none() {
            return Err(FeatureError::MissingResource("vocabulary"));
        }
        if config.lexicon.is_some() && state.lexicon.is_none() {
            return Err(FeatureError::MissingResource("lexicon"));
        }
        if config.embeddings.is_some() {
            let v = vectors.as_ref().ok_or(FeatureError::MissingResource("word vector"))?;
            if let Some(d) = state.embedding_dimension {
                if d != v.dimension() {
                    return Err(FeatureError::DimensionMismatch {
                        block: "embeddings".into(),
                        expected: d,
                        found: v.dimension(),
                    });
                }
            }
        }
        let needs_pdtb = config.pdtb_unigrams.is_some() || config.pdtb_bigrams.is_some();
        let inventory = match (&state.pdtb_inventory, &pdtb) {
            (Some(inv), Some(p)) if inv != p.inventory() => {
                return Err(FeatureError::DimensionMismatch {
                    block: "pdtb".into(),
                    expected: inv.len(),
                    found: p.inventory().len(),
                })
            }
            (Some(inv), _) => Some(inv.clone()),
            (None, Some(p)) => Some(p.inventory().clone()),
            (None, None) if needs_pdtb => return Err(FeatureError::MissingResource("PDTB inventory")),
            (None, None) => None,
        };

        let mut ex = FeatureExtractor {
            embedding_dimension: vectors.as_ref().map(|v| v.dimension()).or(state.embedding_dimension),
            config,
            vocabulary: state.vocabulary,
            lexicon: state.lexicon,
            vectors,
            pdtb,
            pdtb_inventory: inventory,
            scaler: None,
            blocks: Arc::new(Vec::new()),
            width: 0,
        };
        ex.build_layout();
        if let Some(s) = state.scaler {
            if s.min.len() != ex.width {
                return Err(FeatureError::DimensionMismatch {
                    block: "scaler".into(),
                    expected: ex.width,
                    found: s.min.len(),
                });
            }
            ex.scaler = Some(s);
        }
        Ok(ex)
    }

    pub fn state(&self) -> ExtractorState {
        ExtractorState {
            config: self.config.clone(),
            vocabulary: self.vocabulary.clone(),
            lexicon: self.lexicon.clone(),
            pdtb_inventory: self.pdtb_inventory.clone(),
            embedding_dimension: self.embedding_dimension,
            scaler: self.scaler.clone(),
            blocks: self.blocks.to_vec(),
        }
    }

    fn build_layout(&mut self) {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |kind, slots: usize, width: usize, first_slot: usize| {
            for slot in first_slot..first_slot + slots {
                blocks.push(Block {
                    kind,
                    slot,
                    offset,
                    width,
                });
                offset += width;
            }
        };
        let c = &self.config;
        if let (Some(b), Some(v)) = (c.bow, &self.vocabulary) {
            push(BlockKind::Bow, b.context, v.dimension(), 0);
        }
        if let (Some(b), Some(l)) = (c.lexicon, &self.lexicon) {
            push(BlockKind::Lexicon, b.context, l.len(), 0);
        }
        if let (Some(b), Some(d)) = (c.embeddings, self.embedding_dimension) {
            push(BlockKind::Embedding, b.context, d, 0);
        }
        let n = self.pdtb_inventory.as_ref().map_or(0, PdtbInventory::len);
        if let Some(b) = c.pdtb_unigrams {
            push(BlockKind::PdtbUnigram, b.context, n, 0);
        }
        if let Some(b) = c.pdtb_bigrams {
            push(BlockKind::PdtbBigram, b.context, n * n, 0);
        }
        push(BlockKind::LabelHistory, c.label_sequence_depth, NUM_TAGS, 1);
        if c.use_collocation {
            push(BlockKind::Collocation, 1, NUM_TAGS, 0);
        }
        self.width = offset;
        self.blocks = Arc::new(blocks);
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        self.vocabulary.as_ref()
    }

    pub fn scaler(&self) -> Option<&MinMaxScaler> {
        self.scaler.as_ref()
    }

    /// Offset of the collocation block, if enabled.
    pub fn collocation_offset(&self) -> Option<usize> {
        self.blocks
            .iter()
            .find(|b| b.kind == BlockKind::Collocation)
            .map(|b| b.offset)
    }

    /// Text blocks of one post. Only blocks the config enables are filled.
    pub fn post_features(&self, tree_id: &str, node_id: &str, tokens: &[String]) -> PostFeatures {
        let c = &self.config;
        let mut out = PostFeatures::default();
        if let Some(v) = &self.vocabulary {
            out.bow = vec![0.0; v.dimension()];
            bow::vectorize_into(tokens, v, &mut out.bow);
        }
        if let (Some(b), Some(l)) = (c.lexicon, &self.lexicon) {
            out.lexicon = vec![0.0; l.len()];
            lexicon::categorize_into(tokens, l, b.weighting, &mut out.lexicon);
        }
        if let Some(d) = self.embedding_dimension.filter(|_| c.embeddings.is_some()) {
            out.embedding = vec![0.0; d];
            if let Some(v) = &self.vectors {
                embeddings::embed_into(tokens, v, &mut out.embedding);
            }
        }
        let n = self.pdtb_inventory.as_ref().map_or(0, PdtbInventory::len);
        if c.pdtb_unigrams.is_some() {
            out.pdtb_unigrams = vec![0.0; n];
        }
        if c.pdtb_bigrams.is_some() {
            out.pdtb_bigrams = vec![0.0; n * n];
        }
        if let Some(seq) = self.pdtb.as_ref().and_then(|p| p.sequence(tree_id, node_id)) {
            pdtb::count_into(seq, n, &mut out.pdtb_unigrams, &mut out.pdtb_bigrams);
        }
        out
    }

    /// Concatenate blocks without scaling.
    ///
    /// `posts` holds the current post first, then its ancestors nearest
    /// first; `previous` holds the label sets of the ancestors in the same
    /// order. Entries beyond the configured context are ignored.
    pub fn assemble_unscaled(
        &self,
        posts: &[&PostFeatures],
        previous: &[LabelSet],
        collocation: LabelSet,
    ) -> Result<Vec<f64>, FeatureError> {
        if posts.is_empty() {
            return Err(FeatureError::EmptyContext);
        }
        let mut out = vec![0.0; self.width];
        for block in self.blocks.iter() {
            let dst = &mut out[block.range()];
            let src: Option<&[f64]> = match block.kind {
                BlockKind::Bow => posts.get(block.slot).map(|p| p.bow.as_slice()),
                BlockKind::Lexicon => posts.get(block.slot).map(|p| p.lexicon.as_slice()),
                BlockKind::Embedding => posts.get(block.slot).map(|p| p.embedding.as_slice()),
                BlockKind::PdtbUnigram => posts.get(block.slot).map(|p| p.pdtb_unigrams.as_slice()),
                BlockKind::PdtbBigram => posts.get(block.slot).map(|p| p.pdtb_bigrams.as_slice()),
                BlockKind::LabelHistory => {
                    if let Some(set) = previous.get(block.slot - 1) {
                        set.write_vector(dst);
                    }
                    continue;
                }
                BlockKind::Collocation => {
                    collocation.write_vector(dst);
                    continue;
                }
            };
            if let Some(src) = src {
                if src.len() != block.width {
                    return Err(FeatureError::DimensionMismatch {
                        block: block.name(),
                        expected: block.width,
                        found: src.len(),
                    });
                }
                dst.copy_from_slice(src);
            }
        }
        Ok(out)
    }

    /// Assemble and, when a scaler is fitted, scale and clip into [0, 1].
    pub fn assemble(
        &self,
        posts: &[&PostFeatures],
        previous: &[LabelSet],
        collocation: LabelSet,
    ) -> Result<FeatureVector, FeatureError> {
        let mut values = self.assemble_unscaled(posts, previous, collocation)?;
        if let Some(s) = &self.scaler {
            s.transform(&mut values, true);
        }
        Ok(FeatureVector {
            values,
            blocks: Arc::clone(&self.blocks),
        })
    }

    /// Fit min-max parameters on training rows and scale them in place.
    /// A no-op unless the config asks for min-max scaling.
    pub fn fit_scaler(&mut self, rows: &mut Matrix) {
        if self.config.scaling != Scaling::MinMax {
            return;
        }
        let scaler = MinMaxScaler::fit(rows);
        for row in rows.iter_rows_mut() {
            scaler.transform(row, false);
        }
        self.scaler = Some(scaler);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn bow_config(d: usize, h: usize) -> FeatureConfig {
        FeatureConfig {
            bow: Some(BowConfig {
                dimension: d,
                weighting: Weighting::Binary,
                context: h,
            }),
            ..Default::default()
        }
    }

    #[test]
    fn root_post_without_history() {
        let docs = vec![toks("alpha beta"), toks("alpha gamma")];
        let ex = FeatureExtractor::fit(&bow_config(2, 1), &Resources::default(), &docs).unwrap();
        let p = ex.post_features("t", "r", &toks("alpha"));
        let v = ex.assemble(&[&p], &[], LabelSet::empty()).unwrap();
        assert_eq!(v.width(), 2);
        assert_eq!(v.values, vec![1.0, 0.0]);
    }

    #[test]
    fn root_post_with_padded_history() {
        let docs = vec![toks("alpha beta"), toks("alpha gamma")];
        let ex = FeatureExtractor::fit(&bow_config(2, 2), &Resources::default(), &docs).unwrap();
        let p = ex.post_features("t", "r", &toks("alpha beta"));
        let v = ex.assemble(&[&p], &[], LabelSet::empty()).unwrap();
        assert_eq!(v.width(), 4);
        assert_eq!(v.block(BlockKind::Bow, 1), Some(&[0.0, 0.0][..]));
        assert_eq!(ex.blocks()[1].name(), "bow[t-1]");
    }

    #[test]
    fn config_validation() {
        assert!(FeatureConfig::default().validate().is_err());
        assert!(bow_config(10, 5).validate().is_err());
        assert!(bow_config(0, 1).validate().is_err());
        let labels_only = FeatureConfig {
            use_collocation: true,
            ..Default::default()
        };
        assert!(labels_only.validate().is_ok());
        let deep = FeatureConfig {
            label_sequence_depth: 4,
            ..labels_only
        };
        assert!(deep.validate().is_err());
    }

    #[test]
    fn config_json_shape() {
        let json = r#"{"bow":{"dimension":300,"weighting":"tfidf","context":2},
                       "label_sequence_depth":2,"use_collocation":true,"scaling":"min_max"}"#;
        let c: FeatureConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.bow.unwrap().weighting, Weighting::TfIdf);
        assert_eq!(c.notation(), "Tc+T2+B2");
        assert!(serde_json::from_str::<FeatureConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn missing_resources_rejected() {
        let c = FeatureConfig {
            lexicon: Some(LexiconConfig {
                context: 1,
                weighting: LexiconWeighting::Proportion,
            }),
            ..Default::default()
        };
        let err = FeatureExtractor::fit(&c, &Resources::default(), &[toks("a")]).unwrap_err();
        assert!(matches!(err, FeatureError::MissingResource("lexicon")));
    }

    #[test]
    fn grid_has_22_rows_ending_in_best() {
        let grid = ablation_grid(1000, Weighting::Binary);
        assert_eq!(grid.len(), 22);
        assert_eq!(grid[2].notation(), "B1");
        assert_eq!(best_config(1000, Weighting::Binary).notation(), "Tc+T2+L1+B1+PDB1");
        assert!(grid.iter().all(|c| c.validate().is_ok()));
    }

    #[test]
    fn scaler_fits_and_clips() {
        let mut m = Matrix::from_rows(vec![vec![0.0, 5.0, 2.0], vec![4.0, 5.0, 6.0]]);
        let docs = vec![toks("a")];
        let mut ex = FeatureExtractor::fit(
            &FeatureConfig {
                scaling: Scaling::MinMax,
                ..bow_config(3, 1)
            },
            &Resources::default(),
            &docs,
        )
        .unwrap();
        ex.fit_scaler(&mut m);
        assert_eq!(m.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[1.0, 0.0, 1.0]);
        let mut x = vec![8.0, 1.0, -3.0];
        ex.scaler().unwrap().transform(&mut x, true);
        assert_eq!(x, vec![1.0, 0.0, 0.0]);
    }
}
