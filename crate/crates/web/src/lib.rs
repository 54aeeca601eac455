//! Browser demo: generate a synthetic discussion corpus, inspect its tag
//! statistics as heatmaps, and parse a thread typed into the page.
//!
//! The [`Demo`] logic is plain Rust so it can be tested natively; the
//! wasm-bindgen wrappers only move JSON strings across the boundary.

use disparse::analytics::{labeled_sets, pmi_matrix, tag_priors, transition_matrix, Priors, TagMatrix};
use disparse::features::{tokenize as tokenize_text, FeatureConfig, Resources};
use disparse::models::{parse_posts, train_stack, ContextMode, PathPost, StackSpec, TagStack};
use disparse::synth::{generate_synthetic, SyntheticSpec};
use disparse::{Tag, NUM_TAGS};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Summary {
    trees: usize,
    nodes: usize,
    labeled: usize,
    feature_width: usize,
    features: String,
    cues: Vec<(&'static str, String)>,
    dependencies: Vec<(&'static str, &'static str)>,
}

#[derive(Serialize)]
struct MatrixView<'a> {
    tags: Vec<&'static str>,
    values: &'a [Vec<f64>],
    support: &'a [Vec<u64>],
    empty_rows: Vec<&'static str>,
}

#[derive(Serialize)]
struct ParsedPost {
    text: String,
    tokens: Vec<String>,
    labels: Vec<&'static str>,
}

pub struct Demo {
    stack: TagStack,
    summary: String,
    priors: Priors,
    pmi: TagMatrix,
    transitions: TagMatrix,
}

fn demo_features() -> FeatureConfig {
    serde_json::from_str(r#"{"bow": {"dimension": 400}, "label_sequence_depth": 1, "use_collocation": true}"#)
        .expect("static config")
}

impl Demo {
    pub fn build(num_trees: usize, seed: u64) -> Result<Demo, String> {
        let spec = SyntheticSpec::with_dependencies(num_trees.max(2), seed);
        let corpus = generate_synthetic(&spec).map_err(|e| e.to_string())?;
        let labeled = labeled_sets(&corpus.trees);
        let priors = tag_priors(&labeled).map_err(|e| e.to_string())?;
        let pmi = pmi_matrix(&labeled).map_err(|e| e.to_string())?;
        let transitions = transition_matrix(&corpus.trees);
        let features = demo_features();
        let tags: Vec<Tag> = Tag::all().collect();
        let stack = train_stack(
            &corpus.trees,
            &features,
            &StackSpec::default(),
            &Resources::default(),
            &tags,
            seed,
        )
        .map_err(|e| e.to_string())?;
        let summary = Summary {
            trees: corpus.truth.num_trees,
            nodes: corpus.truth.num_nodes,
            labeled: corpus.truth.num_labeled_nodes,
            feature_width: stack.extractor().width(),
            features: features.notation(),
            cues: spec
                .tags
                .iter()
                .filter_map(|c| c.cue.clone().map(|w| (c.tag.name(), w)))
                .collect(),
            dependencies: SyntheticSpec::DEPENDENCY_PAIRS.iter().map(|&(a, b)| (a, b)).collect(),
        };
        Ok(Demo {
            stack,
            summary: serde_json::to_string(&summary).map_err(|e| e.to_string())?,
            priors,
            pmi,
            transitions,
        })
    }

    pub fn summary_json(&self) -> String {
        self.summary.clone()
    }

    /// `kind` is `pmi` or `transitions`.
    pub fn matrix_json(&self, kind: &str) -> Result<String, String> {
        let m = match kind {
            "pmi" => &self.pmi,
            "transitions" => &self.transitions,
            other => return Err(format!("unknown matrix `{other}`")),
        };
        let view = MatrixView {
            tags: Tag::all().map(Tag::name).collect(),
            values: &m.values,
            support: &m.support,
            empty_rows: m.empty_rows.iter().map(|t| t.name()).collect(),
        };
        serde_json::to_string(&view).map_err(|e| e.to_string())
    }

    pub fn priors(&self) -> [f64; NUM_TAGS] {
        self.priors.0
    }

    /// Label a linear thread, one post per non-empty line, root first.
    /// Each post sees only the posts above it.
    pub fn parse_thread(&self, text: &str) -> Result<String, String> {
        let posts: Vec<PathPost> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| PathPost {
                tree_id: "demo".into(),
                node_id: format!("p{i}"),
                text: l.to_owned(),
                gold: None,
            })
            .collect();
        let labels = parse_posts(&self.stack, &posts, ContextMode::Predicted).map_err(|e| e.to_string())?;
        let out: Vec<ParsedPost> = posts
            .into_iter()
            .zip(labels)
            .map(|(p, l)| ParsedPost {
                tokens: tokenize_text(&p.text),
                text: p.text,
                labels: l.names(),
            })
            .collect();
        serde_json::to_string(&out).map_err(|e| e.to_string())
    }
}

#[wasm_bindgen(js_name = Demo)]
pub struct WasmDemo(Demo);

#[wasm_bindgen(js_class = Demo)]
impl WasmDemo {
    /// Generate `trees` synthetic trees and train a parser on them.
    #[wasm_bindgen(constructor)]
    pub fn new(trees: usize, seed: u32) -> Result<WasmDemo, JsError> {
        Demo::build(trees, seed as u64)
            .map(WasmDemo)
            .map_err(|e| JsError::new(&e))
    }

    pub fn summary(&self) -> String {
        self.0.summary_json()
    }

    pub fn matrix(&self, kind: &str) -> Result<String, JsError> {
        self.0.matrix_json(kind).map_err(|e| JsError::new(&e))
    }

    pub fn priors(&self) -> Vec<f64> {
        self.0.priors().to_vec()
    }

    pub fn parse(&self, text: &str) -> Result<String, JsError> {
        self.0.parse_thread(text).map_err(|e| JsError::new(&e))
    }
}

#[wasm_bindgen]
pub fn tokenize(text: &str) -> String {
    serde_json::to_string(&tokenize_text(text)).unwrap_or_default()
}
