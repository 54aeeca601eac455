//! On-disk model bundle.
//!
//! A bundle directory holds `stack.json` (tag order, specs, feature state
//! including the scaler) and one `<tag>.bin` per model. Each `.bin` file is
//!
//! ```text
//! magic   4 bytes  "DSPM"
//! version u32 LE
//! width   u64 LE   model input width
//! count   u64 LE   number of values
//! values  count x f64 LE
//! ```
//!
//! Value order per kind: constant `[score]`; logistic `weights, bias`;
//! naive Bayes `log_prior[2], log_on[neg], log_on[pos], log_off[neg],
//! log_off[pos]`; decision tree six values per node `is_split, feature,
//! threshold, left, right, value`; feed-forward the flat parameter vector,
//! with layer sizes kept in `stack.json`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::feedforward::Network;
use super::logistic::LogisticParams;
use super::naive_bayes::NaiveBayesParams;
use super::stack::{StackMetadata, TagStack};
use super::tree::{DecisionTree, TreeNode};
use super::{BinaryModel, ModelError, ModelSpec, Params};
use crate::features::{ExtractorState, FeatureError, FeatureExtractor, PdtbSidecar, WordVectors};
use crate::tagset::Tag;

pub const BUNDLE_MAGIC: &[u8; 4] = b"DSPM";
const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 8 + 8;

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("stack.json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{file}: {message}")]
    Corrupt { file: String, message: String },
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ParamKind {
    Constant,
    Logistic,
    NaiveBayes,
    DecisionTree,
    FeedForward,
}

#[derive(Serialize, Deserialize)]
struct ModelEntry {
    tag: Tag,
    file: String,
    params: ParamKind,
    degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer_sizes: Option<Vec<usize>>,
    spec: ModelSpec,
}

#[derive(Serialize, Deserialize)]
struct StackFile {
    format: String,
    version: u32,
    features: ExtractorState,
    metadata: StackMetadata,
    models: Vec<ModelEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn flatten(model: &BinaryModel) -> (ParamKind, Vec<f64>, Option<Vec<usize>>) {
    match &model.params {
        Params::Constant(p) => (ParamKind::Constant, vec![*p], None),
        Params::Logistic(p) => (ParamKind::Logistic, p.flat(), None),
        Params::NaiveBayes(p) => {
            let mut v = p.log_prior.to_vec();
            for part in [&p.log_on[0], &p.log_on[1], &p.log_off[0], &p.log_off[1]] {
                v.extend_from_slice(part);
            }
            (ParamKind::NaiveBayes, v, None)
        }
        Params::Tree(t) => {
            let mut v = Vec::with_capacity(6 * t.nodes.len());
            for n in &t.nodes {
                match *n {
                    TreeNode::Leaf { value } => v.extend([0.0, 0.0, 0.0, 0.0, 0.0, value]),
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => v.extend([1.0, feature as f64, threshold, left as f64, right as f64, 0.0]),
                }
            }
            (ParamKind::DecisionTree, v, None)
        }
        Params::FeedForward(n) => (ParamKind::FeedForward, n.params().to_vec(), Some(n.sizes().to_vec())),
    }
}

fn encode(width: usize, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * values.len());
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(width as u64).to_le_bytes());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(file: &str, bytes: &[u8]) -> Result<(usize, Vec<f64>), BundleError> {
    let corrupt = |m: &str| BundleError::Corrupt {
        file: file.to_owned(),
        message: m.to_owned(),
    };
    if bytes.len() < HEADER || &bytes[..4] != BUNDLE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let width = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let body = &bytes[HEADER..];
    if body.len() != count.checked_mul(8).ok_or_else(|| corrupt("bad count"))? {
        return Err(corrupt("length does not match header"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((width, values))
}

fn unflatten(entry: &ModelEntry, width: usize, v: Vec<f64>) -> Result<Params, BundleError> {
    let corrupt = |m: &str| BundleError::Corrupt {
        file: entry.file.clone(),
        message: m.to_owned(),
    };
    Ok(match entry.params {
        ParamKind::Constant => match v.as_slice() {
            [p] => Params::Constant(*p),
            _ => return Err(corrupt("constant model needs one value")),
        },
        ParamKind::Logistic => {
            if v.len() != width + 1 {
                return Err(corrupt("logistic length"));
            }
            Params::Logistic(LogisticParams::from_flat(&v))
        }
        ParamKind::NaiveBayes => {
            if v.len() != 2 + 4 * width {
                return Err(corrupt("naive Bayes length"));
            }
            let part = |k: usize| v[2 + k * width..2 + (k + 1) * width].to_vec();
            Params::NaiveBayes(NaiveBayesParams {
                log_prior: [v[0], v[1]],
                log_on: [part(0), part(1)],
                log_off: [part(2), part(3)],
            })
        }
        ParamKind::DecisionTree => {
            if v.is_empty() || !v.len().is_multiple_of(6) {
                return Err(corrupt("tree length"));
            }
            let n = v.len() / 6;
            let mut nodes = Vec::with_capacity(n);
            for c in v.chunks_exact(6) {
                nodes.push(if c[0] == 0.0 {
                    TreeNode::Leaf { value: c[5] }
                } else {
                    let (feature, left, right) = (c[1] as usize, c[3] as usize, c[4] as usize);
                    if feature >= width || left >= n || right >= n {
                        return Err(corrupt("tree index out of range"));
                    }
                    TreeNode::Split {
                        feature,
                        threshold: c[2],
                        left,
                        right,
                    }
                });
            }
            Params::Tree(DecisionTree { nodes })
        }
        ParamKind::FeedForward => {
            let sizes = entry
                .layer_sizes
                .clone()
                .ok_or_else(|| corrupt("missing layer sizes"))?;
            if sizes.first() != Some(&width) {
                return Err(corrupt("input layer does not match width"));
            }
            Params::FeedForward(Network::from_parts(sizes, v).ok_or_else(|| corrupt("network shape"))?)
        }
    })
}

/// Write `stack` into `dir`, creating it if needed.
pub fn save_bundle(stack: &TagStack, dir: &Path) -> Result<(), BundleError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut models = Vec::new();
    for (&tag, model) in stack.tags().iter().zip(stack.models()) {
        let (kind, values, layer_sizes) = flatten(model);
        let file = format!("{}.bin", tag.name());
        let path = dir.join(&file);
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(&encode(model.width, &values)).map_err(io_err(&path))?;
        models.push(ModelEntry {
            tag,
            file,
            params: kind,
            degenerate: model.degenerate,
            layer_sizes,
            spec: model.spec.clone(),
        });
    }
    let doc = StackFile {
        format: "disparse-stack".into(),
        version: VERSION,
        features: stack.extractor().state(),
        metadata: stack.metadata().clone(),
        models,
    };
    let path = dir.join("stack.json");
    fs::write(&path, serde_json::to_vec_pretty(&doc)?).map_err(io_err(&path))?;
    Ok(())
}

/// Read a bundle written by [`save_bundle`]. Word vectors and the PDTB
/// sidecar are not stored and must be supplied when the config uses them.
pub fn load_bundle(
    dir: &Path,
    vectors: Option<Arc<WordVectors>>,
    pdtb: Option<Arc<PdtbSidecar>>,
) -> Result<TagStack, BundleError> {
    let path = dir.join("stack.json");
    let doc: StackFile = serde_json::from_slice(&fs::read(&path).map_err(io_err(&path))?)?;
    if doc.version != VERSION {
        return Err(BundleError::Corrupt {
            file: "stack.json".into(),
            message: format!("unsupported version {}", doc.version),
        });
    }
    let extractor = FeatureExtractor::from_state(doc.features, vectors, pdtb)?;
    let mut tags = Vec::with_capacity(doc.models.len());
    let mut models = Vec::with_capacity(doc.models.len());
    for entry in &doc.models {
        if entry.file.contains(['/', '\\']) {
            return Err(BundleError::Corrupt {
                file: entry.file.clone(),
                message: "model file must live in the bundle directory".into(),
            });
        }
        let path = dir.join(&entry.file);
        let (width, values) = decode(&entry.file, &fs::read(&path).map_err(io_err(&path))?)?;
        let params = unflatten(entry, width, values)?;
        tags.push(entry.tag);
        models.push(BinaryModel {
            spec: entry.spec.clone(),
            width,
            params,
            degenerate: entry.degenerate,
        });
    }
    Ok(TagStack::from_parts(tags, models, extractor, doc.metadata)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let bytes = encode(3, &[1.5, -2.0]);
        assert_eq!(&bytes[..4], b"DSPM");
        assert_eq!(bytes.len(), HEADER + 16);
        assert_eq!(decode("x", &bytes).unwrap(), (3, vec![1.5, -2.0]));
        assert!(decode("x", &bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode("x", &bad).is_err());
    }
}
