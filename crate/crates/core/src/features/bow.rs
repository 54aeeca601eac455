use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Binary,
    #[serde(alias = "tfidf")]
    TfIdf,
}

/// The most document-frequent training terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<u64>,
    idf: Vec<f64>,
    num_docs: u64,
    dimension: usize,
    weighting: Weighting,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    dimension: usize,
    weighting: Weighting,
    num_docs: u64,
    terms: Vec<String>,
    doc_freq: Vec<u64>,
    idf: Vec<f64>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let index = r.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            terms: r.terms,
            doc_freq: r.doc_freq,
            idf: r.idf,
            num_docs: r.num_docs,
            dimension: r.dimension,
            weighting: r.weighting,
            index,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            dimension: v.dimension,
            weighting: v.weighting,
            num_docs: v.num_docs,
            terms: v.terms,
            doc_freq: v.doc_freq,
            idf: v.idf,
        }
    }
}

impl Vocabulary {
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Layout width; may exceed `terms().len()` when the corpus is small.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn doc_freq(&self) -> &[u64] {
        &self.doc_freq
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

/// Keep the `dimension` terms with the highest document frequency, ties
/// broken lexicographically. Smoothed idf is `ln((1+N)/(1+df)) + 1`.
pub fn build_vocabulary<D: AsRef<[String]>>(
    docs: &[D],
    dimension: usize,
    weighting: Weighting,
) -> Result<Vocabulary, FeatureError> {
    if docs.is_empty() {
        return Err(FeatureError::EmptyTraining);
    }
    let mut df: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        let uniq: HashSet<&str> = doc.as_ref().iter().map(String::as_str).collect();
        for term in uniq {
            *df.entry(term).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(dimension);

    let n = docs.len() as u64;
    let terms: Vec<String> = ranked.iter().map(|(t, _)| (*t).to_owned()).collect();
    let doc_freq: Vec<u64> = ranked.iter().map(|&(_, d)| d).collect();
    let idf = doc_freq
        .iter()
        .map(|&d| ((1 + n) as f64 / (1 + d) as f64).ln() + 1.0)
        .collect();
    Ok(VocabularyRepr {
        dimension,
        weighting,
        num_docs: n,
        terms,
        doc_freq,
        idf,
    }
    .into())
}

/// Binary presence, or raw-count tf times idf followed by L2 normalization.
pub fn vectorize_bow(tokens: &[String], vocab: &Vocabulary) -> Vec<f64> {
    let mut out = vec![0.0; vocab.dimension];
    vectorize_into(tokens, vocab, &mut out);
    out
}

pub(crate) fn vectorize_into(tokens: &[String], vocab: &Vocabulary, out: &mut [f64]) {
    for tok in tokens {
        if let Some(i) = vocab.get(tok) {
            match vocab.weighting {
                Weighting::Binary => out[i] = 1.0,
                Weighting::TfIdf => out[i] += 1.0,
            }
        }
    }
    if vocab.weighting == Weighting::TfIdf {
        for (v, idf) in out.iter_mut().zip(&vocab.idf) {
            *v *= idf;
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        }
    }
}
