use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::FeatureError;

const DEMO_LEXICON: &str = include_str!("../../data/demo_lexicon.tsv");

/// How category hits become a feature value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconWeighting {
    /// Hits divided by the post's token count.
    #[default]
    Proportion,
    /// Raw hit counts.
    Count,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub category: String,
    pub pattern: String,
}

/// Word-category dictionary with exact and prefix (`happ*`) patterns.
/// Categories keep their order of first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LexiconRepr", into = "LexiconRepr")]
pub struct CategoryLexicon {
    categories: Vec<String>,
    entries: Vec<LexiconEntry>,
    exact: HashMap<String, Vec<usize>>,
    // longest first
    prefixes: Vec<(String, Vec<usize>)>,
}

#[derive(Serialize, Deserialize)]
struct LexiconRepr {
    entries: Vec<LexiconEntry>,
}

impl TryFrom<LexiconRepr> for CategoryLexicon {
    type Error = FeatureError;

    fn try_from(r: LexiconRepr) -> Result<Self, Self::Error> {
        CategoryLexicon::from_entries(r.entries)
    }
}

impl From<CategoryLexicon> for LexiconRepr {
    fn from(l: CategoryLexicon) -> Self {
        LexiconRepr { entries: l.entries }
    }
}

impl CategoryLexicon {
    pub fn from_entries(entries: Vec<LexiconEntry>) -> Result<Self, FeatureError> {
        let mut categories: Vec<String> = Vec::new();
        let mut exact: HashMap<String, Vec<usize>> = HashMap::new();
        let mut prefix_map: HashMap<String, Vec<usize>> = HashMap::new();
        let mut normalized = Vec::with_capacity(entries.len());
        for entry in entries {
            let category = entry.category.trim().to_owned();
            let pattern = entry.pattern.trim().to_lowercase();
            let stem = pattern.strip_suffix('*').unwrap_or(&pattern);
            if category.is_empty() || stem.is_empty() || stem.contains('*') {
                return Err(FeatureError::BadLexiconEntry(format!("{category}\t{pattern}")));
            }
            let cat = match categories.iter().position(|c| *c == category) {
                Some(i) => i,
                None => {
                    categories.push(category.clone());
                    categories.len() - 1
                }
            };
            let target = if pattern.ends_with('*') {
                prefix_map.entry(stem.to_owned()).or_default()
            } else {
                exact.entry(stem.to_owned()).or_default()
            };
            if !target.contains(&cat) {
                target.push(cat);
            }
            normalized.push(LexiconEntry { category, pattern });
        }
        if categories.is_empty() {
            return Err(FeatureError::BadLexiconEntry("lexicon has no entries".into()));
        }
        let mut prefixes: Vec<(String, Vec<usize>)> = prefix_map.into_iter().collect();
        prefixes.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(CategoryLexicon {
            categories,
            entries: normalized,
            exact,
            prefixes,
        })
    }

    /// Parse `category<TAB>pattern` lines; blank lines and `#` comments are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, FeatureError> {
        let mut entries = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (category, pattern) = line.split_once('\t').ok_or_else(|| FeatureError::Format {
                what: "lexicon",
                line: lineno + 1,
                message: "expected `category<TAB>pattern`".into(),
            })?;
            entries.push(LexiconEntry {
                category: category.into(),
                pattern: pattern.into(),
            });
        }
        Self::from_entries(entries)
    }

    /// Small open demo lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(DEMO_LEXICON.as_bytes()).expect("bundled lexicon is valid")
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Categories of a token: an exact entry wins, else the longest matching prefix.
    pub fn lookup(&self, token: &str) -> &[usize] {
        if let Some(cats) = self.exact.get(token) {
            return cats;
        }
        self.prefixes
            .iter()
            .find(|(stem, _)| token.starts_with(stem.as_str()))
            .map(|(_, c)| c.as_slice())
            .unwrap_or(&[])
    }
}

/// One entry per category: token hits, optionally divided by the token count.
pub fn categorize(tokens: &[String], lexicon: &CategoryLexicon, weighting: LexiconWeighting) -> Vec<f64> {
    let mut out = vec![0.0; lexicon.len()];
    categorize_into(tokens, lexicon, weighting, &mut out);
    out
}

pub(crate) fn categorize_into(
    tokens: &[String],
    lexicon: &CategoryLexicon,
    weighting: LexiconWeighting,
    out: &mut [f64],
) {
    if tokens.is_empty() {
        return;
    }
    for tok in tokens {
        for &c in lexicon.lookup(tok) {
            out[c] += 1.0;
        }
    }
    if weighting == LexiconWeighting::Proportion {
        let n = tokens.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
    }
}
