use std::collections::HashMap;
use std::io::BufRead;

use super::FeatureError;

/// Pre-trained word vectors of one fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn new(dimension: usize) -> Self {
        WordVectors {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<(), FeatureError> {
        if vector.len() != self.dimension {
            return Err(FeatureError::DimensionMismatch {
                block: "embeddings".into(),
                expected: self.dimension,
                found: vector.len(),
            });
        }
        self.vectors.insert(word.into(), vector);
        Ok(())
    }

    /// Parse `word v1 ... vD` lines. The dimension is fixed by the first line.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, FeatureError> {
        let mut out: Option<WordVectors> = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let values = values.map_err(|e| FeatureError::Format {
                what: "word vectors",
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let table = out.get_or_insert_with(|| WordVectors::new(values.len()));
            if values.is_empty() || values.len() != table.dimension {
                return Err(FeatureError::Format {
                    what: "word vectors",
                    line: lineno + 1,
                    message: format!("expected {} components, found {}", table.dimension, values.len()),
                });
            }
            table.vectors.insert(word.to_owned(), values);
        }
        out.ok_or(FeatureError::Format {
            what: "word vectors",
            line: 0,
            message: "no vectors".into(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }
}

/// Mean of the in-vocabulary token vectors; zero when none match.
pub fn embed_average(tokens: &[String], vectors: &WordVectors) -> Vec<f64> {
    let mut out = vec![0.0; vectors.dimension];
    embed_into(tokens, vectors, &mut out);
    out
}

pub(crate) fn embed_into(tokens: &[String], vectors: &WordVectors, out: &mut [f64]) {
    let mut hits = 0usize;
    for v in tokens.iter().filter_map(|t| vectors.get(t)) {
        hits += 1;
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    if hits > 0 {
        out.iter_mut().for_each(|o| *o /= hits as f64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn singleton_and_cancellation() {
        let wv = WordVectors::parse("up 1 2 3\ndown -1 -2 -3\n".as_bytes()).unwrap();
        assert_eq!(wv.dimension(), 3);
        assert_eq!(embed_average(&toks("up oov"), &wv), vec![1.0, 2.0, 3.0]);
        assert_eq!(embed_average(&toks("up down"), &wv), vec![0.0, 0.0, 0.0]);
        assert_eq!(embed_average(&toks("nothing here"), &wv), vec![0.0; 3]);
    }

    #[test]
    fn ragged_file_rejected() {
        let err = WordVectors::parse("a 1 2\nb 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FeatureError::Format { line: 2, .. }));
        assert!(WordVectors::parse("a 1 x\n".as_bytes()).is_err());
    }
}
