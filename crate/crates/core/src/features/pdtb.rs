use std::collections::HashMap;
use std::io::BufRead;

use serde::Deserialize;

use super::FeatureError;

/// The legal discourse-relation tags, in file order.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, Deserialize)]
pub struct PdtbInventory {
    tags: Vec<String>,
}

impl PdtbInventory {
    pub fn new<S: Into<String>>(tags: impl IntoIterator<Item = S>) -> Result<Self, FeatureError> {
        let mut seen = Vec::new();
        for t in tags {
            let t = t.into();
            if !seen.contains(&t) {
                seen.push(t);
            }
        }
        if seen.is_empty() {
            return Err(FeatureError::Format {
                what: "PDTB inventory",
                line: 0,
                message: "no tags".into(),
            });
        }
        Ok(PdtbInventory { tags: seen })
    }

    /// One tag per line; blank lines and `#` comments skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, FeatureError> {
        let mut tags = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                tags.push(t.to_owned());
            }
        }
        Self::new(tags)
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn index(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }
}

#[derive(Deserialize)]
struct SidecarRecord {
    #[serde(default)]
    tree_id: Option<String>,
    node_id: String,
    tags: Vec<String>,
}

/// Per-post sequences of discourse-relation tags produced by an external tagger.
#[derive(Debug, Clone, PartialEq)]
pub struct PdtbSidecar {
    inventory: PdtbInventory,
    sequences: HashMap<(String, String), Vec<usize>>,
}

impl PdtbSidecar {
    pub fn new(inventory: PdtbInventory) -> Self {
        PdtbSidecar {
            inventory,
            sequences: HashMap::new(),
        }
    }

    /// Records without a `tree_id` apply to the node id in any tree.
    pub fn insert<S: AsRef<str>>(
        &mut self,
        tree_id: Option<&str>,
        node_id: &str,
        tags: &[S],
    ) -> Result<(), FeatureError> {
        let seq = tags
            .iter()
            .map(|t| {
                self.inventory
                    .index(t.as_ref())
                    .ok_or_else(|| FeatureError::UnknownPdtbTag(t.as_ref().to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.sequences
            .insert((tree_id.unwrap_or("").to_owned(), node_id.to_owned()), seq);
        Ok(())
    }

    /// Newline-delimited `{"node_id": .., "tags": [..]}` records.
    pub fn parse<R: BufRead>(reader: R, inventory: PdtbInventory) -> Result<Self, FeatureError> {
        let mut sidecar = PdtbSidecar::new(inventory);
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SidecarRecord = serde_json::from_str(&line).map_err(|e| FeatureError::Format {
                what: "PDTB sidecar",
                line: lineno + 1,
                message: e.to_string(),
            })?;
            sidecar.insert(rec.tree_id.as_deref(), &rec.node_id, &rec.tags)?;
        }
        Ok(sidecar)
    }

    pub fn inventory(&self) -> &PdtbInventory {
        &self.inventory
    }

    pub fn sequence(&self, tree_id: &str, node_id: &str) -> Option<&[usize]> {
        self.sequences
            .get(&(tree_id.to_owned(), node_id.to_owned()))
            .or_else(|| self.sequences.get(&(String::new(), node_id.to_owned())))
            .map(Vec::as_slice)
    }
}

/// Tag counts (width n) and consecutive-pair counts (width n*n, row-major
/// by first tag) of a post's relation sequence. Absent posts give zeros.
pub fn pdtb_features(tree_id: &str, node_id: &str, sidecar: &PdtbSidecar) -> (Vec<f64>, Vec<f64>) {
    let n = sidecar.inventory.len();
    let mut uni = vec![0.0; n];
    let mut bi = vec![0.0; n * n];
    if let Some(seq) = sidecar.sequence(tree_id, node_id) {
        count_into(seq, n, &mut uni, &mut bi);
    }
    (uni, bi)
}

pub(crate) fn count_into(seq: &[usize], n: usize, uni: &mut [f64], bi: &mut [f64]) {
    for &t in seq {
        if !uni.is_empty() {
            uni[t] += 1.0;
        }
    }
    if !bi.is_empty() {
        for w in seq.windows(2) {
            bi[w[0] * n + w[1]] += 1.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sidecar() -> PdtbSidecar {
        let inv = PdtbInventory::parse("Contrast\nCause\n# comment\nConjunction\n".as_bytes()).unwrap();
        PdtbSidecar::parse(
            r#"{"node_id":"n1","tags":["Contrast","Contrast","Cause"]}"#.as_bytes(),
            inv,
        )
        .unwrap()
    }

    #[test]
    fn direct_counts() {
        let s = sidecar();
        let (uni, bi) = pdtb_features("t", "n1", &s);
        assert_eq!(uni, vec![2.0, 1.0, 0.0]);
        let mut expect = vec![0.0; 9];
        expect[0] = 1.0; // Contrast,Contrast
        expect[1] = 1.0; // Contrast,Cause
        assert_eq!(bi, expect);
    }

    #[test]
    fn absent_node_is_zero() {
        let (uni, bi) = pdtb_features("t", "missing", &sidecar());
        assert!(uni.iter().chain(&bi).all(|&v| v == 0.0));
        assert_eq!(bi.len(), 9);
    }

    #[test]
    fn unknown_tag_named() {
        let inv = PdtbInventory::new(["Cause"]).unwrap();
        let err = PdtbSidecar::parse(r#"{"node_id":"a","tags":["Because"]}"#.as_bytes(), inv).unwrap_err();
        match err {
            FeatureError::UnknownPdtbTag(t) => assert_eq!(t, "Because"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tree_scoped_records_shadow_global() {
        let inv = PdtbInventory::new(["A", "B"]).unwrap();
        let mut s = PdtbSidecar::new(inv);
        s.insert(None, "n", &["A"]).unwrap();
        s.insert(Some("t2"), "n", &["B"]).unwrap();
        assert_eq!(s.sequence("t1", "n"), Some(&[0][..]));
        assert_eq!(s.sequence("t2", "n"), Some(&[1][..]));
    }
}
