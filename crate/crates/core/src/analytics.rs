//! Tag priors, collocation PMI and parent-to-child transition probabilities.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::ConversationTree;
use crate::tagset::{LabelSet, Tag, NUM_TAGS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("no labeled nodes")]
    NoLabeledNodes,
}

/// Label sets of the labeled nodes of `trees`, one per unique node.
pub fn labeled_sets(trees: &[ConversationTree]) -> Vec<LabelSet> {
    trees
        .iter()
        .flat_map(|t| t.nodes().iter())
        .filter(|n| n.is_labeled())
        .map(|n| n.labels)
        .collect()
}

/// Fraction of labeled nodes carrying each tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors(pub [f64; NUM_TAGS]);

impl Priors {
    pub fn get(&self, tag: Tag) -> f64 {
        self.0[tag.index()]
    }

    pub fn uniform() -> Priors {
        Priors([1.0 / NUM_TAGS as f64; NUM_TAGS])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tag,prior\n");
        for tag in Tag::all() {
            let _ = writeln!(out, "{},{}", tag.name(), self.get(tag));
        }
        out
    }
}

pub fn tag_priors(labeled: &[LabelSet]) -> Result<Priors, AnalyticsError> {
    let (count, n) = marginal_counts(labeled);
    if n == 0 {
        return Err(AnalyticsError::NoLabeledNodes);
    }
    let mut priors = [0.0; NUM_TAGS];
    for (p, c) in priors.iter_mut().zip(count) {
        *p = c as f64 / n as f64;
    }
    Ok(Priors(priors))
}

fn marginal_counts(labeled: &[LabelSet]) -> ([u64; NUM_TAGS], u64) {
    let mut count = [0u64; NUM_TAGS];
    let mut n = 0;
    for set in labeled.iter().filter(|s| !s.is_empty()) {
        n += 1;
        for tag in set.iter() {
            count[tag.index()] += 1;
        }
    }
    (count, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    Pmi,
    Transition,
}

/// A 31x31 tag-by-tag table with its raw co-occurrence support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagMatrix {
    pub kind: MatrixKind,
    pub values: Vec<Vec<f64>>,
    pub support: Vec<Vec<u64>>,
    /// Self-collocation entries are degenerate (PMI only).
    pub diagonal_flagged: bool,
    /// Rows without any support; their values are all zero.
    pub empty_rows: Vec<Tag>,
}

impl TagMatrix {
    pub fn get(&self, row: Tag, col: Tag) -> f64 {
        self.values[row.index()][col.index()]
    }

    /// Header row and column hold canonical tag names.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tag");
        for tag in Tag::all() {
            out.push(',');
            out.push_str(tag.name());
        }
        out.push('\n');
        for row in Tag::all() {
            out.push_str(row.name());
            for v in &self.values[row.index()] {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Base-2 PMI between tags collocated on one node.
///
/// Smoothing adds one pseudo-node carrying every tag, so joint and marginal
/// counts each gain one and the node total gains one. Tags that never occur
/// have their rows and columns zeroed and listed in `empty_rows`.
pub fn pmi_matrix(labeled: &[LabelSet]) -> Result<TagMatrix, AnalyticsError> {
    let (count, n) = marginal_counts(labeled);
    if n == 0 {
        return Err(AnalyticsError::NoLabeledNodes);
    }
    let mut joint = vec![vec![0u64; NUM_TAGS]; NUM_TAGS];
    for set in labeled.iter().filter(|s| !s.is_empty()) {
        for a in set.iter() {
            for b in set.iter() {
                joint[a.index()][b.index()] += 1;
            }
        }
    }
    let total = (n + 1) as f64;
    let mut values = vec![vec![0.0; NUM_TAGS]; NUM_TAGS];
    for a in 0..NUM_TAGS {
        for b in 0..NUM_TAGS {
            if count[a] == 0 || count[b] == 0 {
                continue;
            }
            let p_ab = (joint[a][b] + 1) as f64 / total;
            let p_a = (count[a] + 1) as f64 / total;
            let p_b = (count[b] + 1) as f64 / total;
            values[a][b] = (p_ab / (p_a * p_b)).log2();
        }
    }
    let empty_rows = Tag::all().filter(|t| count[t.index()] == 0).collect();
    Ok(TagMatrix {
        kind: MatrixKind::Pmi,
        values,
        support: joint,
        diagonal_flagged: true,
        empty_rows,
    })
}

/// Row-normalized tag transition counts over parent-to-child edges where
/// both ends are labeled. Each tree edge counts once regardless of how many
/// branches share it.
pub fn transition_matrix(trees: &[ConversationTree]) -> TagMatrix {
    let mut support = vec![vec![0u64; NUM_TAGS]; NUM_TAGS];
    for tree in trees {
        for (p, c) in tree.edges() {
            let (from, to) = (tree.node(p).labels, tree.node(c).labels);
            for a in from.iter() {
                for b in to.iter() {
                    support[a.index()][b.index()] += 1;
                }
            }
        }
    }
    let mut values = vec![vec![0.0; NUM_TAGS]; NUM_TAGS];
    let mut empty_rows = Vec::new();
    for (a, row) in support.iter().enumerate() {
        let sum: u64 = row.iter().sum();
        if sum == 0 {
            empty_rows.push(Tag::from_index(a).unwrap());
            continue;
        }
        for (v, &c) in values[a].iter_mut().zip(row) {
            *v = c as f64 / sum as f64;
        }
    }
    TagMatrix {
        kind: MatrixKind::Transition,
        values,
        support,
        diagonal_flagged: false,
        empty_rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PostNode;

    fn set(names: &[&str]) -> LabelSet {
        LabelSet::from_names(names).unwrap()
    }

    fn tag(name: &str) -> Tag {
        Tag::from_name(name).unwrap()
    }

    #[test]
    fn priors_direct_counts() {
        let sets = vec![
            set(&["Sarcasm"]),
            set(&["Answer"]),
            set(&["Sarcasm", "Answer"]),
            set(&["Answer"]),
        ];
        let p = tag_priors(&sets).unwrap();
        assert_eq!(p.get(tag("Sarcasm")), 0.5);
        assert_eq!(p.get(tag("Answer")), 0.75);
        assert_eq!(tag_priors(&[]), Err(AnalyticsError::NoLabeledNodes));
    }

    #[test]
    fn degenerate_all_answer() {
        let sets = vec![set(&["Answer"]); 7];
        let p = tag_priors(&sets).unwrap();
        for t in Tag::all() {
            assert_eq!(p.get(t), if t == tag("Answer") { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn pmi_anti_collocation_is_strongly_negative() {
        let mut sets = vec![set(&["Sarcasm"]); 500];
        sets.extend(vec![set(&["Answer"]); 500]);
        let m = pmi_matrix(&sets).unwrap();
        assert!(m.get(tag("Sarcasm"), tag("Answer")) < -7.0);
        assert_eq!(m.empty_rows.len(), NUM_TAGS - 2);
    }

    #[test]
    fn pmi_always_together_is_neg_log_prior() {
        let mut sets = vec![set(&["Ridicule", "RephraseAttack"]); 4];
        sets.extend(vec![set(&["Answer"]); 6]);
        let m = pmi_matrix(&sets).unwrap();
        // pseudo-node smoothing: P(a) = 5/11
        let expect = -(5.0f64 / 11.0).log2();
        assert!((m.get(tag("Ridicule"), tag("RephraseAttack")) - expect).abs() < 1e-12);
    }

    #[test]
    fn transition_deterministic_chain() {
        let mut trees = Vec::new();
        for i in 0..5 {
            let mut a = PostNode {
                node_id: "a".into(),
                parent_id: None,
                author: "x".into(),
                text: String::new(),
                timestamp: None,
                labels: set(&["RequestClarification"]),
            };
            let mut b = a.clone();
            b.node_id = "b".into();
            b.parent_id = Some("a".into());
            b.labels = set(&["Clarification"]);
            a.author = "y".into();
            trees.push(ConversationTree::new(format!("t{i}"), vec![a, b]).unwrap());
        }
        let m = transition_matrix(&trees);
        assert_eq!(m.get(tag("RequestClarification"), tag("Clarification")), 1.0);
        assert_eq!(
            m.support[tag("RequestClarification").index()][tag("Clarification").index()],
            5
        );
        assert_eq!(m.empty_rows.len(), NUM_TAGS - 1);
    }

    #[test]
    fn csv_layout() {
        let m = transition_matrix(&[]);
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), NUM_TAGS + 1);
        assert!(lines[0].starts_with("tag,Moderation,RequestClarification"));
        assert_eq!(lines[1].split(',').count(), NUM_TAGS + 1);
    }
}
