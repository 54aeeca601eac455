//! Online discourse parsing for contentious conversation trees.
//!
//! Load annotated discussion trees, compute tag analytics, extract
//! context-window features, train one binary classifier per tag and parse
//! branches root to leaf without looking ahead.

pub mod analytics;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod matrix;
pub mod models;
pub mod synth;
pub mod tagset;

pub use corpus::{Branch, ConversationTree, CorpusError, PostNode};
pub use tagset::{Category, LabelSet, Tag, NUM_TAGS};

/// Map over a slice, in parallel when the `parallel` feature is on.
/// Output order always follows input order.
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
