//! Synthetic labeling of medical dialogue summaries with a medically-aware
//! few-shot ensemble, plus the metrics used to judge the result.
//!
//! The pipeline in module order:
//!
//! - [`corpus`]: dialogue snippets, labeled examples, JSONL datasets with
//!   sidecar manifests.
//! - [`medner`] and [`negex`]: dictionary concept extraction and rule-based
//!   negation tagging.
//! - [`prompt`] and [`llmclient`]: few-shot prompts and completion backends
//!   (HTTP and a deterministic mock).
//! - [`ensemble`]: K disjoint priming sets, pick the candidate with the
//!   highest concept recall.
//! - [`datagen`]: splits, priming universe, resumable generation, mixing.
//! - [`metrics`]: ROUGE-L, Concept F1, Negation F1.
//!
//! ```
//! use medens_core::corpus::{DialogueSnippet, Turn};
//! use medens_core::medner::{ConceptRecognizer, Lexicon};
//!
//! let lex = Lexicon::demo();
//! let s = DialogueSnippet::new("s-0", vec![
//!     Turn::doctor("Any fever or cough?").unwrap(),
//!     Turn::patient("A fever since Monday.").unwrap(),
//! ]).unwrap();
//! let concepts = medens_core::ensemble::snippet_concepts(&s, &lex);
//! assert_eq!(concepts.len(), 2);
//! assert_eq!(lex.concepts("no cough").len(), 1);
//! ```

pub mod corpus;
pub mod datagen;
pub mod demo;
pub mod ensemble;
pub mod llmclient;
pub mod medner;
pub mod metrics;
pub mod negex;
pub mod prompt;
pub mod sampling;
pub mod text;

pub use corpus::{Dataset, DialogueSnippet, LabeledExample, Summary, Turn};
pub use ensemble::{summarize_ens, summarize_single, EnsembleConfig};
pub use medner::{ConceptRecognizer, ConceptSet, Lexicon};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/corpus.md")]
mod book_corpus {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/concepts.md")]
mod book_concepts {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/prompting.md")]
mod book_prompting {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/ensemble.md")]
mod book_ensemble {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/datagen.md")]
mod book_datagen {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/metrics.md")]
mod book_metrics {}
