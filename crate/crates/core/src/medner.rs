//! Lexicon-driven medical concept recognizer.
//!
//! Surface forms are normalized with [`crate::text`] and stored in a token
//! trie. Extraction scans left to right and at each position takes the
//! longest surface form that matches, then resumes after it.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{normalize_phrase, tokenize};

const DEMO_LEXICON: &str = include_str!("../data/demo_lexicon.tsv");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line_no}: {reason}")]
    Format { line_no: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SemanticType {
    Symptom,
    Disorder,
    LabTest,
    Medication,
    Other,
}

impl FromStr for SemanticType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "symptom" => SemanticType::Symptom,
            "disorder" => SemanticType::Disorder,
            "labtest" => SemanticType::LabTest,
            "medication" => SemanticType::Medication,
            "other" => SemanticType::Other,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub concept_id: String,
    pub canonical_name: String,
    pub surface_form: String,
    pub semantic_type: SemanticType,
}

#[derive(Debug, Default)]
struct TrieNode {
    children: HashMap<String, usize>,
    /// Index of the first entry whose normalized surface ends here.
    entry: Option<usize>,
}

/// Immutable concept dictionary with a longest-match token index.
#[derive(Debug)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    nodes: Vec<TrieNode>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            entries: Vec::new(),
            nodes: vec![TrieNode::default()],
        }
    }
}

impl Lexicon {
    /// Builds the index. When two entries share a normalized surface form,
    /// the one listed first wins.
    pub fn from_entries(entries: Vec<LexiconEntry>) -> Result<Self, LexiconError> {
        let mut lex = Lexicon::default();
        let mut seen = HashSet::new();
        for (i, entry) in entries.iter().enumerate() {
            let tokens = normalize_phrase(&entry.surface_form);
            if tokens.is_empty() {
                return Err(LexiconError::Format {
                    line_no: i + 1,
                    reason: format!("surface form {:?} is empty after normalization", entry.surface_form),
                });
            }
            if !seen.insert((entry.concept_id.as_str(), entry.surface_form.as_str())) {
                return Err(LexiconError::Format {
                    line_no: i + 1,
                    reason: format!(
                        "duplicate surface form {:?} for {}",
                        entry.surface_form, entry.concept_id
                    ),
                });
            }
            lex.insert(&tokens, i);
        }
        lex.entries = entries;
        Ok(lex)
    }

    fn insert(&mut self, tokens: &[String], entry: usize) {
        let mut node = 0;
        for tok in tokens {
            node = match self.nodes[node].children.get(tok) {
                Some(&next) => next,
                None => {
                    self.nodes.push(TrieNode::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[node].children.insert(tok.clone(), next);
                    next
                }
            };
        }
        self.nodes[node].entry.get_or_insert(entry);
    }

    /// Parses the four-column TSV format. `#` lines and blank lines are skipped.
    pub fn from_tsv(raw: &str) -> Result<Self, LexiconError> {
        let mut entries = Vec::new();
        let mut line_of_entry = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(LexiconError::Format {
                    line_no,
                    reason: format!("expected 4 tab-separated columns, found {}", cols.len()),
                });
            }
            let semantic_type = cols[3].trim().parse().map_err(|_| LexiconError::Format {
                line_no,
                reason: format!("unknown semantic type {:?}", cols[3]),
            })?;
            if cols[0].trim().is_empty() {
                return Err(LexiconError::Format {
                    line_no,
                    reason: "empty concept id".into(),
                });
            }
            entries.push(LexiconEntry {
                concept_id: cols[0].trim().to_string(),
                canonical_name: cols[1].trim().to_string(),
                surface_form: cols[2].trim().to_string(),
                semantic_type,
            });
            line_of_entry.push(line_no);
        }
        // Report index errors against file lines rather than entry numbers.
        Lexicon::from_entries(entries).map_err(|e| match e {
            LexiconError::Format { line_no, reason } => LexiconError::Format {
                line_no: line_of_entry[line_no - 1],
                reason,
            },
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let raw = fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Lexicon::from_tsv(&raw)
    }

    /// The bundled demonstration lexicon (a few hundred surface forms).
    pub fn demo() -> Self {
        Lexicon::from_tsv(DEMO_LEXICON).expect("bundled lexicon is well-formed")
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest lexicon match starting at `tokens[start]`: `(end, entry)`.
    fn longest_at(&self, tokens: &[String], start: usize) -> Option<(usize, usize)> {
        let mut node = 0;
        let mut best = None;
        for (offset, tok) in tokens[start..].iter().enumerate() {
            match self.nodes[node].children.get(tok) {
                Some(&next) => node = next,
                None => break,
            }
            if let Some(entry) = self.nodes[node].entry {
                best = Some((start + offset + 1, entry));
            }
        }
        best
    }

    /// Greedy left-to-right longest-match extraction.
    pub fn extract(&self, text: &str) -> Vec<ConceptMention> {
        let tokens = tokenize(text);
        let norms: Vec<String> = tokens.iter().map(|t| t.norm.clone()).collect();
        let mut mentions = Vec::new();
        let mut i = 0;
        while i < norms.len() {
            match self.longest_at(&norms, i) {
                Some((end, entry)) => {
                    mentions.push(ConceptMention {
                        concept_id: self.entries[entry].concept_id.clone(),
                        start: i,
                        end,
                        surface: text[tokens[i].start..tokens[end - 1].end].to_string(),
                    });
                    i = end;
                }
                None => i += 1,
            }
        }
        mentions
    }
}

/// A recognized concept occurrence. `start..end` are token offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMention {
    pub concept_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

/// Set of canonical concept ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptSet(BTreeSet<String>);

impl ConceptSet {
    pub fn new() -> Self {
        ConceptSet::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains(id)
    }

    pub fn insert(&mut self, id: impl Into<String>) -> bool {
        self.0.insert(id.into())
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn intersection_len(&self, other: &ConceptSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn intersection(&self, other: &ConceptSet) -> ConceptSet {
        ConceptSet(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn union(&self, other: &ConceptSet) -> ConceptSet {
        ConceptSet(self.0.union(&other.0).cloned().collect())
    }
}

impl<S: Into<String>> FromIterator<S> for ConceptSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        ConceptSet(iter.into_iter().map(Into::into).collect())
    }
}

impl fmt::Display for ConceptSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{id}")?;
        }
        write!(f, "}}")
    }
}

/// Distinct concept ids of `mentions`.
pub fn concept_set(mentions: &[ConceptMention]) -> ConceptSet {
    mentions.iter().map(|m| m.concept_id.as_str()).collect()
}

/// Anything that can find medical concepts in text.
///
/// [`Lexicon`] is the bundled implementation; a learned tagger can be
/// plugged in by implementing this trait.
pub trait ConceptRecognizer: Send + Sync {
    fn extract(&self, text: &str) -> Vec<ConceptMention>;

    fn concepts(&self, text: &str) -> ConceptSet {
        concept_set(&self.extract(text))
    }
}

impl ConceptRecognizer for Lexicon {
    fn extract(&self, text: &str) -> Vec<ConceptMention> {
        Lexicon::extract(self, text)
    }
}
