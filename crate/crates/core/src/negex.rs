//! NegEx-style negation tagging of concept mentions.
//!
//! Triggers are matched on normalized tokens inside a single sentence.
//! A pre-negation trigger negates mentions that start within the next
//! [`SCOPE_WINDOW`] tokens; a post-negation trigger negates mentions that end
//! within the previous [`SCOPE_WINDOW`] tokens. A termination trigger between
//! trigger and mention closes the scope. Pseudo-negation phrases ("no
//! increase") switch off any pre-negation trigger they overlap.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::medner::ConceptMention;
use crate::text::{normalize_phrase, tokenize, Token};

/// Scope window, in tokens.
pub const SCOPE_WINDOW: usize = 5;

const DEFAULT_TRIGGERS: &str = include_str!("../data/negex_triggers.tsv");

#[derive(Debug, Error)]
pub enum NegexError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trigger line {line_no}: {reason}")]
    TriggerFormat { line_no: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TriggerKind {
    PreNegation,
    PostNegation,
    PseudoNegation,
    Termination,
}

impl FromStr for TriggerKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "pre" => Ok(TriggerKind::PreNegation),
            "post" => Ok(TriggerKind::PostNegation),
            "pseudo" => Ok(TriggerKind::PseudoNegation),
            "term" => Ok(TriggerKind::Termination),
            _ => Err(()),
        }
    }
}

impl fmt::Display for TriggerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TriggerKind::PreNegation => "pre",
            TriggerKind::PostNegation => "post",
            TriggerKind::PseudoNegation => "pseudo",
            TriggerKind::Termination => "term",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerRule {
    /// Normalized tokens joined by single spaces.
    pub phrase: String,
    pub kind: TriggerKind,
    tokens: Vec<String>,
}

impl TriggerRule {
    /// Normalizes `phrase`; `None` if nothing survives normalization.
    pub fn new(phrase: &str, kind: TriggerKind) -> Option<Self> {
        let tokens = normalize_phrase(phrase);
        if tokens.is_empty() {
            return None;
        }
        Some(TriggerRule {
            phrase: tokens.join(" "),
            kind,
            tokens,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegationStatus {
    Affirmed,
    Negated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegationTag {
    pub mention: ConceptMention,
    pub status: NegationStatus,
}

impl NegationTag {
    pub fn is_negated(&self) -> bool {
        self.status == NegationStatus::Negated
    }
}

/// Parses `phrase<TAB>kind` lines; `#` lines and blanks are ignored.
pub fn parse_triggers(raw: &str) -> Result<Vec<TriggerRule>, NegexError> {
    let mut rules = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let bad = |reason: String| NegexError::TriggerFormat { line_no, reason };
        let (phrase, kind) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected `phrase<TAB>kind`".into()))?;
        let kind: TriggerKind = kind
            .trim()
            .parse()
            .map_err(|_| bad(format!("unknown trigger kind {:?}", kind.trim())))?;
        let rule = TriggerRule::new(phrase, kind)
            .ok_or_else(|| bad(format!("empty trigger phrase {phrase:?}")))?;
        if !seen.insert((rule.phrase.clone(), kind)) {
            return Err(bad(format!("duplicate trigger {:?} ({kind})", rule.phrase)));
        }
        rules.push(rule);
    }
    Ok(rules)
}

/// Bundled trigger list.
pub fn default_triggers() -> Vec<TriggerRule> {
    parse_triggers(DEFAULT_TRIGGERS).expect("bundled triggers are well-formed")
}

/// Loads triggers from `path`, or the bundled defaults when `None`.
pub fn load_triggers(path: Option<&Path>) -> Result<Vec<TriggerRule>, NegexError> {
    match path {
        None => Ok(default_triggers()),
        Some(p) => {
            let raw = fs::read_to_string(p).map_err(|source| NegexError::Io {
                path: p.display().to_string(),
                source,
            })?;
            parse_triggers(&raw)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
    sentence: usize,
}

fn find_matches(tokens: &[Token], rule: &TriggerRule) -> Vec<Span> {
    let n = rule.tokens.len();
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n)
        .filter(|&i| {
            let window = &tokens[i..i + n];
            window.iter().zip(&rule.tokens).all(|(t, r)| t.norm == *r)
                && window.iter().all(|t| t.sentence == window[0].sentence)
        })
        .map(|i| Span {
            start: i,
            end: i + n,
            sentence: tokens[i].sentence,
        })
        .collect()
}

fn overlaps(a: &Span, b: &Span) -> bool {
    a.start < b.end && b.start < a.end
}

/// Tags each mention as affirmed or negated. `mentions` must come from the
/// same `text` through the shared tokenizer.
pub fn tag_negations(
    text: &str,
    mentions: &[ConceptMention],
    rules: &[TriggerRule],
) -> Vec<NegationTag> {
    let tokens = tokenize(text);
    let mut pre = Vec::new();
    let mut post = Vec::new();
    let mut pseudo = Vec::new();
    let mut term = Vec::new();
    for rule in rules {
        let found = find_matches(&tokens, rule);
        match rule.kind {
            TriggerKind::PreNegation => pre.extend(found),
            TriggerKind::PostNegation => post.extend(found),
            TriggerKind::PseudoNegation => pseudo.extend(found),
            TriggerKind::Termination => term.extend(found),
        }
    }
    pre.retain(|p| !pseudo.iter().any(|q| overlaps(p, q)));

    // Is there a termination trigger in `sentence` starting within [from, to)?
    let terminated = |sentence: usize, from: usize, to: usize| {
        term.iter()
            .any(|t| t.sentence == sentence && t.start >= from && t.start < to)
    };

    mentions
        .iter()
        .map(|m| {
            let sentence = tokens.get(m.start).map(|t| t.sentence);
            let negated = sentence.is_some_and(|sentence| {
                let by_pre = pre.iter().any(|p| {
                    p.sentence == sentence
                        && m.start >= p.end
                        && m.start < p.end + SCOPE_WINDOW
                        && !terminated(sentence, p.end, m.start)
                });
                let by_post = post.iter().any(|q| {
                    q.sentence == sentence
                        && q.start >= m.end
                        && q.start < m.end + SCOPE_WINDOW
                        && !terminated(sentence, m.end, q.start)
                });
                by_pre || by_post
            });
            NegationTag {
                mention: m.clone(),
                status: if negated {
                    NegationStatus::Negated
                } else {
                    NegationStatus::Affirmed
                },
            }
        })
        .collect()
}
