//! Shared tokenizer and normalizer.
//!
//! The concept recognizer, the negation tagger and ROUGE-L all see text
//! through this module so that token offsets agree between them.
//!
//! A raw token is a maximal run of alphanumeric characters and hyphens.
//! Normalization lowercases it, trims hyphens from both ends (intra-word
//! hyphens survive) and strips one trailing `s` from tokens of four or more
//! characters. Runs that normalize to nothing (a lone `-`) are dropped.

/// A normalized token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub norm: String,
    /// Byte offset of the first character kept after hyphen trimming.
    pub start: usize,
    /// Byte offset one past the last character kept.
    pub end: usize,
    /// Sentence index; sentences break on `.`, `?`, `!` and `;`.
    pub sentence: usize,
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-'
}

fn is_sentence_break(c: char) -> bool {
    matches!(c, '.' | '?' | '!' | ';')
}

/// Normalizes a single raw token. Returns `None` when nothing is left.
pub fn normalize_token(raw: &str) -> Option<String> {
    let trimmed = raw.trim_matches('-');
    if trimmed.is_empty() {
        return None;
    }
    let mut lower = trimmed.to_lowercase();
    if lower.chars().count() >= 4 && lower.ends_with('s') {
        lower.pop();
    }
    Some(lower)
}

/// Splits `text` into normalized tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut sentence = 0;
    let mut run_start: Option<usize> = None;

    let flush = |start: usize, end: usize, sentence: usize, tokens: &mut Vec<Token>| {
        let raw = &text[start..end];
        let lead = raw.len() - raw.trim_start_matches('-').len();
        let trail = raw.len() - raw.trim_end_matches('-').len();
        if let Some(norm) = normalize_token(raw) {
            tokens.push(Token {
                norm,
                start: start + lead,
                end: end - trail,
                sentence,
            });
        }
    };

    for (i, c) in text.char_indices() {
        if is_token_char(c) {
            if run_start.is_none() {
                run_start = Some(i);
            }
            continue;
        }
        if let Some(s) = run_start.take() {
            flush(s, i, sentence, &mut tokens);
        }
        if is_sentence_break(c) {
            // Only advance once something has been emitted in the current
            // sentence, so "?!" or leading punctuation does not skip indices.
            if tokens.last().is_some_and(|t| t.sentence == sentence) {
                sentence += 1;
            }
        }
    }
    if let Some(s) = run_start {
        flush(s, text.len(), sentence, &mut tokens);
    }
    tokens
}

/// Normalized token strings of `text`.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.norm).collect()
}

/// Lowercased tokens without plural stemming, as used by ROUGE-L.
pub fn plain_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .map(|t| text[t.start..t.end].to_lowercase())
        .collect()
}

/// Normalizes a multi-word phrase (a lexicon surface form or trigger).
pub fn normalize_phrase(phrase: &str) -> Vec<String> {
    normalized_tokens(phrase)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_punctuation_and_edge_hyphens() {
        let toks = normalized_tokens("My only regular medication is birth control -Apri. Low dosage.");
        assert_eq!(
            toks,
            ["my", "only", "regular", "medication", "is", "birth", "control", "apri", "low", "dosage"]
        );
    }

    #[test]
    fn keeps_intra_word_hyphen() {
        assert_eq!(normalized_tokens("an X-ray today"), ["an", "x-ray", "today"]);
    }

    #[test]
    fn plural_stemming_only_on_long_tokens() {
        assert_eq!(normalized_tokens("Allergies gas days is"), ["allergie", "gas", "day", "is"]);
        assert_eq!(normalize_token("has"), Some("has".into()));
        assert_eq!(normalize_token("-"), None);
    }

    #[test]
    fn sentence_indices() {
        let toks = tokenize("no fever. cough?! yes; ok");
        let s: Vec<_> = toks.iter().map(|t| t.sentence).collect();
        assert_eq!(s, [0, 0, 1, 2, 3]);
    }

    #[test]
    fn spans_point_at_source() {
        let text = "i'm -Apri.";
        let toks = tokenize(text);
        assert_eq!(toks.len(), 3);
        assert_eq!(&text[toks[2].start..toks[2].end], "Apri");
        assert_eq!(&text[toks[1].start..toks[1].end], "m");
    }

    #[test]
    fn plain_tokens_skip_stemming() {
        assert_eq!(plain_tokens("The Days -pass"), ["the", "days", "pass"]);
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ... -- ").is_empty());
    }
}
