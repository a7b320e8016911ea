//! Few-shot prompt construction and completion parsing.
//!
//! Each priming example is rendered as
//! `{snippet}[SUMMARIZED]{summary}[STOP]` and the examples are concatenated
//! with nothing between them. The target snippet follows, closed by
//! `[SUMMARIZED]`. Turns inside a snippet are joined by `[SEP] ` and carry no
//! role prefixes.

use thiserror::Error;

use crate::corpus::{DialogueSnippet, LabeledExample, Summary};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("text contains reserved token {token}")]
    ReservedTokenInText { token: String },
    #[error("{count} priming examples exceed the maximum of {max}")]
    TooManyExamples { count: usize, max: usize },
    #[error("at least one priming example is required")]
    EmptyExamples,
    #[error("invalid prompt configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptConfig {
    pub sep_token: String,
    pub summarize_token: String,
    pub stop_token: String,
    pub max_examples: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            sep_token: "[SEP]".into(),
            summarize_token: "[SUMMARIZED]".into(),
            stop_token: "[STOP]".into(),
            max_examples: 21,
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), PromptError> {
        let toks = [&self.sep_token, &self.summarize_token, &self.stop_token];
        if toks.iter().any(|t| t.is_empty()) {
            return Err(PromptError::InvalidConfig("tokens must be non-empty".into()));
        }
        if toks[0] == toks[1] || toks[0] == toks[2] || toks[1] == toks[2] {
            return Err(PromptError::InvalidConfig("tokens must be distinct".into()));
        }
        if self.max_examples == 0 {
            return Err(PromptError::InvalidConfig("max_examples must be positive".into()));
        }
        Ok(())
    }

    fn tokens(&self) -> [&str; 3] {
        [&self.sep_token, &self.summarize_token, &self.stop_token]
    }

    fn check(&self, text: &str) -> Result<(), PromptError> {
        match self.tokens().into_iter().find(|t| text.contains(t)) {
            Some(t) => Err(PromptError::ReservedTokenInText {
                token: t.to_string(),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub stop_sequences: Vec<String>,
}

/// Joins the turn texts of `snippet` with `"{sep} "`.
pub fn render_snippet(snippet: &DialogueSnippet, config: &PromptConfig) -> Result<String, PromptError> {
    let mut out = String::new();
    for (i, turn) in snippet.turns().iter().enumerate() {
        config.check(turn.text())?;
        if i > 0 {
            out.push_str(&config.sep_token);
            out.push(' ');
        }
        out.push_str(turn.text());
    }
    Ok(out)
}

fn render_example(example: &LabeledExample, config: &PromptConfig, out: &mut String) -> Result<(), PromptError> {
    config.check(example.summary.as_str())?;
    out.push_str(&render_snippet(&example.snippet, config)?);
    out.push_str(&config.summarize_token);
    out.push_str(example.summary.as_str());
    out.push_str(&config.stop_token);
    Ok(())
}

/// Builds the priming prompt for `target` from `examples`.
pub fn build_prompt(
    examples: &[LabeledExample],
    target: &DialogueSnippet,
    config: &PromptConfig,
) -> Result<Prompt, PromptError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(PromptError::EmptyExamples);
    }
    if examples.len() > config.max_examples {
        return Err(PromptError::TooManyExamples {
            count: examples.len(),
            max: config.max_examples,
        });
    }
    let mut text = String::new();
    for e in examples {
        render_example(e, config, &mut text)?;
    }
    text.push_str(&render_snippet(target, config)?);
    text.push_str(&config.summarize_token);
    Ok(Prompt {
        text,
        stop_sequences: vec![config.stop_token.clone()],
    })
}

/// Cuts a raw completion at the first stop token and trims it.
///
/// Any other reserved token left in the output is cut as well, so the
/// result is always a valid [`Summary`].
pub fn parse_completion(raw: &str, config: &PromptConfig) -> Summary {
    let mut text = raw;
    if let Some(i) = text.find(&config.stop_token) {
        text = &text[..i];
    }
    for tok in crate::corpus::RESERVED_TOKENS
        .iter()
        .copied()
        .chain(config.tokens())
    {
        if let Some(i) = text.find(tok) {
            text = &text[..i];
        }
    }
    Summary::new(text.trim()).expect("reserved tokens were cut")
}
