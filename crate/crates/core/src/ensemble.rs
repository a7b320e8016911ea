//! Medically-aware ensemble summarizer.
//!
//! For a snippet `T` with concept set `C*`, the ensemble calls the backend
//! `K` times, each time primed with a different block of `N` labeled
//! examples, extracts the concept set `C_i` of every candidate summary and
//! keeps the candidate maximizing the concept recall `|C_i ∩ C*| / |C*|`.
//!
//! The `K` priming blocks are consecutive chunks of one seeded permutation
//! of the labeled universe, so no example is reused across trials and the
//! same seed gives the same blocks for every snippet.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{DialogueSnippet, LabeledExample, Summary};
use crate::llmclient::{BackendError, CompletionBackend, CompletionRequest};
use crate::medner::{ConceptRecognizer, ConceptSet};
use crate::prompt::{build_prompt, parse_completion, PromptConfig, PromptError};
use crate::sampling;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("priming universe too small: need {need} examples, have {have}")]
    UniverseTooSmall { need: usize, have: usize },
    #[error("invalid ensemble configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("trial {trial}: {source}")]
    Backend {
        trial: usize,
        #[source]
        source: BackendError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleConfig {
    /// Number of trials `K`.
    pub k_trials: usize,
    /// Priming examples per trial `N`.
    pub n_priming: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            k_trials: 10,
            n_priming: 21,
            seed: 42,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.k_trials == 0 || self.n_priming == 0 {
            return Err(EnsembleError::InvalidConfig(
                "k_trials and n_priming must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Examples consumed across all trials, `K·N`.
    pub fn universe_needed(&self) -> usize {
        self.k_trials.saturating_mul(self.n_priming)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSummary {
    pub index: usize,
    #[serde(serialize_with = "ser_summary")]
    pub summary: Summary,
    pub concepts: ConceptSet,
    pub recall: f64,
    pub priming_ids: Vec<String>,
}

fn ser_summary<S: serde::Serializer>(s: &Summary, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(s.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub snippet_id: String,
    pub snippet_concepts: ConceptSet,
    pub candidates: Vec<CandidateSummary>,
    pub chosen: usize,
}

impl EnsembleResult {
    pub fn best(&self) -> &CandidateSummary {
        &self.candidates[self.chosen]
    }
}

/// `|C_i ∩ C*| / |C*|`; 1.0 when the snippet has no concepts.
pub fn concept_recall(candidate: &ConceptSet, snippet: &ConceptSet) -> f64 {
    if snippet.is_empty() {
        return 1.0;
    }
    candidate.intersection_len(snippet) as f64 / snippet.len() as f64
}

/// Index of the first maximal value.
pub fn first_argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Splits a seeded permutation of `universe` into `K` disjoint blocks of `N`.
pub fn sample_priming_sets(
    universe: &[LabeledExample],
    config: &EnsembleConfig,
) -> Result<Vec<Vec<LabeledExample>>, EnsembleError> {
    config.validate()?;
    let need = config.universe_needed();
    if universe.len() < need {
        return Err(EnsembleError::UniverseTooSmall {
            need,
            have: universe.len(),
        });
    }
    let order = sampling::permutation(universe.len(), config.seed);
    Ok(order[..need]
        .chunks(config.n_priming)
        .map(|block| block.iter().map(|&i| universe[i].clone()).collect())
        .collect())
}

/// Concepts of a snippet: the union over its turns.
pub fn snippet_concepts(snippet: &DialogueSnippet, recognizer: &dyn ConceptRecognizer) -> ConceptSet {
    snippet
        .turns()
        .iter()
        .fold(ConceptSet::new(), |acc, t| acc.union(&recognizer.concepts(t.text())))
}

/// One plain few-shot call: prompt, complete, parse.
pub fn summarize_single(
    snippet: &DialogueSnippet,
    priming_set: &[LabeledExample],
    backend: &dyn CompletionBackend,
    prompt_config: &PromptConfig,
) -> Result<Summary, EnsembleError> {
    call_once(snippet, priming_set, backend, prompt_config, 0)
}

fn call_once(
    snippet: &DialogueSnippet,
    priming_set: &[LabeledExample],
    backend: &dyn CompletionBackend,
    prompt_config: &PromptConfig,
    trial: usize,
) -> Result<Summary, EnsembleError> {
    let prompt = build_prompt(priming_set, snippet, prompt_config)?;
    let raw = backend
        .complete(&CompletionRequest::new(&prompt))
        .map_err(|source| EnsembleError::Backend { trial, source })?;
    Ok(parse_completion(&raw, prompt_config))
}

/// The ensemble with its priming blocks drawn once, reusable across snippets.
pub struct Ensemble<'a> {
    priming_sets: Vec<Vec<LabeledExample>>,
    prompt_config: PromptConfig,
    backend: &'a dyn CompletionBackend,
    recognizer: &'a dyn ConceptRecognizer,
}

impl<'a> Ensemble<'a> {
    pub fn new(
        universe: &[LabeledExample],
        config: &EnsembleConfig,
        backend: &'a dyn CompletionBackend,
        recognizer: &'a dyn ConceptRecognizer,
    ) -> Result<Self, EnsembleError> {
        Ensemble::with_prompt_config(universe, config, PromptConfig::default(), backend, recognizer)
    }

    /// Like [`Ensemble::new`] with explicit prompt tokens and example cap.
    pub fn with_prompt_config(
        universe: &[LabeledExample],
        config: &EnsembleConfig,
        prompt_config: PromptConfig,
        backend: &'a dyn CompletionBackend,
        recognizer: &'a dyn ConceptRecognizer,
    ) -> Result<Self, EnsembleError> {
        prompt_config.validate()?;
        if config.n_priming > prompt_config.max_examples {
            return Err(PromptError::TooManyExamples {
                count: config.n_priming,
                max: prompt_config.max_examples,
            }
            .into());
        }
        let priming_sets = sample_priming_sets(universe, config)?;
        Ok(Ensemble {
            priming_sets,
            prompt_config,
            backend,
            recognizer,
        })
    }

    pub fn priming_sets(&self) -> &[Vec<LabeledExample>] {
        &self.priming_sets
    }

    pub fn backend_id(&self) -> String {
        self.backend.backend_id()
    }

    fn run_trials(&self, snippet: &DialogueSnippet) -> Result<Vec<Summary>, EnsembleError> {
        let k = self.priming_sets.len();
        let workers = self.backend.max_concurrency().clamp(1, k);
        if workers == 1 {
            return self
                .priming_sets
                .iter()
                .enumerate()
                .map(|(i, set)| call_once(snippet, set, self.backend, &self.prompt_config, i))
                .collect();
        }
        let slots: Mutex<Vec<Option<Result<Summary, EnsembleError>>>> =
            Mutex::new((0..k).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= k {
                        break;
                    }
                    let r = call_once(snippet, &self.priming_sets[i], self.backend, &self.prompt_config, i);
                    slots.lock().expect("slots lock")[i] = Some(r);
                });
            }
        });
        // Ordered by trial index; the lowest failing trial is reported.
        slots
            .into_inner()
            .expect("slots lock")
            .into_iter()
            .map(|r| r.expect("every trial ran"))
            .collect()
    }

    pub fn summarize(&self, snippet: &DialogueSnippet) -> Result<EnsembleResult, EnsembleError> {
        let target = snippet_concepts(snippet, self.recognizer);
        let summaries = self.run_trials(snippet)?;
        let candidates: Vec<CandidateSummary> = summaries
            .into_iter()
            .zip(&self.priming_sets)
            .enumerate()
            .map(|(index, (summary, set))| {
                let concepts = self.recognizer.concepts(summary.as_str());
                let recall = concept_recall(&concepts, &target);
                CandidateSummary {
                    index,
                    summary,
                    concepts,
                    recall,
                    priming_ids: set.iter().map(|e| e.id().to_string()).collect(),
                }
            })
            .collect();
        let recalls: Vec<f64> = candidates.iter().map(|c| c.recall).collect();
        let chosen = first_argmax(&recalls).expect("at least one trial");
        Ok(EnsembleResult {
            snippet_id: snippet.id.clone(),
            snippet_concepts: target,
            candidates,
            chosen,
        })
    }
}

/// Runs the ensemble for a single snippet.
pub fn summarize_ens(
    snippet: &DialogueSnippet,
    universe: &[LabeledExample],
    config: &EnsembleConfig,
    backend: &dyn CompletionBackend,
    recognizer: &dyn ConceptRecognizer,
) -> Result<EnsembleResult, EnsembleError> {
    Ensemble::new(universe, config, backend, recognizer)?.summarize(snippet)
}
