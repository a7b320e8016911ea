//! Automated summary metrics: ROUGE-L, Concept F1 and Negation F1.
//!
//! Every metric is built from [`Counts`] (matches, predicted size, gold
//! size) so that per-example scores and micro aggregates use the same
//! arithmetic. An undefined ratio is scored 0, which gives a conservative F1
//! of 0 when a side has no concepts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::medner::{ConceptRecognizer, ConceptSet};
use crate::negex::{tag_negations, TriggerRule};
use crate::text::plain_tokens;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("evaluation set is empty")]
    EmptyEvalSet,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PRF {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PRF {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PRF { precision, recall, f1 }
    }
}

/// Raw overlap counts behind a [`PRF`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Counts {
    pub fn prf(&self) -> PRF {
        PRF::new(ratio(self.matched, self.predicted), ratio(self.matched, self.gold))
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            matched: self.matched + o.matched,
            predicted: self.predicted + o.predicted,
            gold: self.gold + o.gold,
        }
    }
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l_counts(reference: &str, hypothesis: &str) -> Counts {
    let r = plain_tokens(reference);
    let h = plain_tokens(hypothesis);
    Counts {
        matched: lcs_len(&r, &h),
        predicted: h.len(),
        gold: r.len(),
    }
}

/// Whole-text ROUGE-L over lowercased, unstemmed tokens.
pub fn rouge_l(reference: &str, hypothesis: &str) -> PRF {
    rouge_l_counts(reference, hypothesis).prf()
}

pub fn set_counts(gold: &ConceptSet, predicted: &ConceptSet) -> Counts {
    Counts {
        matched: gold.intersection_len(predicted),
        predicted: predicted.len(),
        gold: gold.len(),
    }
}

pub fn concept_prf(reference: &str, hypothesis: &str, recognizer: &dyn ConceptRecognizer) -> PRF {
    set_counts(&recognizer.concepts(reference), &recognizer.concepts(hypothesis)).prf()
}

/// All concepts in `texts` and the subset with at least one negated mention.
pub fn concepts_with_negation(
    texts: &[&str],
    recognizer: &dyn ConceptRecognizer,
    rules: &[TriggerRule],
) -> (ConceptSet, ConceptSet) {
    let mut all = ConceptSet::new();
    let mut negated = ConceptSet::new();
    for text in texts {
        let mentions = recognizer.extract(text);
        for tag in tag_negations(text, &mentions, rules) {
            if tag.is_negated() {
                negated.insert(tag.mention.concept_id.clone());
            }
            all.insert(tag.mention.concept_id);
        }
    }
    (all, negated)
}

fn negation_counts(gold: &(ConceptSet, ConceptSet), predicted: &(ConceptSet, ConceptSet)) -> Counts {
    let domain = gold.0.intersection(&predicted.0);
    let gold_neg = domain.intersection(&gold.1);
    let pred_neg = domain.intersection(&predicted.1);
    set_counts(&gold_neg, &pred_neg)
}

/// Negation agreement over the concepts present in both texts.
pub fn negation_prf(
    reference: &str,
    hypothesis: &str,
    recognizer: &dyn ConceptRecognizer,
    rules: &[TriggerRule],
) -> PRF {
    let gold = concepts_with_negation(&[reference], recognizer, rules);
    let pred = concepts_with_negation(&[hypothesis], recognizer, rules);
    negation_counts(&gold, &pred).prf()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    #[default]
    Macro,
    Micro,
}

/// Where the gold concepts for Concept and Negation F1 come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptSource {
    #[default]
    Reference,
    /// The turns of the source snippet.
    Snippet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    /// Snippet turn texts, used with [`ConceptSource::Snippet`].
    pub source_turns: Vec<String>,
}

impl EvalPair {
    pub fn new(id: impl Into<String>, reference: impl Into<String>, hypothesis: impl Into<String>) -> Self {
        EvalPair {
            id: id.into(),
            reference: reference.into(),
            hypothesis: hypothesis.into(),
            source_turns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub id: String,
    pub rouge_l: PRF,
    pub concept: PRF,
    pub negation: PRF,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub negation_f1: f64,
    pub concept_f1: f64,
    pub rouge_l_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: AggregationMode,
    pub concept_source: ConceptSource,
    pub aggregate: Aggregate,
    pub per_example: Vec<ExampleScores>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub mode: AggregationMode,
    pub concept_source: ConceptSource,
}

struct Scored {
    scores: ExampleScores,
    rouge: Counts,
    concept: Counts,
    negation: Counts,
}

fn score(pair: &EvalPair, recognizer: &dyn ConceptRecognizer, rules: &[TriggerRule], source: ConceptSource) -> Scored {
    let gold_texts: Vec<&str> = match source {
        ConceptSource::Reference => vec![pair.reference.as_str()],
        ConceptSource::Snippet => pair.source_turns.iter().map(String::as_str).collect(),
    };
    let gold = concepts_with_negation(&gold_texts, recognizer, rules);
    let pred = concepts_with_negation(&[pair.hypothesis.as_str()], recognizer, rules);
    let rouge = rouge_l_counts(&pair.reference, &pair.hypothesis);
    let concept = set_counts(&gold.0, &pred.0);
    let negation = negation_counts(&gold, &pred);
    Scored {
        scores: ExampleScores {
            id: pair.id.clone(),
            rouge_l: rouge.prf(),
            concept: concept.prf(),
            negation: negation.prf(),
        },
        rouge,
        concept,
        negation,
    }
}

pub fn evaluate(
    pairs: &[EvalPair],
    recognizer: &dyn ConceptRecognizer,
    rules: &[TriggerRule],
    options: EvalOptions,
) -> Result<EvalReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyEvalSet);
    }
    let scored: Vec<Scored> = pairs
        .iter()
        .map(|p| score(p, recognizer, rules, options.concept_source))
        .collect();
    let aggregate = match options.mode {
        AggregationMode::Macro => {
            let n = scored.len() as f64;
            let mean = |f: fn(&ExampleScores) -> f64| scored.iter().map(|s| f(&s.scores)).sum::<f64>() / n;
            Aggregate {
                negation_f1: mean(|s| s.negation.f1),
                concept_f1: mean(|s| s.concept.f1),
                rouge_l_f1: mean(|s| s.rouge_l.f1),
            }
        }
        AggregationMode::Micro => {
            let sum = |f: fn(&Scored) -> Counts| scored.iter().map(f).fold(Counts::default(), |a, b| a + b);
            Aggregate {
                negation_f1: sum(|s| s.negation).prf().f1,
                concept_f1: sum(|s| s.concept).prf().f1,
                rouge_l_f1: sum(|s| s.rouge).prf().f1,
            }
        }
    };
    Ok(EvalReport {
        mode: options.mode,
        concept_source: options.concept_source,
        aggregate,
        per_example: scored.into_iter().map(|s| s.scores).collect(),
    })
}

impl EvalReport {
    /// Plain-text table: aggregate row first, then one row per example.
    /// Scores are percentages with two decimals.
    pub fn render_table(&self, label: &str) -> String {
        let mode = match self.mode {
            AggregationMode::Macro => "macro",
            AggregationMode::Micro => "micro",
        };
        let width = self
            .per_example
            .iter()
            .map(|e| e.id.len())
            .chain([label.len() + mode.len() + 3])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>11}  {:>10}  {:>10}", "Model", "Negation F1", "Concept F1", "ROUGE-L F1");
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "{:<width$}  {:>11.2}  {:>10.2}  {:>10.2}",
            format!("{label} ({mode})"),
            a.negation_f1 * 100.0,
            a.concept_f1 * 100.0,
            a.rouge_l_f1 * 100.0
        );
        for e in &self.per_example {
            let _ = writeln!(
                out,
                "{:<width$}  {:>11.2}  {:>10.2}  {:>10.2}",
                e.id,
                e.negation.f1 * 100.0,
                e.concept.f1 * 100.0,
                e.rouge_l.f1 * 100.0
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medner::{Lexicon, LexiconEntry, SemanticType};
    use crate::negex::default_triggers;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    fn lex(words: &[&str]) -> Lexicon {
        Lexicon::from_entries(
            words
                .iter()
                .map(|w| LexiconEntry {
                    concept_id: format!("c:{w}"),
                    canonical_name: w.to_string(),
                    surface_form: w.to_string(),
                    semantic_type: SemanticType::Symptom,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rouge_fixtures() {
        let p = rouge_l("the cat sat", "the cat ran");
        assert!((p.precision - 2.0 / 3.0).abs() < EPS);
        assert!((p.recall - 2.0 / 3.0).abs() < EPS);
        assert!((p.f1 - 2.0 / 3.0).abs() < EPS);
        assert_eq!(rouge_l("Same text here", "same text here").f1, 1.0);
        assert_eq!(rouge_l("", "anything"), PRF::default());
    }

    #[test]
    fn concept_fixtures() {
        let l = lex(&["a", "b", "c", "d", "x"]);
        let p = concept_prf("a b c d", "a b x", &l);
        assert!((p.recall - 0.5).abs() < EPS);
        assert!((p.precision - 2.0 / 3.0).abs() < EPS);
        assert!((p.f1 - 4.0 / 7.0).abs() < EPS);
        assert_eq!(concept_prf("a b", "b a", &l).f1, 1.0);
        assert_eq!(concept_prf("none", "here", &l), PRF::default());
        let one_sided = concept_prf("a", "nothing", &l);
        assert_eq!((one_sided.precision, one_sided.recall, one_sided.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn negation_fixtures() {
        let l = lex(&["fever"]);
        let rules = default_triggers();
        assert_eq!(negation_prf("no fever", "denies fever", &l, &rules).f1, 1.0);
        assert_eq!(negation_prf("no fever", "has fever", &l, &rules).f1, 0.0);
        assert_eq!(negation_prf("no fever", "nothing", &l, &rules), PRF::default());
    }

    #[test]
    fn macro_and_micro_diverge() {
        let l = lex(&["a", "b", "c", "d"]);
        let pairs = [EvalPair::new("1", "a", "a"), EvalPair::new("2", "a b c d", "")];
        let rules = default_triggers();
        let macro_ = evaluate(&pairs, &l, &rules, EvalOptions::default()).unwrap();
        assert!((macro_.aggregate.concept_f1 - 0.5).abs() < EPS);
        let micro = evaluate(
            &pairs,
            &l,
            &rules,
            EvalOptions {
                mode: AggregationMode::Micro,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((micro.aggregate.concept_f1 - 1.0 / 3.0).abs() < EPS);
    }

    #[test]
    fn single_pair_aggregate_equals_its_scores() {
        let l = lex(&["fever", "cough"]);
        let rules = default_triggers();
        let pairs = [EvalPair::new("1", "fever and no cough", "fever, cough")];
        for mode in [AggregationMode::Macro, AggregationMode::Micro] {
            let r = evaluate(&pairs, &l, &rules, EvalOptions { mode, ..Default::default() }).unwrap();
            let e = &r.per_example[0];
            assert!((r.aggregate.concept_f1 - e.concept.f1).abs() < EPS);
            assert!((r.aggregate.negation_f1 - e.negation.f1).abs() < EPS);
            assert!((r.aggregate.rouge_l_f1 - e.rouge_l.f1).abs() < EPS);
        }
    }

    #[test]
    fn snippet_source_uses_turns() {
        let l = lex(&["fever", "cough"]);
        let mut pair = EvalPair::new("1", "fever", "fever and cough");
        pair.source_turns = vec!["Any fever?".into(), "Yes and a cough".into()];
        let opts = EvalOptions {
            concept_source: ConceptSource::Snippet,
            ..Default::default()
        };
        let r = evaluate(&[pair], &l, &default_triggers(), opts).unwrap();
        assert_eq!(r.per_example[0].concept.f1, 1.0);
    }

    #[test]
    fn empty_eval_set() {
        assert_eq!(
            evaluate(&[], &lex(&["a"]), &[], EvalOptions::default()),
            Err(MetricsError::EmptyEvalSet)
        );
    }

    #[test]
    fn report_json_shape_and_table() {
        let l = lex(&["a"]);
        let r = evaluate(&[EvalPair::new("x1", "a", "a")], &l, &[], EvalOptions::default()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["mode"], "macro");
        assert_eq!(v["aggregate"]["concept_f1"], 1.0);
        assert!(v["per_example"].is_array());
        let table = r.render_table("mock");
        assert!(table.contains("Negation F1"));
        assert!(table.contains("mock (macro)"));
        assert!(table.contains("100.00"));
    }

    fn seq() -> impl Strategy<Value = Vec<&'static str>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..10)
    }

    proptest! {
        #[test]
        fn rouge_f_symmetric(a in seq(), b in seq()) {
            let (a, b) = (a.join(" "), b.join(" "));
            let x = rouge_l(&a, &b);
            let y = rouge_l(&b, &a);
            prop_assert!((x.f1 - y.f1).abs() < EPS);
            prop_assert!((x.precision - y.recall).abs() < EPS);
        }

        #[test]
        fn shared_suffix_never_shrinks_lcs(a in seq(), b in seq(), s in seq()) {
            let before = lcs_len(&a, &b);
            let a2: Vec<_> = a.iter().chain(&s).collect();
            let b2: Vec<_> = b.iter().chain(&s).collect();
            prop_assert!(lcs_len(&a2, &b2) >= before);
        }

        #[test]
        fn components_in_unit_interval(a in ".{0,40}", b in ".{0,40}") {
            let l = Lexicon::demo();
            let rules = default_triggers();
            for p in [rouge_l(&a, &b), concept_prf(&a, &b, &l), negation_prf(&a, &b, &l, &rules)] {
                for v in [p.precision, p.recall, p.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn perfect_concept_f1_iff_equal_nonempty(a in seq(), b in seq()) {
            let l = lex(&["a", "b", "c", "d"]);
            let (ra, rb) = (a.join(" "), b.join(" "));
            let same = l.concepts(&ra) == l.concepts(&rb) && !l.concepts(&ra).is_empty();
            prop_assert_eq!(concept_prf(&ra, &rb, &l).f1 == 1.0, same);
        }

        #[test]
        fn spurious_concept_never_raises_precision(a in seq(), b in seq()) {
            let l = lex(&["a", "b", "c", "d", "zzz"]);
            let (ra, rb) = (a.join(" "), b.join(" "));
            let before = concept_prf(&ra, &rb, &l).precision;
            let after = concept_prf(&ra, &format!("{rb} zzz"), &l).precision;
            prop_assert!(after <= before + EPS);
        }

        #[test]
        fn macro_is_mean(pairs in prop::collection::vec((seq(), seq()), 1..8)) {
            let l = lex(&["a", "b", "c", "d"]);
            let pairs: Vec<_> = pairs.iter().enumerate()
                .map(|(i, (r, h))| EvalPair::new(i.to_string(), r.join(" "), h.join(" ")))
                .collect();
            let rep = evaluate(&pairs, &l, &[], EvalOptions::default()).unwrap();
            let n = rep.per_example.len() as f64;
            let mean = rep.per_example.iter().map(|e| e.concept.f1).sum::<f64>() / n;
            prop_assert!((rep.aggregate.concept_f1 - mean).abs() < EPS);
        }
    }
}
