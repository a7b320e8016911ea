//! Seeded synthetic dialogue corpus for demos and tests.
//!
//! Snippets are built from templates over symptoms and medications in the
//! bundled lexicon, with a matching reference summary. The output carries no
//! clinical meaning.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, DialogueSnippet, LabeledExample, Speaker, Summary, Turn};
use crate::sampling;

const SYMPTOMS: &[&str] = &[
    "fever", "cough", "headache", "nausea", "chest pain", "sore throat", "back pain", "dizziness",
    "vomiting", "diarrhea", "rash", "fatigue", "shortness of breath", "abdominal pain", "chills",
    "runny nose", "itching", "swelling", "palpitations", "night sweats",
];

const MEDICATIONS: &[&str] = &[
    "ibuprofen", "acetaminophen", "metformin", "lisinopril", "omeprazole", "albuterol",
    "amoxicillin", "sertraline", "loratadine", "prednisone",
];

const DURATIONS: &[&str] = &["2 days", "3 days", "a week", "two weeks", "a month", "since yesterday"];

struct Exchange {
    turns: Vec<(Speaker, String)>,
    summary: String,
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty template list")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn exchange(rng: &mut ChaCha8Rng) -> Exchange {
    use Speaker::{Doctor as DR, Patient as PT};
    let s = pick(rng, SYMPTOMS);
    let d = pick(rng, DURATIONS);
    match rng.random_range(0..6) {
        0 => Exchange {
            turns: vec![
                (DR, format!("Do you have any {s}?")),
                (PT, format!("Yes, I have had {s} for {d}.")),
            ],
            summary: format!("Reports {s} for {d}."),
        },
        1 => Exchange {
            turns: vec![(DR, format!("Have you noticed any {s}?")), (PT, format!("No, no {s}."))],
            summary: format!("Denies {s}."),
        },
        2 => {
            let mut t = pick(rng, SYMPTOMS);
            while t == s {
                t = pick(rng, SYMPTOMS);
            }
            Exchange {
                turns: vec![
                    (DR, format!("Any {s} or {t}?")),
                    (PT, format!("Some {s} but no {t}.")),
                ],
                summary: format!("Reports {s}. Denies {t}."),
            }
        }
        3 => {
            let m = pick(rng, MEDICATIONS);
            Exchange {
                turns: vec![
                    (DR, "Are you taking any medications?".to_string()),
                    (PT, format!("I take {m} every day.")),
                ],
                summary: format!("Takes {m} daily."),
            }
        }
        4 => {
            let m = pick(rng, MEDICATIONS);
            Exchange {
                turns: vec![
                    (DR, format!("How long have you had the {s}?")),
                    (PT, format!("About {d}.")),
                    (DR, "Okay, thanks.".to_string()),
                    (PT, format!("I tried {m} but it did not help.")),
                ],
                summary: format!("{} for about {d}. Tried {m} without relief.", capitalize(s)),
            }
        }
        _ => Exchange {
            turns: vec![
                (DR, format!("Is the {s} getting worse?")),
                (PT, "It is about the same.".to_string()),
            ],
            summary: format!("{} is unchanged.", capitalize(s)),
        },
    }
}

fn to_snippet(id: String, ex: &Exchange) -> DialogueSnippet {
    let turns = ex
        .turns
        .iter()
        .map(|(sp, t)| Turn::new(*sp, t).expect("templates are non-empty"))
        .collect();
    DialogueSnippet::new(id, turns).expect("templates have turns")
}

/// `n` labeled examples with ids `{prefix}-{i}`.
pub fn labeled_examples(n: usize, seed: u64, prefix: &str) -> Vec<LabeledExample> {
    let mut rng = sampling::rng(seed);
    (0..n)
        .map(|i| {
            let ex = exchange(&mut rng);
            LabeledExample::human(
                to_snippet(format!("{prefix}-{i}"), &ex),
                Summary::new(ex.summary).expect("templates avoid reserved tokens"),
            )
        })
        .collect()
}

/// A human-labeled dataset named `name`.
pub fn labeled_dataset(n: usize, seed: u64, name: &str) -> Dataset {
    Dataset::new(name, labeled_examples(n, seed, name), seed, Vec::new())
        .expect("generated ids are unique")
}

/// A raw `DR:`/`PT:` transcript holding `n` exchanges.
pub fn transcript(n: usize, seed: u64) -> String {
    let mut rng = sampling::rng(seed);
    let mut out = String::new();
    for _ in 0..n {
        for (sp, t) in exchange(&mut rng).turns {
            out.push_str(sp.tag());
            out.push_str(": ");
            out.push_str(&t);
            out.push('\n');
        }
    }
    out
}
