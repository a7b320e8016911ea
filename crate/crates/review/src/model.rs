//! Session, item and event types, and the fold that turns an event log into
//! session progress and a report.

use std::collections::{BTreeMap, HashMap, HashSet};

use medens_core::corpus::DialogueSnippet;
use serde::{Deserialize, Serialize};

/// Fact-coverage bucket: All (100%), Most (at least 75%), Some (at least one
/// fact but under 75%), None (0%).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradeBucket {
    All,
    Most,
    Some,
    None,
}

impl GradeBucket {
    pub const ALL: [GradeBucket; 4] = [GradeBucket::All, GradeBucket::Most, GradeBucket::Some, GradeBucket::None];

    /// Bucket for `covered` of `total` facts.
    pub fn from_coverage(covered: usize, total: usize) -> GradeBucket {
        if total == 0 || covered >= total {
            return GradeBucket::All;
        }
        if covered == 0 {
            GradeBucket::None
        } else if covered * 4 >= total * 3 {
            GradeBucket::Most
        } else {
            GradeBucket::Some
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    Grade,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Winner {
    Arm { arm_id: String },
    AllGood,
    NoneGood,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventPayload {
    Grade { arm_id: String, bucket: GradeBucket },
    Choice { winner: Winner },
    Edit { arm_id: String, edited_text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEvent {
    pub timestamp: String,
    pub session_id: String,
    pub item_id: String,
    pub payload: EventPayload,
}

/// One arm as stored server-side, with the model name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredArm {
    pub arm_id: String,
    pub model: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredItem {
    pub item_id: String,
    pub snippet: SnippetView,
    /// In presentation order.
    pub arms: Vec<StoredArm>,
}

/// Snapshot manifest of a session. Never sent to clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub mode: SessionMode,
    pub seed: u64,
    pub created_at: String,
    pub models: Vec<String>,
    pub items: Vec<StoredItem>,
}

impl SessionSnapshot {
    pub fn item(&self, index: usize) -> Option<&StoredItem> {
        self.items.get(index)
    }

    /// Client-facing view of item `index`.
    pub fn blinded(&self, index: usize) -> Option<ReviewItem> {
        let item = self.items.get(index)?;
        Some(ReviewItem {
            item_id: item.item_id.clone(),
            position: index,
            total: self.items.len(),
            snippet: item.snippet.clone(),
            arms: item
                .arms
                .iter()
                .map(|a| BlindedArm {
                    arm_id: a.arm_id.clone(),
                    summary: a.summary.clone(),
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnView {
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetView {
    pub id: String,
    pub turns: Vec<TurnView>,
}

impl From<&DialogueSnippet> for SnippetView {
    fn from(s: &DialogueSnippet) -> Self {
        SnippetView {
            id: s.id.clone(),
            turns: s
                .turns()
                .iter()
                .map(|t| TurnView {
                    speaker: t.speaker().tag().to_string(),
                    text: t.text().to_string(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindedArm {
    pub arm_id: String,
    pub summary: String,
}

/// What a reviewer sees: arms under opaque ids, no model names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub position: usize,
    pub total: usize,
    pub snippet: SnippetView,
    pub arms: Vec<BlindedArm>,
}

/// Progress derived from the event log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Progress {
    pub cursor: usize,
    /// Arms of the current item graded so far.
    pub graded: HashSet<String>,
}

impl Progress {
    /// Applies an already validated event.
    pub fn apply(&mut self, snapshot: &SessionSnapshot, event: &ReviewEvent) {
        let Some(item) = snapshot.item(self.cursor) else { return };
        match &event.payload {
            EventPayload::Grade { arm_id, .. } => {
                self.graded.insert(arm_id.clone());
                if item.arms.iter().all(|a| self.graded.contains(&a.arm_id)) {
                    self.cursor += 1;
                    self.graded.clear();
                }
            }
            EventPayload::Choice { .. } => {
                self.cursor += 1;
                self.graded.clear();
            }
            EventPayload::Edit { .. } => {}
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketFractions {
    pub all: f64,
    pub most: f64,
    pub some: f64,
    pub none: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Report {
    Grade {
        /// Per model, the fraction of its graded items in each bucket.
        per_model: BTreeMap<String, BucketFractions>,
        graded_items: BTreeMap<String, usize>,
    },
    Compare {
        /// Items on which each model was judged best; an AllGood choice
        /// credits every model.
        best: BTreeMap<String, usize>,
        all_good: usize,
        none_good: usize,
        choices: usize,
    },
}

/// Folds the event log into a report. When an arm is graded more than once
/// the last grade counts.
pub fn report(snapshot: &SessionSnapshot, events: &[ReviewEvent]) -> Report {
    let model_of: HashMap<(&str, &str), &str> = snapshot
        .items
        .iter()
        .flat_map(|i| i.arms.iter().map(move |a| ((i.item_id.as_str(), a.arm_id.as_str()), a.model.as_str())))
        .collect();
    match snapshot.mode {
        SessionMode::Grade => {
            let mut latest: BTreeMap<(&str, &str), GradeBucket> = BTreeMap::new();
            for e in events {
                if let EventPayload::Grade { arm_id, bucket } = &e.payload {
                    if let Some(model) = model_of.get(&(e.item_id.as_str(), arm_id.as_str())) {
                        latest.insert((e.item_id.as_str(), model), *bucket);
                    }
                }
            }
            let mut counts: BTreeMap<String, [usize; 4]> =
                snapshot.models.iter().map(|m| (m.clone(), [0; 4])).collect();
            for ((_, model), bucket) in latest {
                let idx = GradeBucket::ALL.iter().position(|b| *b == bucket).expect("known bucket");
                counts.entry(model.to_string()).or_default()[idx] += 1;
            }
            let mut per_model = BTreeMap::new();
            let mut graded_items = BTreeMap::new();
            for (model, c) in counts {
                let n: usize = c.iter().sum();
                let frac = |k: usize| if n == 0 { 0.0 } else { c[k] as f64 / n as f64 };
                per_model.insert(
                    model.clone(),
                    BucketFractions {
                        all: frac(0),
                        most: frac(1),
                        some: frac(2),
                        none: frac(3),
                    },
                );
                graded_items.insert(model, n);
            }
            Report::Grade { per_model, graded_items }
        }
        SessionMode::Compare => {
            let mut best: BTreeMap<String, usize> = snapshot.models.iter().map(|m| (m.clone(), 0)).collect();
            let (mut all_good, mut none_good, mut choices) = (0, 0, 0);
            for e in events {
                let EventPayload::Choice { winner } = &e.payload else { continue };
                choices += 1;
                match winner {
                    Winner::Arm { arm_id } => {
                        if let Some(model) = model_of.get(&(e.item_id.as_str(), arm_id.as_str())) {
                            *best.entry(model.to_string()).or_default() += 1;
                        }
                    }
                    Winner::AllGood => {
                        all_good += 1;
                        for v in best.values_mut() {
                            *v += 1;
                        }
                    }
                    Winner::NoneGood => none_good += 1,
                }
            }
            Report::Compare {
                best,
                all_good,
                none_good,
                choices,
            }
        }
    }
}
