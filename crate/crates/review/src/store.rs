//! Session storage: one snapshot manifest and one append-only event log per
//! session under `<root>/sessions/`, plus the shared feedback dataset of
//! reviewer edits at `<root>/feedback.jsonl`.

use std::collections::{HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use medens_core::corpus::{self, CorpusError, DialogueSnippet, LabeledExample, Summary};
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::model::{
    report, EventPayload, Progress, Report, ReviewEvent, ReviewItem, SessionMode, SessionSnapshot, SnippetView,
    StoredArm, StoredItem, Winner,
};

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("prediction files do not cover the same snippet ids: {detail}")]
    MismatchedIds { detail: String },
    #[error("{mode:?} sessions need at least {need} model(s), got {have}")]
    TooFewModels { mode: SessionMode, need: usize, have: usize },
    #[error("duplicate model name")]
    DuplicateModel,
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("this event is not allowed in a {0:?} session")]
    WrongMode(SessionMode),
    #[error("item {got} is not the current item ({current})")]
    StaleItem { got: String, current: String },
    #[error("item has no arm {0}")]
    UnknownArm(String),
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: corrupt session file: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReviewError + '_ {
    move |source| ReviewError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One model's summaries, keyed by snippet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelOutputs {
    pub model: String,
    pub records: Vec<(DialogueSnippet, Summary)>,
}

/// Parses a record line carrying `id`, `turns` and a string `summary`.
pub fn parse_prediction_line(line: &str, line_no: usize) -> Result<(DialogueSnippet, Summary), CorpusError> {
    let snippet = corpus::snippet_from_line(line, line_no)?;
    let value: serde_json::Value = serde_json::from_str(line).map_err(|_| CorpusError::Schema {
        line_no,
        field: "record".into(),
    })?;
    let summary = value
        .get("summary")
        .and_then(|s| s.as_str())
        .ok_or_else(|| CorpusError::Schema {
            line_no,
            field: "summary".into(),
        })?;
    Ok((snippet, Summary::new(summary)?))
}

pub fn load_predictions(model: &str, path: &Path) -> Result<ModelOutputs, ReviewError> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_prediction_line(line, i + 1)?);
    }
    Ok(ModelOutputs {
        model: model.to_string(),
        records,
    })
}

/// Joins model outputs by snippet id and assigns blinded, seeded arm ids
/// and presentation orders. Items follow the first model's order.
pub fn build_snapshot(
    session_id: &str,
    mode: SessionMode,
    outputs: &[ModelOutputs],
    seed: u64,
    created_at: &str,
) -> Result<SessionSnapshot, ReviewError> {
    let need = match mode {
        SessionMode::Grade => 1,
        SessionMode::Compare => 2,
    };
    if outputs.len() < need {
        return Err(ReviewError::TooFewModels {
            mode,
            need,
            have: outputs.len(),
        });
    }
    let names: HashSet<&str> = outputs.iter().map(|o| o.model.as_str()).collect();
    if names.len() != outputs.len() {
        return Err(ReviewError::DuplicateModel);
    }
    let mut by_model: Vec<HashMap<&str, &Summary>> = Vec::new();
    for o in outputs {
        let mut m = HashMap::new();
        for (s, summ) in &o.records {
            if m.insert(s.id.as_str(), summ).is_some() {
                return Err(CorpusError::DuplicateId { id: s.id.clone() }.into());
            }
        }
        by_model.push(m);
    }
    let first: HashSet<&str> = by_model[0].keys().copied().collect();
    for m in &by_model[1..] {
        let ids: HashSet<&str> = m.keys().copied().collect();
        if ids != first {
            let mut diff: Vec<&str> = ids.symmetric_difference(&first).copied().collect();
            diff.sort_unstable();
            return Err(ReviewError::MismatchedIds {
                detail: format!("{} id(s) differ, e.g. {:?}", diff.len(), diff[0]),
            });
        }
    }

    let mut rng = medens_core::sampling::rng(seed);
    let mut items = Vec::with_capacity(outputs[0].records.len());
    for (index, (snippet, _)) in outputs[0].records.iter().enumerate() {
        let mut order: Vec<usize> = (0..outputs.len()).collect();
        order.shuffle(&mut rng);
        let mut used = HashSet::new();
        let arms = order
            .into_iter()
            .map(|m| {
                let arm_id = loop {
                    let id = format!("a{:012x}", rng.random::<u64>() >> 16);
                    if used.insert(id.clone()) {
                        break id;
                    }
                };
                StoredArm {
                    arm_id,
                    model: outputs[m].model.clone(),
                    summary: by_model[m][snippet.id.as_str()].as_str().to_string(),
                }
            })
            .collect();
        items.push(StoredItem {
            item_id: format!("i{index}"),
            snippet: SnippetView::from(snippet),
            arms,
        });
    }
    Ok(SessionSnapshot {
        session_id: session_id.to_string(),
        mode,
        seed,
        created_at: created_at.to_string(),
        models: outputs.iter().map(|o| o.model.clone()).collect(),
        items,
    })
}

/// Re-derives progress from a log.
pub fn replay(snapshot: &SessionSnapshot, events: &[ReviewEvent]) -> Progress {
    let mut p = Progress::default();
    for e in events {
        p.apply(snapshot, e);
    }
    p
}

pub fn read_events(path: &Path) -> Result<Vec<ReviewEvent>, ReviewError> {
    let raw = match fs::read_to_string(path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| ReviewError::Corrupt {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextItem {
    Item(ReviewItem),
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Ack {
    pub cursor: usize,
    pub done: bool,
}

struct SessionState {
    snapshot: Arc<SessionSnapshot>,
    events: Vec<ReviewEvent>,
    progress: Progress,
}

/// All sessions under a data directory.
pub struct ReviewStore {
    root: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionState>>>>,
    feedback: Mutex<()>,
}

impl ReviewStore {
    /// Opens `root`, creating it if needed, and reloads existing sessions.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ReviewError> {
        let root = root.into();
        let dir = root.join("sessions");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            let Some(id) = name.strip_suffix(".session.json") else { continue };
            let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
            let snapshot: SessionSnapshot = serde_json::from_str(&raw).map_err(|e| ReviewError::Corrupt {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            let events = read_events(&dir.join(format!("{id}.events.jsonl")))?;
            let progress = replay(&snapshot, &events);
            log::info!("restored session {id} at item {}", progress.cursor);
            sessions.insert(
                id.to_string(),
                Arc::new(Mutex::new(SessionState {
                    snapshot: Arc::new(snapshot),
                    events,
                    progress,
                })),
            );
        }
        Ok(ReviewStore {
            root,
            sessions: RwLock::new(sessions),
            feedback: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn events_path(&self, session_id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{session_id}.events.jsonl"))
    }

    pub fn snapshot_path(&self, session_id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{session_id}.session.json"))
    }

    pub fn feedback_path(&self) -> PathBuf {
        self.root.join("feedback.jsonl")
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<SessionState>>, ReviewError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ReviewError::UnknownSession(id.to_string()))
    }

    pub fn create_session(
        &self,
        mode: SessionMode,
        outputs: &[ModelOutputs],
        seed: u64,
    ) -> Result<String, ReviewError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let now = chrono::Utc::now().to_rfc3339();
        let snapshot = build_snapshot(&id, mode, outputs, seed, &now)?;
        let path = self.snapshot_path(&id);
        let mut json = serde_json::to_string_pretty(&snapshot).expect("snapshot serializes");
        json.push('\n');
        fs::write(&path, json).map_err(io_err(&path))?;
        log::info!("created {mode:?} session {id} with {} items", snapshot.items.len());
        self.sessions.write().expect("session map lock").insert(
            id.clone(),
            Arc::new(Mutex::new(SessionState {
                snapshot: Arc::new(snapshot),
                events: Vec::new(),
                progress: Progress::default(),
            })),
        );
        Ok(id)
    }

    pub fn snapshot(&self, session_id: &str) -> Result<Arc<SessionSnapshot>, ReviewError> {
        Ok(self.session(session_id)?.lock().expect("session lock").snapshot.clone())
    }

    pub fn events(&self, session_id: &str) -> Result<Vec<ReviewEvent>, ReviewError> {
        Ok(self.session(session_id)?.lock().expect("session lock").events.clone())
    }

    /// The current item; does not advance the cursor.
    pub fn next_item(&self, session_id: &str) -> Result<NextItem, ReviewError> {
        let s = self.session(session_id)?;
        let s = s.lock().expect("session lock");
        Ok(match s.snapshot.blinded(s.progress.cursor) {
            Some(item) => NextItem::Item(item),
            None => NextItem::Done,
        })
    }

    pub fn submit(&self, session_id: &str, item_id: &str, payload: EventPayload) -> Result<Ack, ReviewError> {
        let s = self.session(session_id)?;
        let mut s = s.lock().expect("session lock");
        let snapshot = s.snapshot.clone();
        let current = snapshot.item(s.progress.cursor).ok_or_else(|| ReviewError::StaleItem {
            got: item_id.to_string(),
            current: "none, the session is done".into(),
        })?;
        if current.item_id != item_id {
            return Err(ReviewError::StaleItem {
                got: item_id.to_string(),
                current: current.item_id.clone(),
            });
        }
        let has_arm = |arm: &str| current.arms.iter().any(|a| a.arm_id == arm);
        let mut edit = None;
        match (&payload, snapshot.mode) {
            (EventPayload::Grade { arm_id, .. }, SessionMode::Grade) => {
                if !has_arm(arm_id) {
                    return Err(ReviewError::UnknownArm(arm_id.clone()));
                }
            }
            (EventPayload::Choice { winner }, SessionMode::Compare) => {
                if let Winner::Arm { arm_id } = winner {
                    if !has_arm(arm_id) {
                        return Err(ReviewError::UnknownArm(arm_id.clone()));
                    }
                }
            }
            (EventPayload::Edit { arm_id, edited_text }, _) => {
                if !has_arm(arm_id) {
                    return Err(ReviewError::UnknownArm(arm_id.clone()));
                }
                let text = edited_text.trim();
                if text.is_empty() {
                    return Err(ReviewError::InvalidEdit("edited text is empty".into()));
                }
                edit = Some(Summary::new(text).map_err(|e| ReviewError::InvalidEdit(e.to_string()))?);
            }
            (_, mode) => return Err(ReviewError::WrongMode(mode)),
        }

        let event = ReviewEvent {
            timestamp: chrono::Utc::now().to_rfc3339(),
            session_id: session_id.to_string(),
            item_id: item_id.to_string(),
            payload,
        };
        let seq = s.events.len();
        let path = self.events_path(session_id);
        let mut line = serde_json::to_string(&event).expect("event serializes");
        line.push('\n');
        append(&path, line.as_bytes())?;
        if let Some(summary) = edit {
            self.append_feedback(&current.snippet, summary, session_id, seq)?;
        }
        s.progress.apply(&snapshot, &event);
        s.events.push(event);
        Ok(Ack {
            cursor: s.progress.cursor,
            done: s.progress.cursor >= snapshot.items.len(),
        })
    }

    fn append_feedback(
        &self,
        snippet: &SnippetView,
        summary: Summary,
        session_id: &str,
        seq: usize,
    ) -> Result<(), ReviewError> {
        let turns = snippet
            .turns
            .iter()
            .map(|t| {
                let speaker = corpus::Speaker::from_tag(&t.speaker).ok_or_else(|| ReviewError::Corrupt {
                    path: self.snapshot_path(session_id),
                    reason: format!("unknown speaker {:?}", t.speaker),
                })?;
                Ok(corpus::Turn::new(speaker, &t.text)?)
            })
            .collect::<Result<Vec<_>, ReviewError>>()?;
        let id = format!("{}-edit-{}-{}", snippet.id, &session_id[..session_id.len().min(8)], seq);
        let example = LabeledExample::human(DialogueSnippet::new(id, turns)?, summary);
        let mut line = corpus::example_to_line(&example);
        line.push('\n');
        let _guard = self.feedback.lock().expect("feedback lock");
        append(&self.feedback_path(), line.as_bytes())
    }

    pub fn report(&self, session_id: &str) -> Result<Report, ReviewError> {
        let s = self.session(session_id)?;
        let s = s.lock().expect("session lock");
        Ok(report(&s.snapshot, &s.events))
    }
}

fn append(path: &Path, bytes: &[u8]) -> Result<(), ReviewError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}
