//! Dialogue and dataset types, transcript parsing, snippet splitting and the
//! line-oriented dataset record format.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Tokens the prompt format reserves. They may not appear in turns or
/// summaries.
pub const RESERVED_TOKENS: [&str; 3] = ["[SEP]", "[SUMMARIZED]", "[STOP]"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line_no}: expected a DR: or PT: prefix")]
    MalformedTranscript { line_no: usize },
    #[error("turn text is empty")]
    EmptyTurn,
    #[error("snippet {id:?} has no turns")]
    EmptySnippet { id: String },
    #[error("text contains reserved token {token}")]
    ReservedToken { token: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line_no}: bad or missing field `{field}`")]
    Schema { line_no: usize, field: String },
    #[error("duplicate snippet id {id:?}")]
    DuplicateId { id: String },
    #[error("manifest disagrees with records: {reason}")]
    ManifestMismatch { reason: String },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Speaker {
    Doctor,
    Patient,
}

impl Speaker {
    /// Record-format tag: `DR` or `PT`.
    pub fn tag(self) -> &'static str {
        match self {
            Speaker::Doctor => "DR",
            Speaker::Patient => "PT",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "DR" => Some(Speaker::Doctor),
            "PT" => Some(Speaker::Patient),
            _ => None,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    speaker: Speaker,
    text: String,
}

impl Turn {
    /// Trims `text`; fails if nothing remains.
    pub fn new(speaker: Speaker, text: impl AsRef<str>) -> Result<Self, CorpusError> {
        let text = text.as_ref().trim();
        if text.is_empty() {
            return Err(CorpusError::EmptyTurn);
        }
        Ok(Turn {
            speaker,
            text: text.to_string(),
        })
    }

    pub fn doctor(text: impl AsRef<str>) -> Result<Self, CorpusError> {
        Turn::new(Speaker::Doctor, text)
    }

    pub fn patient(text: impl AsRef<str>) -> Result<Self, CorpusError> {
        Turn::new(Speaker::Patient, text)
    }

    pub fn speaker(&self) -> Speaker {
        self.speaker
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// A doctor turn containing `?` opens a new snippet.
    pub fn is_physician_question(&self) -> bool {
        self.speaker == Speaker::Doctor && self.text.contains('?')
    }
}

/// Ordered, non-empty run of turns; the unit of summarization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueSnippet {
    pub id: String,
    turns: Vec<Turn>,
}

impl DialogueSnippet {
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Result<Self, CorpusError> {
        let id = id.into();
        if turns.is_empty() {
            return Err(CorpusError::EmptySnippet { id });
        }
        Ok(DialogueSnippet { id, turns })
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    /// Turn texts joined by newlines, without role prefixes.
    pub fn plain_text(&self) -> String {
        self.turns
            .iter()
            .map(Turn::text)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Summary text; free of the reserved prompt tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Summary(String);

impl Summary {
    pub fn new(text: impl Into<String>) -> Result<Self, CorpusError> {
        let text = text.into();
        check_reserved(&text)?;
        Ok(Summary(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub(crate) fn check_reserved(text: &str) -> Result<(), CorpusError> {
    match RESERVED_TOKENS.iter().find(|t| text.contains(*t)) {
        Some(t) => Err(CorpusError::ReservedToken {
            token: t.to_string(),
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Human,
    /// Produced by the ensemble labeler with `k` trials.
    Synthetic { k: u32, backend_id: String },
}

impl Provenance {
    pub fn is_human(&self) -> bool {
        matches!(self, Provenance::Human)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub snippet: DialogueSnippet,
    pub summary: Summary,
    pub provenance: Provenance,
}

impl LabeledExample {
    pub fn human(snippet: DialogueSnippet, summary: Summary) -> Self {
        LabeledExample {
            snippet,
            summary,
            provenance: Provenance::Human,
        }
    }

    pub fn id(&self) -> &str {
        &self.snippet.id
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceCounts {
    pub human: usize,
    pub synthetic: usize,
}

impl ProvenanceCounts {
    pub fn of(examples: &[LabeledExample]) -> Self {
        let human = examples.iter().filter(|e| e.provenance.is_human()).count();
        ProvenanceCounts {
            human,
            synthetic: examples.len() - human,
        }
    }

    pub fn total(&self) -> usize {
        self.human + self.synthetic
    }
}

/// Parameters of an ensemble generation run, kept in synthetic manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationInfo {
    pub k_trials: usize,
    pub n_priming: usize,
    pub backend_id: String,
    pub universe: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub size: usize,
    pub provenance_counts: ProvenanceCounts,
    pub seed: u64,
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<LabeledExample>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Builds a dataset and its manifest. Snippet ids must be unique.
    pub fn new(
        name: impl Into<String>,
        examples: Vec<LabeledExample>,
        seed: u64,
        parents: Vec<String>,
    ) -> Result<Self, CorpusError> {
        ensure_unique_ids(examples.iter().map(LabeledExample::id))?;
        let name = name.into();
        let manifest = DatasetManifest {
            name: name.clone(),
            size: examples.len(),
            provenance_counts: ProvenanceCounts::of(&examples),
            seed,
            parents,
            alpha: None,
            generation: None,
        };
        Ok(Dataset {
            name,
            examples,
            manifest,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(LabeledExample::id)
    }

    /// Checks the manifest against the records.
    pub fn validate(&self) -> Result<(), CorpusError> {
        ensure_unique_ids(self.ids())?;
        let counts = ProvenanceCounts::of(&self.examples);
        if self.manifest.size != self.examples.len() {
            return Err(CorpusError::ManifestMismatch {
                reason: format!(
                    "size {} but {} records",
                    self.manifest.size,
                    self.examples.len()
                ),
            });
        }
        if self.manifest.provenance_counts != counts {
            return Err(CorpusError::ManifestMismatch {
                reason: format!(
                    "provenance counts {:?} but records give {:?}",
                    self.manifest.provenance_counts, counts
                ),
            });
        }
        if self.manifest.name != self.name {
            return Err(CorpusError::ManifestMismatch {
                reason: format!("name {:?} vs {:?}", self.manifest.name, self.name),
            });
        }
        Ok(())
    }
}

fn ensure_unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(CorpusError::DuplicateId { id: id.to_string() });
        }
    }
    Ok(())
}

/// Parses a `DR:` / `PT:` transcript, one turn per non-blank line.
pub fn parse_transcript(raw: &str) -> Result<Vec<Turn>, CorpusError> {
    let mut turns = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (speaker, rest) = split_prefix(line).ok_or(CorpusError::MalformedTranscript { line_no })?;
        let turn =
            Turn::new(speaker, rest).map_err(|_| CorpusError::MalformedTranscript { line_no })?;
        turns.push(turn);
    }
    Ok(turns)
}

fn split_prefix(line: &str) -> Option<(Speaker, &str)> {
    let head = line.get(..3)?;
    let speaker = if head.eq_ignore_ascii_case("dr:") {
        Speaker::Doctor
    } else if head.eq_ignore_ascii_case("pt:") {
        Speaker::Patient
    } else {
        return None;
    };
    Some((speaker, &line[3..]))
}

/// Cuts a dialogue into snippets, each opened by a physician question.
///
/// Turns before the first physician question become a snippet of their own
/// only when at least one of them is a patient turn. Ids are
/// `{source}-{index}`.
pub fn split_into_snippets(turns: &[Turn], source: &str) -> Vec<DialogueSnippet> {
    let mut groups: Vec<Vec<Turn>> = Vec::new();
    let mut leading: Vec<Turn> = Vec::new();
    let mut opened = false;

    for turn in turns {
        if turn.is_physician_question() {
            opened = true;
            groups.push(vec![turn.clone()]);
        } else if opened {
            groups.last_mut().expect("opened").push(turn.clone());
        } else {
            leading.push(turn.clone());
        }
    }
    if leading.iter().any(|t| t.speaker() == Speaker::Patient) {
        groups.insert(0, leading);
    }

    groups
        .into_iter()
        .enumerate()
        .map(|(i, turns)| DialogueSnippet {
            id: format!("{source}-{i}"),
            turns,
        })
        .collect()
}

// ---- record format ----

#[derive(Serialize)]
struct TurnRecord<'a> {
    speaker: &'static str,
    text: &'a str,
}

#[derive(Serialize)]
struct ProvenanceRecord<'a> {
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    backend_id: Option<&'a str>,
}

#[derive(Serialize)]
struct Record<'a> {
    id: &'a str,
    turns: Vec<TurnRecord<'a>>,
    summary: Option<&'a str>,
    provenance: Option<ProvenanceRecord<'a>>,
}

fn record_line(
    snippet: &DialogueSnippet,
    summary: Option<&Summary>,
    provenance: Option<&Provenance>,
) -> String {
    let record = Record {
        id: &snippet.id,
        turns: snippet
            .turns
            .iter()
            .map(|t| TurnRecord {
                speaker: t.speaker.tag(),
                text: &t.text,
            })
            .collect(),
        summary: summary.map(Summary::as_str),
        provenance: provenance.map(|p| match p {
            Provenance::Human => ProvenanceRecord {
                kind: "human",
                k: None,
                backend_id: None,
            },
            Provenance::Synthetic { k, backend_id } => ProvenanceRecord {
                kind: "synthetic",
                k: Some(*k),
                backend_id: Some(backend_id),
            },
        }),
    };
    serde_json::to_string(&record).expect("record serialization is infallible")
}

/// Serializes one labeled example as a record line (no trailing newline).
pub fn example_to_line(example: &LabeledExample) -> String {
    record_line(
        &example.snippet,
        Some(&example.summary),
        Some(&example.provenance),
    )
}

/// Serializes an unlabeled snippet: `summary` and `provenance` are null.
pub fn snippet_to_line(snippet: &DialogueSnippet) -> String {
    record_line(snippet, None, None)
}

fn schema(line_no: usize, field: &str) -> CorpusError {
    CorpusError::Schema {
        line_no,
        field: field.to_string(),
    }
}

fn parse_snippet(obj: &serde_json::Map<String, Value>, line_no: usize) -> Result<DialogueSnippet, CorpusError> {
    let id = obj
        .get("id")
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| schema(line_no, "id"))?;
    let raw_turns = obj
        .get("turns")
        .and_then(Value::as_array)
        .filter(|a| !a.is_empty())
        .ok_or_else(|| schema(line_no, "turns"))?;
    let mut turns = Vec::with_capacity(raw_turns.len());
    for t in raw_turns {
        let speaker = t
            .get("speaker")
            .and_then(Value::as_str)
            .and_then(Speaker::from_tag)
            .ok_or_else(|| schema(line_no, "turns.speaker"))?;
        let text = t
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(line_no, "turns.text"))?;
        // Stored text must already be trimmed so that round-trips are exact.
        if text.trim() != text {
            return Err(schema(line_no, "turns.text"));
        }
        turns.push(Turn::new(speaker, text).map_err(|_| schema(line_no, "turns.text"))?);
    }
    Ok(DialogueSnippet {
        id: id.to_string(),
        turns,
    })
}

fn parse_provenance(value: &Value, line_no: usize) -> Result<Provenance, CorpusError> {
    let kind = value
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| schema(line_no, "provenance.kind"))?;
    match kind {
        "human" => Ok(Provenance::Human),
        "synthetic" => {
            let k = value
                .get("k")
                .and_then(Value::as_u64)
                .filter(|k| *k >= 1)
                .and_then(|k| u32::try_from(k).ok())
                .ok_or_else(|| schema(line_no, "provenance.k"))?;
            let backend_id = value
                .get("backend_id")
                .and_then(Value::as_str)
                .ok_or_else(|| schema(line_no, "provenance.backend_id"))?;
            Ok(Provenance::Synthetic {
                k,
                backend_id: backend_id.to_string(),
            })
        }
        _ => Err(schema(line_no, "provenance.kind")),
    }
}

fn parse_object(line: &str, line_no: usize) -> Result<serde_json::Map<String, Value>, CorpusError> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        _ => Err(schema(line_no, "<record>")),
    }
}

/// Parses a labeled record line. `summary` and `provenance` are required.
pub fn example_from_line(line: &str, line_no: usize) -> Result<LabeledExample, CorpusError> {
    let obj = parse_object(line, line_no)?;
    let snippet = parse_snippet(&obj, line_no)?;
    let summary = obj
        .get("summary")
        .and_then(Value::as_str)
        .ok_or_else(|| schema(line_no, "summary"))?;
    let summary = Summary::new(summary).map_err(|_| schema(line_no, "summary"))?;
    let provenance = obj
        .get("provenance")
        .filter(|v| !v.is_null())
        .ok_or_else(|| schema(line_no, "provenance"))?;
    let provenance = parse_provenance(provenance, line_no)?;
    Ok(LabeledExample {
        snippet,
        summary,
        provenance,
    })
}

/// Parses only the snippet part of a record; summary and provenance may be
/// null, absent or present.
pub fn snippet_from_line(line: &str, line_no: usize) -> Result<DialogueSnippet, CorpusError> {
    let obj = parse_object(line, line_no)?;
    parse_snippet(&obj, line_no)
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, line));
    }
    Ok(out)
}

/// Sidecar manifest path: `dir/train.jsonl` → `dir/train.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CorpusError> {
    let tmp = path.with_file_name(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| CorpusError::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| CorpusError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CorpusError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CorpusError::io(path, e))
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), CorpusError> {
    let mut json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| CorpusError::Schema {
        line_no: e.line(),
        field: "manifest".into(),
    })
}

/// Writes the records and the sidecar manifest.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<(), CorpusError> {
    dataset.validate()?;
    let mut buf = String::new();
    for e in &dataset.examples {
        buf.push_str(&example_to_line(e));
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())?;
    write_manifest(&dataset.manifest, &manifest_path(path))
}

/// Reads records and, when present, the sidecar manifest.
///
/// Without a sidecar the dataset is named after the file stem with seed 0
/// and no parents.
pub fn read_dataset(path: &Path) -> Result<Dataset, CorpusError> {
    let mut examples = Vec::new();
    for (line_no, line) in read_lines(path)? {
        examples.push(example_from_line(&line, line_no)?);
    }
    let sidecar = manifest_path(path);
    if sidecar.exists() {
        let manifest = read_manifest(&sidecar)?;
        let dataset = Dataset {
            name: manifest.name.clone(),
            examples,
            manifest,
        };
        dataset.validate()?;
        Ok(dataset)
    } else {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Dataset::new(stem, examples, 0, Vec::new())
    }
}

/// Writes unlabeled snippets in the record format.
pub fn write_snippets(snippets: &[DialogueSnippet], path: &Path) -> Result<(), CorpusError> {
    ensure_unique_ids(snippets.iter().map(|s| s.id.as_str()))?;
    let mut buf = String::new();
    for s in snippets {
        buf.push_str(&snippet_to_line(s));
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

/// Reads the snippets of any record file, labeled or not.
pub fn read_snippets(path: &Path) -> Result<Vec<DialogueSnippet>, CorpusError> {
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        out.push(snippet_from_line(&line, line_no)?);
    }
    ensure_unique_ids(out.iter().map(|s| s.id.as_str()))?;
    Ok(out)
}
