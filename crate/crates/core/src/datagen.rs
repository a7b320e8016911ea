//! Dataset lifecycle: train/test split, priming-universe selection,
//! resumable synthetic generation and human/synthetic mixing.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    self, CorpusError, Dataset, DialogueSnippet, GenerationInfo, LabeledExample, Provenance,
};
use crate::ensemble::{Ensemble, EnsembleConfig, EnsembleError};
use crate::llmclient::CompletionBackend;
use crate::medner::ConceptRecognizer;
use crate::sampling;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("test size {test_size} must be smaller than the dataset ({size})")]
    TestTooLarge { test_size: usize, size: usize },
    #[error("priming universe too small: need {need} examples, have {have}")]
    UniverseTooSmall { need: usize, have: usize },
    #[error("need {need} snippets, have {have}")]
    NotEnoughSnippets { need: usize, have: usize },
    #[error("need {need} synthetic examples, have {have}")]
    NotEnoughSynthetic { need: usize, have: usize },
    #[error("alpha must be a finite non-negative number, got {0}")]
    InvalidAlpha(f64),
    #[error("{} id(s) also appear in the test set, e.g. {:?}", .ids.len(), .ids.first())]
    Leakage { ids: Vec<String> },
    #[error("checkpoint does not match this job: {reason}")]
    ResumeMismatch { reason: String },
    #[error("snippet {snippet_id}: {source}")]
    Ensemble {
        snippet_id: String,
        #[source]
        source: EnsembleError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_size: 500,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    /// Synthetic-to-human ratio.
    pub alpha: f64,
    pub seed: u64,
}

/// A synthetic generation run over the first `target_size` snippets.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationJob {
    pub target_size: usize,
    pub ensemble: EnsembleConfig,
    pub universe_ref: String,
    pub backend_id: String,
    pub resume_cursor: usize,
    pub checkpoint_every: usize,
    pub workers: usize,
}

impl GenerationJob {
    pub fn new(target_size: usize, ensemble: EnsembleConfig, universe_ref: &str, backend_id: &str) -> Self {
        GenerationJob {
            target_size,
            ensemble,
            universe_ref: universe_ref.to_string(),
            backend_id: backend_id.to_string(),
            resume_cursor: 0,
            checkpoint_every: 50,
            workers: 4,
        }
    }

    /// `GCF_{p}^{k=K}`.
    pub fn dataset_name(&self) -> String {
        format!("GCF_{}^{{k={}}}", self.target_size, self.ensemble.k_trials)
    }

    fn fingerprint(&self) -> JobFingerprint {
        JobFingerprint {
            target_size: self.target_size,
            k_trials: self.ensemble.k_trials,
            n_priming: self.ensemble.n_priming,
            seed: self.ensemble.seed,
            universe_ref: self.universe_ref.clone(),
            backend_id: self.backend_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct JobFingerprint {
    target_size: usize,
    k_trials: usize,
    n_priming: usize,
    seed: u64,
    universe_ref: String,
    backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CheckpointManifest {
    job: JobFingerprint,
    resume_cursor: usize,
}

/// Round half up, the rule used for `α·|H|`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Seeded random train/test split. Both halves keep the input order.
pub fn make_split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), DatagenError> {
    let n = dataset.len();
    if spec.test_size > 0 && spec.test_size >= n {
        return Err(DatagenError::TestTooLarge {
            test_size: spec.test_size,
            size: n,
        });
    }
    let perm = sampling::permutation(n, spec.seed);
    let mut in_test = vec![false; n];
    for &i in &perm[..spec.test_size] {
        in_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = dataset
        .examples
        .iter()
        .cloned()
        .zip(in_test)
        .partition(|(_, t)| *t);
    let parents = vec![dataset.name.clone()];
    let train = Dataset::new(
        format!("{}_train", dataset.name),
        train.into_iter().map(|(e, _)| e).collect(),
        spec.seed,
        parents.clone(),
    )?;
    let test = Dataset::new(
        format!("{}_test", dataset.name),
        test.into_iter().map(|(e, _)| e).collect(),
        spec.seed,
        parents,
    )?;
    Ok((train, test))
}

/// A seeded random subset of `size` examples, in permutation order.
pub fn select_priming_universe(train: &Dataset, size: usize, seed: u64) -> Result<Dataset, DatagenError> {
    if size > train.len() {
        return Err(DatagenError::UniverseTooSmall {
            need: size,
            have: train.len(),
        });
    }
    let perm = sampling::permutation(train.len(), seed);
    let examples = perm[..size].iter().map(|&i| train.examples[i].clone()).collect();
    Ok(Dataset::new(format!("L_{size}"), examples, seed, vec![train.name.clone()])?)
}

/// Fails with the overlapping ids if any of `ids` is in `test`.
pub fn ensure_no_leakage<'a>(
    ids: impl IntoIterator<Item = &'a str>,
    test: &Dataset,
) -> Result<(), DatagenError> {
    let test_ids: HashSet<&str> = test.ids().collect();
    let overlap: Vec<String> = ids
        .into_iter()
        .filter(|id| test_ids.contains(id))
        .map(str::to_string)
        .collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(DatagenError::Leakage { ids: overlap })
    }
}

/// Sidecar of a checkpoint file: `x.ckpt.jsonl` → `x.ckpt.manifest.json`.
pub fn checkpoint_manifest_path(checkpoint: &Path) -> std::path::PathBuf {
    corpus::manifest_path(checkpoint)
}

fn load_checkpoint(
    checkpoint: &Path,
    job: &GenerationJob,
    snippets: &[DialogueSnippet],
) -> Result<Vec<LabeledExample>, DatagenError> {
    let manifest_path = checkpoint_manifest_path(checkpoint);
    if !manifest_path.exists() {
        if job.resume_cursor != 0 {
            return Err(DatagenError::ResumeMismatch {
                reason: format!("resume cursor {} but no checkpoint", job.resume_cursor),
            });
        }
        return Ok(Vec::new());
    }
    let raw = fs::read_to_string(&manifest_path).map_err(|e| CorpusError::io(&manifest_path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&raw).map_err(|e| DatagenError::ResumeMismatch {
            reason: format!("unreadable checkpoint manifest: {e}"),
        })?;
    if manifest.job != job.fingerprint() {
        return Err(DatagenError::ResumeMismatch {
            reason: format!("checkpoint was written for {:?}", manifest.job),
        });
    }
    if job.resume_cursor != 0 && job.resume_cursor != manifest.resume_cursor {
        return Err(DatagenError::ResumeMismatch {
            reason: format!(
                "job cursor {} but checkpoint cursor {}",
                job.resume_cursor, manifest.resume_cursor
            ),
        });
    }
    let cursor = manifest.resume_cursor;
    let mut done = Vec::with_capacity(cursor);
    if cursor > 0 {
        let raw = fs::read_to_string(checkpoint).map_err(|e| CorpusError::io(checkpoint, e))?;
        // Lines past the cursor belong to a batch whose manifest update never
        // landed; they are regenerated.
        for (i, line) in raw.lines().filter(|l| !l.trim().is_empty()).take(cursor).enumerate() {
            done.push(corpus::example_from_line(line, i + 1)?);
        }
    }
    if done.len() != cursor {
        return Err(DatagenError::ResumeMismatch {
            reason: format!("cursor {cursor} but {} checkpointed records", done.len()),
        });
    }
    for (e, s) in done.iter().zip(snippets) {
        if e.id() != s.id {
            return Err(DatagenError::ResumeMismatch {
                reason: format!("checkpoint has {:?} where the input has {:?}", e.id(), s.id),
            });
        }
    }
    Ok(done)
}

fn append_checkpoint(
    checkpoint: &Path,
    job: &GenerationJob,
    new: &[LabeledExample],
    cursor: usize,
) -> Result<(), DatagenError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(checkpoint)
        .map_err(|e| CorpusError::io(checkpoint, e))?;
    let mut buf = String::new();
    for e in new {
        buf.push_str(&corpus::example_to_line(e));
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| CorpusError::io(checkpoint, e))?;
    f.sync_all().map_err(|e| CorpusError::io(checkpoint, e))?;
    let manifest = CheckpointManifest {
        job: job.fingerprint(),
        resume_cursor: cursor,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("checkpoint manifest serializes");
    json.push('\n');
    corpus::write_atomic(&checkpoint_manifest_path(checkpoint), json.as_bytes())?;
    Ok(())
}

fn truncate_checkpoint(checkpoint: &Path, done: &[LabeledExample]) -> Result<(), DatagenError> {
    let mut buf = String::new();
    for e in done {
        buf.push_str(&corpus::example_to_line(e));
        buf.push('\n');
    }
    corpus::write_atomic(checkpoint, buf.as_bytes())?;
    Ok(())
}

/// Labels the first `job.target_size` snippets with the ensemble.
///
/// With a `checkpoint` path, completed examples are appended every
/// `job.checkpoint_every` snippets and a rerun resumes after the last
/// checkpointed one.
pub fn generate_gcf(
    snippets: &[DialogueSnippet],
    universe: &Dataset,
    job: &GenerationJob,
    backend: &dyn CompletionBackend,
    recognizer: &dyn ConceptRecognizer,
    checkpoint: Option<&Path>,
) -> Result<Dataset, DatagenError> {
    let need = job.ensemble.universe_needed();
    if universe.len() < need {
        return Err(DatagenError::UniverseTooSmall {
            need,
            have: universe.len(),
        });
    }
    if snippets.len() < job.target_size {
        return Err(DatagenError::NotEnoughSnippets {
            need: job.target_size,
            have: snippets.len(),
        });
    }
    if job.resume_cursor > job.target_size {
        return Err(DatagenError::ResumeMismatch {
            reason: format!("cursor {} beyond target {}", job.resume_cursor, job.target_size),
        });
    }
    let targets = &snippets[..job.target_size];
    let ensemble = Ensemble::new(&universe.examples, &job.ensemble, backend, recognizer)
        .map_err(|e| match e {
            EnsembleError::UniverseTooSmall { need, have } => DatagenError::UniverseTooSmall { need, have },
            other => DatagenError::Ensemble {
                snippet_id: String::new(),
                source: other,
            },
        })?;

    let mut done = match checkpoint {
        Some(path) => {
            let done = load_checkpoint(path, job, targets)?;
            truncate_checkpoint(path, &done)?;
            done
        }
        None => {
            if job.resume_cursor != 0 {
                return Err(DatagenError::ResumeMismatch {
                    reason: "resume cursor set without a checkpoint path".into(),
                });
            }
            Vec::new()
        }
    };
    if !done.is_empty() {
        log::info!("resuming at snippet {} of {}", done.len(), job.target_size);
    }

    let provenance = Provenance::Synthetic {
        k: u32::try_from(job.ensemble.k_trials).unwrap_or(u32::MAX),
        backend_id: job.backend_id.clone(),
    };
    let workers = job.workers.max(1).min(backend.max_concurrency().max(1));
    let batch_size = job.checkpoint_every.max(1);

    while done.len() < targets.len() {
        let start = done.len();
        let batch = &targets[start..(start + batch_size).min(targets.len())];
        let results = label_batch(&ensemble, batch, &provenance, workers);
        let mut first_err = None;
        let mut fresh = Vec::with_capacity(batch.len());
        for r in results {
            match r {
                Ok(e) if first_err.is_none() => fresh.push(e),
                Ok(_) => {}
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        done.extend(fresh.iter().cloned());
        if let Some(path) = checkpoint {
            if !fresh.is_empty() {
                append_checkpoint(path, job, &fresh, done.len())?;
            }
        }
        if let Some(e) = first_err {
            return Err(e);
        }
        log::info!("labeled {} of {}", done.len(), targets.len());
    }

    let mut dataset = Dataset::new(job.dataset_name(), done, job.ensemble.seed, vec![job.universe_ref.clone()])?;
    dataset.manifest.generation = Some(GenerationInfo {
        k_trials: job.ensemble.k_trials,
        n_priming: job.ensemble.n_priming,
        backend_id: job.backend_id.clone(),
        universe: job.universe_ref.clone(),
    });
    Ok(dataset)
}

fn label_one(
    ensemble: &Ensemble<'_>,
    snippet: &DialogueSnippet,
    provenance: &Provenance,
) -> Result<LabeledExample, DatagenError> {
    let result = ensemble
        .summarize(snippet)
        .map_err(|source| DatagenError::Ensemble {
            snippet_id: snippet.id.clone(),
            source,
        })?;
    let best = result.candidates.into_iter().nth(result.chosen).expect("chosen in range");
    Ok(LabeledExample {
        snippet: snippet.clone(),
        summary: best.summary,
        provenance: provenance.clone(),
    })
}

/// Results in input order regardless of completion order.
fn label_batch(
    ensemble: &Ensemble<'_>,
    batch: &[DialogueSnippet],
    provenance: &Provenance,
    workers: usize,
) -> Vec<Result<LabeledExample, DatagenError>> {
    if workers <= 1 || batch.len() <= 1 {
        let mut out = Vec::with_capacity(batch.len());
        for s in batch {
            let r = label_one(ensemble, s, provenance);
            let failed = r.is_err();
            out.push(r);
            if failed {
                break;
            }
        }
        return out;
    }
    let slots: Mutex<Vec<Option<Result<LabeledExample, DatagenError>>>> =
        Mutex::new((0..batch.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(batch.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= batch.len() {
                    break;
                }
                let r = label_one(ensemble, &batch[i], provenance);
                slots.lock().expect("slots lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("slots lock")
        .into_iter()
        .map(|r| r.expect("every snippet ran"))
        .collect()
}

/// All of `human` plus `round(α·|human|)` sampled synthetic examples,
/// shuffled together.
pub fn mix(human: &Dataset, synthetic: &Dataset, spec: &MixSpec) -> Result<Dataset, DatagenError> {
    if !spec.alpha.is_finite() || spec.alpha < 0.0 {
        return Err(DatagenError::InvalidAlpha(spec.alpha));
    }
    let need = round_half_up(spec.alpha * human.len() as f64);
    if synthetic.len() < need {
        return Err(DatagenError::NotEnoughSynthetic {
            need,
            have: synthetic.len(),
        });
    }
    let mut rng = sampling::rng(spec.seed);
    let mut picks: Vec<usize> = (0..synthetic.len()).collect();
    picks.shuffle(&mut rng);
    let mut examples: Vec<LabeledExample> = human.examples.clone();
    examples.extend(picks[..need].iter().map(|&i| synthetic.examples[i].clone()));
    examples.shuffle(&mut rng);

    let name = format!("{}+{}(alpha={})", human.name, synthetic.name, spec.alpha);
    let mut dataset = Dataset::new(
        name,
        examples,
        spec.seed,
        vec![human.name.clone(), synthetic.name.clone()],
    )?;
    dataset.manifest.alpha = Some(spec.alpha);
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ProvenanceCounts, Summary, Turn};
    use crate::llmclient::{BackendError, CompletionRequest, MockBackend, MockDefault};
    use crate::medner::Lexicon;

    fn snippet(id: &str) -> DialogueSnippet {
        DialogueSnippet::new(
            id,
            vec![
                Turn::doctor(format!("Any fever or cough ({id})?")).unwrap(),
                Turn::patient("fever yes, no cough").unwrap(),
            ],
        )
        .unwrap()
    }

    fn human(n: usize, prefix: &str) -> Dataset {
        let ex = (0..n)
            .map(|i| LabeledExample::human(snippet(&format!("{prefix}{i}")), Summary::new(format!("s{i}")).unwrap()))
            .collect();
        Dataset::new(format!("H_{n}"), ex, 0, vec![]).unwrap()
    }

    fn synthetic(n: usize) -> Dataset {
        let ex = (0..n)
            .map(|i| LabeledExample {
                snippet: snippet(&format!("g{i}")),
                summary: Summary::new("x").unwrap(),
                provenance: Provenance::Synthetic {
                    k: 10,
                    backend_id: "mock".into(),
                },
            })
            .collect();
        Dataset::new(format!("GCF_{n}"), ex, 0, vec![]).unwrap()
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let h = human(6900, "h");
        let (train, test) = make_split(&h, &SplitSpec { test_size: 500, seed: 7 }).unwrap();
        assert_eq!((train.len(), test.len()), (6400, 500));
        let test_ids: HashSet<&str> = test.ids().collect();
        assert!(train.ids().all(|id| !test_ids.contains(id)));
        let (train2, test2) = make_split(&h, &SplitSpec { test_size: 500, seed: 7 }).unwrap();
        assert_eq!((train, test), (train2, test2));
    }

    #[test]
    fn split_edge_cases() {
        let h = human(10, "h");
        let (train, test) = make_split(&h, &SplitSpec { test_size: 0, seed: 1 }).unwrap();
        assert_eq!(train.examples, h.examples);
        assert!(test.is_empty());
        assert!(matches!(
            make_split(&h, &SplitSpec { test_size: 10, seed: 1 }),
            Err(DatagenError::TestTooLarge { .. })
        ));
    }

    #[test]
    fn universe_selection() {
        let train = human(6400, "h");
        let l = select_priming_universe(&train, 210, 3).unwrap();
        assert_eq!(l.len(), 210);
        assert_eq!(l.ids().collect::<HashSet<_>>().len(), 210);
        assert_eq!(l.manifest.parents, ["H_6400"]);
        assert_eq!(l.manifest.seed, 3);
        assert_eq!(l, select_priming_universe(&train, 210, 3).unwrap());

        let small = human(5, "h");
        let all = select_priming_universe(&small, 5, 3).unwrap();
        let mut ids: Vec<_> = all.ids().collect();
        ids.sort();
        assert_eq!(ids, ["h0", "h1", "h2", "h3", "h4"]);
        assert!(matches!(
            select_priming_universe(&small, 6, 3),
            Err(DatagenError::UniverseTooSmall { need: 6, have: 5 })
        ));
    }

    #[test]
    fn mixing_counts() {
        let h = human(6400, "h");
        let g = synthetic(3200);
        let m = mix(&h, &g, &MixSpec { alpha: 0.5, seed: 1 }).unwrap();
        assert_eq!(m.len(), 9600);
        assert_eq!(m.manifest.provenance_counts, ProvenanceCounts { human: 6400, synthetic: 3200 });
        assert_eq!(m.manifest.alpha, Some(0.5));

        let zero = mix(&h, &g, &MixSpec { alpha: 0.0, seed: 1 }).unwrap();
        assert_eq!(zero.len(), 6400);
        assert_eq!(zero.manifest.provenance_counts.synthetic, 0);

        assert!(matches!(
            mix(&human(100, "h"), &synthetic(200), &MixSpec { alpha: 3.0, seed: 1 }),
            Err(DatagenError::NotEnoughSynthetic { need: 300, have: 200 })
        ));
        assert!(matches!(
            mix(&h, &g, &MixSpec { alpha: -1.0, seed: 1 }),
            Err(DatagenError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(2.49), 2);
        assert_eq!(round_half_up(0.0), 0);
    }

    #[test]
    fn leakage_detected() {
        let test = human(3, "h");
        assert!(ensure_no_leakage(["x", "y"], &test).is_ok());
        match ensure_no_leakage(["x", "h1"], &test) {
            Err(DatagenError::Leakage { ids }) => assert_eq!(ids, ["h1"]),
            other => panic!("{other:?}"),
        }
    }

    fn job(p: usize) -> GenerationJob {
        GenerationJob::new(
            p,
            EnsembleConfig {
                k_trials: 10,
                n_priming: 2,
                seed: 9,
            },
            "L_20",
            "mock",
        )
    }

    #[test]
    fn generates_synthetic_examples() {
        let l = human(20, "u");
        let snippets: Vec<_> = (0..3).map(|i| snippet(&format!("s{i}"))).collect();
        let mock = MockBackend::new(MockDefault::ExtractiveEcho);
        let ds = generate_gcf(&snippets, &l, &job(3), &mock, &Lexicon::demo(), None).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.name, "GCF_3^{k=10}");
        assert_eq!(ds.manifest.provenance_counts, ProvenanceCounts { human: 0, synthetic: 3 });
        assert!(ds.examples.iter().all(|e| e.provenance
            == Provenance::Synthetic {
                k: 10,
                backend_id: "mock".into()
            }));
    }

    #[test]
    fn small_universe_fails_before_any_call() {
        struct Never;
        impl CompletionBackend for Never {
            fn complete(&self, _: &CompletionRequest) -> Result<String, BackendError> {
                panic!("backend must not be called");
            }
            fn backend_id(&self) -> String {
                "never".into()
            }
        }
        let l = human(100, "u");
        let mut j = job(1);
        j.ensemble.n_priming = 21;
        assert!(matches!(
            generate_gcf(&[snippet("s")], &l, &j, &Never, &Lexicon::demo(), None),
            Err(DatagenError::UniverseTooSmall { need: 210, have: 100 })
        ));
    }

    /// Fails every call after the first `budget` successes.
    struct Budget {
        inner: MockBackend,
        budget: Mutex<usize>,
    }

    impl CompletionBackend for Budget {
        fn complete(&self, r: &CompletionRequest) -> Result<String, BackendError> {
            let mut b = self.budget.lock().unwrap();
            if *b == 0 {
                return Err(BackendError::Transport("interrupted".into()));
            }
            *b -= 1;
            self.inner.complete(r)
        }
        fn backend_id(&self) -> String {
            "mock".into()
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let l = human(20, "u");
        let snippets: Vec<_> = (0..3).map(|i| snippet(&format!("s{i}"))).collect();
        let lex = Lexicon::demo();
        let mut j = job(3);
        j.checkpoint_every = 1;

        let oracle = generate_gcf(&snippets, &l, &j, &MockBackend::new(MockDefault::ExtractiveEcho), &lex, None).unwrap();

        let ckpt = dir.path().join("gcf.ckpt.jsonl");
        // Enough budget for two snippets (K=10 calls each), then failure.
        let flaky = Budget {
            inner: MockBackend::new(MockDefault::ExtractiveEcho),
            budget: Mutex::new(20),
        };
        let err = generate_gcf(&snippets, &l, &j, &flaky, &lex, Some(&ckpt)).unwrap_err();
        assert!(matches!(err, DatagenError::Ensemble { ref snippet_id, .. } if snippet_id == "s2"));
        assert_eq!(fs::read_to_string(&ckpt).unwrap().lines().count(), 2);

        let resumed = generate_gcf(&snippets, &l, &j, &MockBackend::new(MockDefault::ExtractiveEcho), &lex, Some(&ckpt)).unwrap();
        assert_eq!(resumed, oracle);

        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        corpus::write_dataset(&oracle, &a).unwrap();
        corpus::write_dataset(&resumed, &b).unwrap();
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }

    #[test]
    fn resume_with_a_different_job_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let l = human(20, "u");
        let snippets: Vec<_> = (0..3).map(|i| snippet(&format!("s{i}"))).collect();
        let lex = Lexicon::demo();
        let ckpt = dir.path().join("gcf.ckpt.jsonl");
        let mock = MockBackend::new(MockDefault::ExtractiveEcho);
        generate_gcf(&snippets, &l, &job(3), &mock, &lex, Some(&ckpt)).unwrap();
        let mut other = job(3);
        other.ensemble.seed = 10;
        assert!(matches!(
            generate_gcf(&snippets, &l, &other, &mock, &lex, Some(&ckpt)),
            Err(DatagenError::ResumeMismatch { .. })
        ));
        let mut cursor = job(3);
        cursor.resume_cursor = 1;
        assert!(matches!(
            generate_gcf(&snippets, &l, &cursor, &mock, &lex, None),
            Err(DatagenError::ResumeMismatch { .. })
        ));
    }
}
