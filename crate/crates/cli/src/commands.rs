use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use medens_core::corpus::{self, CorpusError, Dataset};
use medens_core::datagen::{self, DatagenError, GenerationJob, MixSpec, SplitSpec};
use medens_core::ensemble::EnsembleConfig;
use medens_core::llmclient::{
    with_retries, BackendError, CompletionBackend, EndpointConfig, HttpBackend, MockBackend, MockDefault,
    RetryPolicy,
};
use medens_core::medner::{Lexicon, LexiconError};
use medens_core::metrics::{self, AggregationMode, ConceptSource, EvalOptions, EvalPair, MetricsError};
use medens_core::negex::{self, NegexError, TriggerRule};
use medens_review::{ReviewError, ReviewStore, ServerConfig};
use serde_json::json;

use crate::{
    BackendKind, Cli, Command, DemoCorpusArgs, EvalArgs, GenerateArgs, Invalid, MixArgs, ModeArg, NerArgs,
    ParseArgs, SelectUniverseArgs, ServeArgs, SourceArg, SplitArgs,
};

/// 1 for bad input or flags, 2 for failures while running.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() || cause.is::<MetricsError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            return if matches!(e, CorpusError::Io { .. }) { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<DatagenError>() {
            match e {
                DatagenError::Ensemble { .. } | DatagenError::Corpus(_) => continue,
                _ => return 1,
            }
        }
        if let Some(e) = cause.downcast_ref::<BackendError>() {
            return if matches!(e, BackendError::Config(_)) { 1 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<LexiconError>() {
            return if matches!(e, LexiconError::Io { .. }) { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<NegexError>() {
            return if matches!(e, NegexError::Io { .. }) { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<ReviewError>() {
            return match e {
                ReviewError::Io { .. } | ReviewError::Corrupt { .. } => 2,
                _ => 1,
            };
        }
    }
    2
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Parse(a) => parse(a),
        Command::Split(a) => split(a, cli.seed),
        Command::SelectUniverse(a) => select_universe(a, cli.seed),
        Command::Generate(a) => generate(a, cli.seed),
        Command::Mix(a) => mix(a, cli.seed),
        Command::Eval(a) => eval(a),
        Command::Ner(a) => ner(a),
        Command::Serve(a) => serve(a),
        Command::DemoCorpus(a) => demo_corpus(a, cli.seed),
    }
}

/// Refuses to clobber `paths` (and dataset sidecars) unless forced.
fn guard_outputs(paths: &[&Path], force: bool) -> Result<()> {
    for (i, p) in paths.iter().enumerate() {
        if paths[..i].contains(p) {
            return Err(Invalid(format!("{} is given as two different outputs", p.display())).into());
        }
    }
    if force {
        return Ok(());
    }
    for p in paths {
        for candidate in [p.to_path_buf(), corpus::manifest_path(p)] {
            if candidate.exists() {
                return Err(Invalid(format!("{} exists; pass --force to overwrite", candidate.display())).into());
            }
        }
    }
    Ok(())
}

fn load_lexicon(path: Option<&Path>) -> Result<Lexicon> {
    match path {
        Some(p) => Ok(Lexicon::load(p)?),
        None => Ok(Lexicon::demo()),
    }
}

fn load_rules(path: Option<&Path>) -> Result<Vec<TriggerRule>> {
    Ok(negex::load_triggers(path)?)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "transcript".into())
}

fn parse(a: &ParseArgs) -> Result<()> {
    guard_outputs(&[&a.out], a.output.force)?;
    let mut snippets = Vec::new();
    for input in &a.inputs {
        let raw = fs::read_to_string(input).map_err(|e| CorpusError::Io {
            path: input.clone(),
            source: e,
        })?;
        let turns = corpus::parse_transcript(&raw).with_context(|| format!("parsing {}", input.display()))?;
        let mut found = corpus::split_into_snippets(&turns, &file_stem(input));
        if a.questions_only {
            found.retain(|s| s.turns()[0].is_physician_question());
        }
        log::info!("{}: {} turns, {} snippets", input.display(), turns.len(), found.len());
        snippets.extend(found);
    }
    corpus::write_snippets(&snippets, &a.out)?;
    log::info!("wrote {} snippets to {}", snippets.len(), a.out.display());
    Ok(())
}

fn split(a: &SplitArgs, seed: u64) -> Result<()> {
    guard_outputs(&[&a.out_train, &a.out_test], a.output.force)?;
    let data = corpus::read_dataset(&a.input)?;
    let (train, test) = datagen::make_split(
        &data,
        &SplitSpec {
            test_size: a.test_size,
            seed,
        },
    )?;
    corpus::write_dataset(&train, &a.out_train)?;
    corpus::write_dataset(&test, &a.out_test)?;
    log::info!("split {} into {} train / {} test", data.len(), train.len(), test.len());
    Ok(())
}

fn select_universe(a: &SelectUniverseArgs, seed: u64) -> Result<()> {
    guard_outputs(&[&a.out], a.output.force)?;
    let train = corpus::read_dataset(&a.input)?;
    let universe = datagen::select_priming_universe(&train, a.size, seed)?;
    if let Some(ex) = &a.exclude {
        let test = corpus::read_dataset(ex)?;
        datagen::ensure_no_leakage(universe.ids(), &test)?;
    }
    corpus::write_dataset(&universe, &a.out)?;
    log::info!("selected {} priming examples from {}", universe.len(), train.name);
    Ok(())
}

fn default_checkpoint(out: &Path) -> PathBuf {
    out.with_file_name(format!("{}.ckpt.jsonl", file_stem(out)))
}

fn build_backend(a: &GenerateArgs) -> Result<Box<dyn CompletionBackend>> {
    Ok(match a.backend {
        BackendKind::Mock => {
            let default = match &a.mock_fixed {
                Some(text) => MockDefault::Fixed(text.clone()),
                None => MockDefault::ExtractiveEcho,
            };
            let mut mock = MockBackend::new(default);
            if let Some(script) = &a.mock_script {
                mock = mock.load_script(script)?;
            }
            Box::new(mock)
        }
        BackendKind::Http => {
            if a.mock_script.is_some() || a.mock_fixed.is_some() {
                return Err(Invalid("--mock-script and --mock-fixed need --backend mock".into()).into());
            }
            let http = HttpBackend::new(EndpointConfig::from_env()?)?;
            Box::new(with_retries(http, RetryPolicy::default())?)
        }
    })
}

fn generate(a: &GenerateArgs, seed: u64) -> Result<()> {
    if a.k == 0 || a.n == 0 {
        return Err(Invalid("--k and --n must be at least 1".into()).into());
    }
    if a.checkpoint_every == 0 || a.workers == 0 {
        return Err(Invalid("--checkpoint-every and --workers must be at least 1".into()).into());
    }
    guard_outputs(&[&a.out], a.output.force)?;
    let backend = build_backend(a)?;
    let lexicon = load_lexicon(a.lexicon.as_deref())?;
    let snippets = corpus::read_snippets(&a.snippets)?;
    let universe = corpus::read_dataset(&a.universe)?;
    let p = a.p.unwrap_or(snippets.len());
    if let Some(ex) = &a.exclude {
        let test = corpus::read_dataset(ex)?;
        datagen::ensure_no_leakage(snippets.iter().take(p).map(|s| s.id.as_str()), &test)?;
        datagen::ensure_no_leakage(universe.ids(), &test)?;
    }
    let mut job = GenerationJob::new(
        p,
        EnsembleConfig {
            k_trials: a.k,
            n_priming: a.n,
            seed,
        },
        &universe.name,
        &backend.backend_id(),
    );
    job.checkpoint_every = a.checkpoint_every;
    job.workers = a.workers;
    let checkpoint = a.checkpoint.clone().unwrap_or_else(|| default_checkpoint(&a.out));
    let dataset = datagen::generate_gcf(&snippets, &universe, &job, &backend, &lexicon, Some(&checkpoint))?;
    corpus::write_dataset(&dataset, &a.out)?;
    for leftover in [datagen::checkpoint_manifest_path(&checkpoint), checkpoint] {
        if let Err(e) = fs::remove_file(&leftover) {
            log::warn!("could not remove {}: {e}", leftover.display());
        }
    }
    log::info!("wrote {} ({} examples)", a.out.display(), dataset.len());
    Ok(())
}

fn mix(a: &MixArgs, seed: u64) -> Result<()> {
    if !a.alpha.is_finite() || a.alpha < 0.0 {
        return Err(Invalid(format!("--alpha must be a non-negative number, got {}", a.alpha)).into());
    }
    guard_outputs(&[&a.out], a.output.force)?;
    let human = corpus::read_dataset(&a.human)?;
    let synthetic = corpus::read_dataset(&a.synthetic)?;
    let mixed = datagen::mix(&human, &synthetic, &MixSpec { alpha: a.alpha, seed })?;
    corpus::write_dataset(&mixed, &a.out)?;
    log::info!(
        "wrote {} ({} human + {} synthetic)",
        a.out.display(),
        mixed.manifest.provenance_counts.human,
        mixed.manifest.provenance_counts.synthetic
    );
    Ok(())
}

/// `id -> summary` from records carrying at least those two fields.
fn read_hypotheses(path: &Path) -> Result<HashMap<String, String>> {
    let raw = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = HashMap::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let field = |name: &str| CorpusError::Schema {
            line_no: i + 1,
            field: name.to_string(),
        };
        let v: serde_json::Value = serde_json::from_str(line).map_err(|_| field("record"))?;
        let id = v.get("id").and_then(|x| x.as_str()).ok_or_else(|| field("id"))?;
        let summary = v.get("summary").and_then(|x| x.as_str()).ok_or_else(|| field("summary"))?;
        if out.insert(id.to_string(), summary.to_string()).is_some() {
            return Err(CorpusError::DuplicateId { id: id.to_string() }.into());
        }
    }
    Ok(out)
}

fn eval_pairs(reference: &Dataset, mut hyps: HashMap<String, String>) -> Result<Vec<EvalPair>> {
    let mut pairs = Vec::with_capacity(reference.len());
    let mut missing = Vec::new();
    for e in &reference.examples {
        match hyps.remove(e.id()) {
            Some(h) => {
                let mut pair = EvalPair::new(e.id(), e.summary.as_str(), h);
                pair.source_turns = e.snippet.turns().iter().map(|t| t.text().to_string()).collect();
                pairs.push(pair);
            }
            None => missing.push(e.id().to_string()),
        }
    }
    if !missing.is_empty() || !hyps.is_empty() {
        let mut extra: Vec<_> = hyps.into_keys().collect();
        extra.sort();
        return Err(Invalid(format!(
            "reference and hypothesis ids differ: {} without a hypothesis (e.g. {:?}), {} without a reference (e.g. {:?})",
            missing.len(),
            missing.first(),
            extra.len(),
            extra.first()
        ))
        .into());
    }
    Ok(pairs)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let outs: Vec<&Path> = std::iter::once(a.out.as_path()).chain(a.table_out.as_deref()).collect();
    guard_outputs(&outs, a.output.force)?;
    let lexicon = load_lexicon(a.lexicon.as_deref())?;
    let rules = load_rules(a.triggers.as_deref())?;
    let reference = corpus::read_dataset(&a.reference)?;
    let pairs = eval_pairs(&reference, read_hypotheses(&a.hypothesis)?)?;
    let options = EvalOptions {
        mode: match a.mode {
            ModeArg::Macro => AggregationMode::Macro,
            ModeArg::Micro => AggregationMode::Micro,
        },
        concept_source: match a.concept_source {
            SourceArg::Reference => ConceptSource::Reference,
            SourceArg::Snippet => ConceptSource::Snippet,
        },
    };
    let report = metrics::evaluate(&pairs, &lexicon, &rules, options)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_file(&a.out, json.as_bytes())?;
    let table = report.render_table(&a.label);
    eprint!("{table}");
    if let Some(t) = &a.table_out {
        write_file(t, table.as_bytes())?;
    }
    Ok(())
}

fn ner(a: &NerArgs) -> Result<()> {
    guard_outputs(&[&a.out], a.output.force)?;
    let lexicon = load_lexicon(a.lexicon.as_deref())?;
    let rules = load_rules(a.triggers.as_deref())?;
    let raw = fs::read_to_string(&a.input).map_err(|e| CorpusError::Io {
        path: a.input.clone(),
        source: e,
    })?;
    let mut out = String::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mentions = lexicon.extract(line);
        let tags: Vec<_> = negex::tag_negations(line, &mentions, &rules)
            .into_iter()
            .map(|t| {
                json!({
                    "concept_id": t.mention.concept_id,
                    "surface": t.mention.surface,
                    "start": t.mention.start,
                    "end": t.mention.end,
                    "status": t.status,
                })
            })
            .collect();
        out.push_str(&json!({ "line": i + 1, "text": line, "mentions": tags }).to_string());
        out.push('\n');
    }
    write_file(&a.out, out.as_bytes())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let store = Arc::new(ReviewStore::open(&a.data_dir)?);
    let config = ServerConfig {
        ui_dir: a.ui_dir.clone(),
        inputs_dir: a.inputs_dir.clone(),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting the async runtime")?;
    runtime
        .block_on(medens_review::serve(a.addr, store, config))
        .with_context(|| format!("serving on {}", a.addr))
}

fn demo_corpus(a: &DemoCorpusArgs, seed: u64) -> Result<()> {
    let outs: Vec<&Path> = std::iter::once(a.out.as_path()).chain(a.transcript_out.as_deref()).collect();
    guard_outputs(&outs, a.output.force)?;
    let data = medens_core::demo::labeled_dataset(a.size, seed, &a.name);
    corpus::write_dataset(&data, &a.out)?;
    if let Some(t) = &a.transcript_out {
        write_file(t, medens_core::demo::transcript(a.exchanges, seed).as_bytes())?;
    }
    log::info!("wrote {} demo examples to {}", data.len(), a.out.display());
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| {
        CorpusError::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}
