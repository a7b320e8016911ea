//! `medens`: parse, split, label, mix, evaluate and review.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on runtime
//! failures. Outputs go to files; logs go to standard error.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

/// A usage or input problem; exits with status 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Debug, Parser)]
#[command(name = "medens", version, about = "Ensemble labeling pipeline for medical dialogue summaries")]
pub struct Cli {
    /// Flat key=value file; keys are long flag names, command-line flags win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[arg(long = "log-level", global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split DR:/PT: transcripts into snippets.
    Parse(ParseArgs),
    /// Seeded train/test split of a labeled dataset.
    Split(SplitArgs),
    /// Sample the priming universe from a training set.
    SelectUniverse(SelectUniverseArgs),
    /// Label snippets with the ensemble.
    Generate(GenerateArgs),
    /// Combine human and synthetic examples at a ratio.
    Mix(MixArgs),
    /// Score hypothesis summaries against references.
    Eval(EvalArgs),
    /// Extract concepts, with negation status, from text lines.
    Ner(NerArgs),
    /// Run the review service.
    Serve(ServeArgs),
    /// Write a seeded demo corpus (labeled dataset and raw transcript).
    DemoCorpus(DemoCorpusArgs),
}

#[derive(Debug, Args)]
pub struct OutputFlags {
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Transcript files; each file's stem prefixes its snippet ids.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Drop snippets that do not open with a physician question.
    #[arg(long)]
    pub questions_only: bool,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub test_size: usize,
    #[arg(long)]
    pub out_train: PathBuf,
    #[arg(long)]
    pub out_test: PathBuf,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct SelectUniverseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 210)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Held-out set that must not overlap the universe.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Snippet records (labeled or not).
    #[arg(long)]
    pub snippets: PathBuf,
    #[arg(long)]
    pub universe: PathBuf,
    /// Ensemble trials.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Priming examples per trial.
    #[arg(long, default_value_t = 21)]
    pub n: usize,
    /// Number of snippets to label; defaults to all.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    pub backend: BackendKind,
    /// Scripted mock responses (JSONL with `prompt` or `prompt_sha256` and `responses`).
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Fixed mock reply instead of echoing a snippet turn.
    #[arg(long)]
    pub mock_fixed: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint file; defaults to `<out stem>.ckpt.jsonl` beside the output.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub checkpoint_every: usize,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    /// Held-out set that must not overlap the snippets or the universe.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    /// Concept lexicon TSV; defaults to the bundled demo lexicon.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub human: PathBuf,
    #[arg(long)]
    pub synthetic: PathBuf,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Macro,
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Reference,
    Snippet,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labeled reference dataset.
    #[arg(long)]
    pub reference: PathBuf,
    /// Records with `id` and `summary`.
    #[arg(long)]
    pub hypothesis: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Macro)]
    pub mode: ModeArg,
    /// Gold concepts from the reference summary or the source snippet.
    #[arg(long, value_enum, default_value_t = SourceArg::Reference)]
    pub concept_source: SourceArg,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the plain-text table here.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
    /// Row label in the table.
    #[arg(long, default_value = "model")]
    pub label: String,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// NegEx trigger TSV; defaults to the bundled list.
    #[arg(long)]
    pub triggers: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct NerArgs {
    /// Plain text, one passage per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub triggers: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
    /// Sessions, event logs and the feedback dataset live here.
    #[arg(long, default_value = "review-data")]
    pub data_dir: PathBuf,
    /// Built review UI bundle.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Directory that prediction-file paths in session requests resolve against.
    #[arg(long)]
    pub inputs_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoCorpusArgs {
    /// Labeled dataset output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub size: usize,
    /// Optional raw transcript output.
    #[arg(long)]
    pub transcript_out: Option<PathBuf>,
    /// Exchanges in the transcript.
    #[arg(long, default_value_t = 200)]
    pub exchanges: usize,
    #[arg(long, default_value = "H")]
    pub name: String,
    #[command(flatten)]
    pub output: OutputFlags,
}

fn parse_args(argv: Vec<OsString>) -> Result<Cli, clap::Error> {
    let command = Cli::command();
    let matches = command.clone().try_get_matches_from(argv.clone())?;
    let Some(path) = matches.get_one::<PathBuf>("config").cloned() else {
        return Cli::from_arg_matches(&matches);
    };
    let entries = config::read_config(&path)
        .map_err(|e| command.clone().error(clap::error::ErrorKind::Io, e.to_string()))?;
    let extra = config::config_args(&command, &matches, &entries)
        .map_err(|e| command.clone().error(clap::error::ErrorKind::InvalidValue, e.0))?;
    let merged = command.try_get_matches_from(argv.into_iter().chain(extra))?;
    Cli::from_arg_matches(&merged)
}

fn main() -> ExitCode {
    let cli = match parse_args(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
