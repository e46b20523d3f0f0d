//! Command-line front end.

pub mod annotate;
pub mod calibrate;
pub mod config;
pub mod evaluate;
pub mod infer;
pub mod ingest;
pub mod manifest;

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::attribute::AttributeKind;
use crate::backends::{
    ChatBackend, EmbeddingBackend, HttpChatBackend, HttpEmbeddingBackend, MockChatBackend, MockChatFixtures,
    MockEmbeddingBackend, DEFAULT_MOCK_DIM,
};
pub use config::Config;
pub use manifest::RunManifest;

pub const EXIT_DATA: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SYSTEMIC: u8 = 3;

/// An error with a specific process exit code.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl Exit {
    pub fn data(message: impl Into<String>) -> anyhow::Error {
        Exit { code: EXIT_DATA, message: message.into() }.into()
    }

    pub fn systemic(message: impl Into<String>) -> anyhow::Error {
        Exit { code: EXIT_SYSTEMIC, message: message.into() }.into()
    }
}

/// Data errors exit 1, transport exhaustion 3, anything else
/// (configuration, unreadable inputs) 2.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    err.downcast_ref::<Exit>().map(|e| e.code).unwrap_or(EXIT_CONFIG)
}

#[derive(Debug, Parser)]
#[command(name = "voiceattr", version, about = "Infer and evaluate voice-relevant character attributes from novels")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Use deterministic in-process backends instead of HTTP services.
    #[arg(long, global = true)]
    pub mock: bool,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Characters (or books) processed concurrently.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub parallel: u16,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize books and extract mention windows for each character.
    Ingest(ingest::IngestArgs),
    /// Retrieve passages, prompt the chat model and parse predictions.
    Infer(infer::InferArgs),
    /// Score predictions against gold.
    Evaluate(evaluate::EvaluateArgs),
    /// Majority-value predictions and their evaluation.
    Baseline(evaluate::BaselineArgs),
    /// Interactive age annotation or prediction judgment.
    Annotate(annotate::AnnotateArgs),
    /// Fit per-attribute human-aligned score curves from judgments.
    Calibrate(calibrate::CalibrateArgs),
    /// Side-by-side Markdown table of several evaluation reports.
    Report(evaluate::ReportArgs),
}

/// Gold input: a gold JSONL file, or a directory in the published format.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct GoldArgs {
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Convert a directory of published character files instead.
    #[arg(long, value_name = "DIR")]
    pub from_svocal: Option<PathBuf>,
}

pub struct Context {
    pub config: Config,
    pub mock: bool,
    pub seed: u64,
    pub parallel: usize,
    pub out: PathBuf,
}

impl Context {
    pub fn from_cli(cli: &Cli) -> anyhow::Result<Self> {
        let config = match &cli.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
        Ok(Self { config, mock: cli.mock, seed: cli.seed, parallel: cli.parallel as usize, out: cli.out.clone() })
    }

    /// Embedding backend: the mock under `--mock`, otherwise the configured
    /// HTTP service, if any.
    pub fn embedder(&self) -> anyhow::Result<Option<Box<dyn EmbeddingBackend>>> {
        if self.mock {
            return Ok(Some(Box::new(MockEmbeddingBackend::new(self.seed, DEFAULT_MOCK_DIM))));
        }
        match &self.config.embedding {
            Some(section) => Ok(Some(Box::new(HttpEmbeddingBackend::new(section.to_backend_config())?))),
            None => Ok(None),
        }
    }

    pub fn chat(&self, fixtures: Option<&Path>) -> anyhow::Result<Box<dyn ChatBackend>> {
        if self.mock {
            let path = fixtures.map(Path::to_path_buf).or_else(|| self.config.mock_fixtures.clone());
            let fixtures = match path {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str::<MockChatFixtures>(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => MockChatFixtures::default(),
            };
            return Ok(Box::new(MockChatBackend::new(self.seed, fixtures)));
        }
        match &self.config.chat {
            Some(section) => Ok(Box::new(HttpChatBackend::new(section.to_backend_config())?)),
            None => anyhow::bail!("no chat backend configured: add a [chat] section to the config or pass --mock"),
        }
    }

    /// Whether outputs may depend on wall-clock time.
    pub fn live(&self, uses_backends: bool) -> bool {
        uses_backends && !self.mock
    }

    pub fn config_snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(&self.config).expect("config serializes");
        v["mock"] = self.mock.into();
        v["seed"] = self.seed.into();
        v
    }

    pub fn pool(&self) -> anyhow::Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.parallel).build()?)
    }
}

pub fn parse_attributes(list: &[String]) -> anyhow::Result<Vec<AttributeKind>> {
    if list.is_empty() {
        return Ok(AttributeKind::ALL.to_vec());
    }
    list.iter().map(|s| s.parse::<AttributeKind>().map_err(anyhow::Error::from)).collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_file(path, &text)
}

pub fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = Context::from_cli(&cli)?;
    match cli.command {
        Command::Ingest(a) => ingest::run(&ctx, &a),
        Command::Infer(a) => infer::run(&ctx, &a),
        Command::Evaluate(a) => evaluate::run_evaluate(&ctx, &a),
        Command::Baseline(a) => evaluate::run_baseline(&ctx, &a),
        Command::Annotate(a) => annotate::run(&ctx, &a),
        Command::Calibrate(a) => calibrate::run(&ctx, &a),
        Command::Report(a) => evaluate::run_report(&ctx, &a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit
/// code after reporting errors on stderr.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
