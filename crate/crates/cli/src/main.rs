//! `tabsynth` command-line driver.
//!
//! Every stage reads and writes plain files. Each run also writes
//! `<output>.manifest.json` next to its main output, which `tabsynth replay`
//! uses to re-run the command and check the artifacts byte for byte.

mod commands;
mod config;
mod manifest;

use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, ColorChoice, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::json;

use config::PipelineConfig;
use manifest::{manifest_path, FileHash, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Budget,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Usage, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Data, message: message.into() }
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Budget => 3,
        }
    }

    fn to_json(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Budget => "budget_exhausted",
        };
        json!({ "error": { "kind": kind, "message": self.message, "exit_code": self.exit_code() } }).to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "tabsynth", version, about = "Synthetic question generation and reranking for table QA")]
struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; output does not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert CSV/TSV/JSONL tables into one validated JSONL file.
    Ingest(commands::IngestArgs),
    /// Sample validated SQL queries for every table.
    Sample(commands::SampleArgs),
    /// Serialize queries into generator input strings.
    Serialize(commands::SerializeArgs),
    /// Turn queries into questions, by template or an external generator.
    Transcribe(commands::TranscribeArgs),
    /// Score questions by perplexity.
    Score(commands::ScoreArgs),
    /// Keep the lowest-perplexity fraction of questions.
    Filter(commands::FilterArgs),
    /// Train the candidate reranker.
    RerankTrain(commands::RerankTrainArgs),
    /// Pick the best candidate per question with a trained reranker.
    RerankApply(commands::RerankApplyArgs),
    /// Topic assignment and topic-shift utilities.
    #[command(subcommand)]
    Topics(commands::TopicsCommand),
    /// Accuracy report with return-type and WHERE-count slices.
    Eval(commands::EvalArgs),
    /// Mix real and synthetic dev ids.
    CompositeDev(commands::CompositeDevArgs),
    /// Re-run a command from its manifest and verify the outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
}

/// What a command did, for its manifest.
#[derive(Debug, Default)]
pub struct Report {
    pub inputs: Vec<PathBuf>,
    /// First entry is the main output; the manifest is named after it.
    pub outputs: Vec<PathBuf>,
    pub partial: bool,
    pub budget_exhausted: bool,
    pub warnings: Vec<String>,
    pub stats: serde_json::Value,
}

/// Settings shared by every command.
pub struct Context {
    pub config: PipelineConfig,
    pub seed: u64,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Sample(_) => "sample",
        Command::Serialize(_) => "serialize",
        Command::Transcribe(_) => "transcribe",
        Command::Score(_) => "score",
        Command::Filter(_) => "filter",
        Command::RerankTrain(_) => "rerank-train",
        Command::RerankApply(_) => "rerank-apply",
        Command::Topics(t) => t.name(),
        Command::Eval(_) => "eval",
        Command::CompositeDev(_) => "composite-dev",
        Command::Replay(_) => "replay",
    }
}

fn dispatch(cmd: Command, ctx: &Context) -> Result<Report, CliError> {
    match cmd {
        Command::Ingest(a) => commands::ingest(a, ctx),
        Command::Sample(a) => commands::sample(a, ctx),
        Command::Serialize(a) => commands::serialize(a, ctx),
        Command::Transcribe(a) => commands::transcribe(a, ctx),
        Command::Score(a) => commands::score(a, ctx),
        Command::Filter(a) => commands::filter(a, ctx),
        Command::RerankTrain(a) => commands::rerank_train(a, ctx),
        Command::RerankApply(a) => commands::rerank_apply(a, ctx),
        Command::Topics(t) => commands::topics(t, ctx),
        Command::Eval(a) => commands::eval(a, ctx),
        Command::CompositeDev(a) => commands::composite_dev(a, ctx),
        Command::Replay(_) => unreachable!("handled before dispatch"),
    }
}

fn hash_all(paths: &[PathBuf]) -> Result<Vec<FileHash>, CliError> {
    paths.iter().map(|p| FileHash::of(p)).collect()
}

fn run(cli: Cli, raw_args: Vec<String>) -> Result<(), CliError> {
    if let Command::Replay(r) = &cli.command {
        return replay(&r.manifest);
    }
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let config_hash = manifest::sha256_bytes(serde_json::to_string(&config).expect("config serializes").as_bytes());
    let name = command_name(&cli.command);
    let ctx = Context { config, seed };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))?;
    let report = pool.install(|| dispatch(cli.command, &ctx))?;

    let mut inputs = hash_all(&report.inputs)?;
    if let Some(p) = &cli.config {
        inputs.push(FileHash::of(p)?);
    }
    let m = Manifest {
        tool: "tabsynth".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        args: raw_args,
        cwd: std::env::current_dir().map_err(|e| CliError::data(format!("cannot read working directory: {e}")))?,
        seed,
        config_hash,
        inputs,
        outputs: hash_all(&report.outputs)?,
        partial: report.partial,
        warnings: report.warnings.clone(),
        stats: report.stats.clone(),
    };
    let main_out = report.outputs.first().expect("every command writes an output");
    m.write(&manifest_path(main_out))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if report.budget_exhausted {
        return Err(CliError {
            kind: ErrorKind::Budget,
            message: "sampling budget exhausted; partial output written".into(),
        });
    }
    Ok(())
}

fn replay(path: &Path) -> Result<(), CliError> {
    let m = Manifest::read(path)?;
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { m.cwd.join(p) };
    for input in &m.inputs {
        if manifest::sha256_file(&resolve(&input.path))? != input.sha256 {
            return Err(CliError::data(format!("input {} changed since the recorded run", input.path.display())));
        }
    }
    let exe = std::env::current_exe().map_err(|e| CliError::data(format!("cannot locate executable: {e}")))?;
    let status = std::process::Command::new(exe)
        .args(&m.args)
        .current_dir(&m.cwd)
        .status()
        .map_err(|e| CliError::data(format!("cannot re-run command: {e}")))?;
    if !(status.success() || m.partial && status.code() == Some(3)) {
        return Err(CliError::data(format!("replayed command exited with {status}")));
    }
    let mut mismatched = Vec::new();
    for out in &m.outputs {
        if manifest::sha256_file(&resolve(&out.path))? != out.sha256 {
            mismatched.push(out.path.display().to_string());
        }
    }
    if !mismatched.is_empty() {
        return Err(CliError::data(format!("outputs differ on replay: {}", mismatched.join(", "))));
    }
    println!("{}", json!({ "replayed": m.command, "outputs": m.outputs.len(), "identical": true }));
    Ok(())
}

fn main() -> ExitCode {
    let color = if std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty()) || !std::io::stderr().is_terminal() {
        ColorChoice::Never
    } else {
        ColorChoice::Auto
    };
    let raw_args: Vec<String> = std::env::args().skip(1).collect();
    let matches = match Cli::command().color(color).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::from(if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand { 1 } else { 0 });
            }
            let err = CliError::usage(e.render().to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let err = CliError::usage(e.to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli, raw_args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
