//! One function per subcommand. Each reads its inputs, writes its outputs
//! and returns a [`Report`] for the manifest.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use tabsynth::eval::{build_composite_dev, sliced_report, EvalInstance};
use tabsynth::gbt::GbtModel;
use tabsynth::lm::{filter_by_score, NGramLm};
use tabsynth::pipe::{parse_scores, run_line_filter};
use tabsynth::qg::{serialize_qg_input, template_transcribe, QgInput, QgRecord};
use tabsynth::rerank::{self, Candidate, CandidateLogEntry, FeatureVector, MAX_CANDIDATES, NUM_FEATURES};
use tabsynth::rng::{stream, substream_seed};
use tabsynth::sampler::{estimate_priors, sample_corpus, QueryRecord, SampleError};
use tabsynth::sql::{execute, Answer};
use tabsynth::table::{read_tables_jsonl, Table};
use tabsynth::topics::{build_loo_splits, extract_topic_vocab, vocab_overlap, CategoryGraph, Fold, Instance};

use crate::{CliError, Context, Report};

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))
}

/// Non-blank lines, verbatim.
fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(v);
    }
    Ok(out)
}

fn write_lines<I, S>(path: &Path, lines: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut text = String::new();
    for l in lines {
        text.push_str(l.as_ref());
        text.push('\n');
    }
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = File::create(path).map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn to_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("record serializes")
}

/// A flag value, falling back to the config file.
fn required(flag: &Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.clone()
        .or_else(|| config.clone())
        .ok_or_else(|| CliError::usage(format!("--{name} is required (or set it under [paths] in the config)")))
}

fn load_tables(path: &Path) -> Result<HashMap<String, Table>, CliError> {
    let tables = read_tables_jsonl(open(path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut by_id = HashMap::with_capacity(tables.len());
    for t in tables {
        let id = t.id().to_string();
        if by_id.insert(id.clone(), t).is_some() {
            return Err(CliError::data(format!("duplicate table id {id:?} in {}", path.display())));
        }
    }
    Ok(by_id)
}

fn table<'a>(tables: &'a HashMap<String, Table>, id: &str) -> Result<&'a Table, CliError> {
    tables
        .get(id)
        .ok_or_else(|| CliError::data(format!("unknown table id {id:?}")))
}

/// Query records paired with their tables, checked against them.
fn load_queries<'a>(
    tables: &'a HashMap<String, Table>,
    path: &Path,
) -> Result<Vec<(&'a Table, QueryRecord)>, CliError> {
    read_jsonl::<QueryRecord>(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let t = table(tables, &r.table_id)?;
            r.query()
                .validate(t)
                .map_err(|e| CliError::data(format!("{} record {}: {e}", path.display(), i + 1)))?;
            Ok((t, r))
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Table files: .csv, .tsv (one table each, id = file stem) or .jsonl.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn ingest(a: IngestArgs, _ctx: &Context) -> Result<Report, CliError> {
    let mut tables = Vec::new();
    for path in &a.input {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        let bad = |e: tabsynth::table::TableError| CliError::data(format!("{}: {e}", path.display()));
        let stem = || path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        match ext.as_str() {
            "jsonl" | "json" => tables.extend(read_tables_jsonl(open(path)?).map_err(bad)?),
            "csv" => tables.push(Table::from_delimited(stem(), open(path)?, b',').map_err(bad)?),
            "tsv" => tables.push(Table::from_delimited(stem(), open(path)?, b'\t').map_err(bad)?),
            _ => return Err(CliError::usage(format!("unsupported table file {}", path.display()))),
        }
    }
    let mut seen = HashSet::new();
    for t in &tables {
        if !seen.insert(t.id()) {
            return Err(CliError::data(format!("duplicate table id {:?}", t.id())));
        }
    }
    write_lines(&a.out, tables.iter().map(Table::to_json_line))?;
    Ok(Report {
        inputs: a.input,
        outputs: vec![a.out],
        stats: json!({ "tables": tables.len() }),
        ..Report::default()
    })
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub tables: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub per_table: usize,
    /// Query records whose WHERE-count and return-type frequencies replace
    /// the configured distributions.
    #[arg(long)]
    pub priors: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn sample(a: SampleArgs, ctx: &Context) -> Result<Report, CliError> {
    let tables_path = required(&a.tables, &ctx.config.paths.tables, "tables")?;
    let tables = read_tables_jsonl(open(&tables_path)?)
        .map_err(|e| CliError::data(format!("{}: {e}", tables_path.display())))?;
    if tables.is_empty() {
        return Err(CliError::data("table corpus is empty"));
    }
    if a.per_table == 0 {
        return Err(CliError::usage("--per-table must be at least 1"));
    }
    let mut inputs = vec![tables_path];
    let mut cfg = ctx.config.sampler_config(substream_seed(ctx.seed, "sample"));
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(p) = &a.priors {
        let corpus: Vec<_> = read_jsonl::<QueryRecord>(p)?.iter().map(QueryRecord::query).collect();
        cfg = estimate_priors(&corpus)
            .and_then(|s| s.to_config(&cfg))
            .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        inputs.push(p.clone());
    }

    let results = sample_corpus(&tables, a.per_table, &cfg);
    let mut lines = Vec::new();
    let mut warnings = Vec::new();
    let (mut exhausted, mut skipped, mut attempts) = (0usize, 0usize, 0usize);
    for (t, r) in tables.iter().zip(results) {
        match r {
            Ok(o) => {
                if o.exhausted {
                    exhausted += 1;
                    warnings.push(format!(
                        "table {:?}: {} of {} queries before the budget ran out",
                        t.id(),
                        o.queries.len(),
                        a.per_table
                    ));
                }
                attempts += o.attempts;
                lines.extend(o.queries.iter().map(|q| to_line(&QueryRecord::new(t, q))));
            }
            Err(e @ (SampleError::TooFewColumns(_) | SampleError::NoFeasibleWhereCount)) => {
                skipped += 1;
                warnings.push(format!("table {:?} skipped: {e}", t.id()));
            }
            Err(e) => return Err(CliError::data(format!("table {:?}: {e}", t.id()))),
        }
    }
    write_lines(&a.out, &lines)?;
    Ok(Report {
        inputs,
        outputs: vec![a.out],
        partial: exhausted > 0 || skipped > 0,
        budget_exhausted: exhausted > 0,
        warnings,
        stats: json!({
            "tables": tables.len(),
            "queries": lines.len(),
            "exhausted_tables": exhausted,
            "skipped_tables": skipped,
            "attempts": attempts,
            "where_count_dist": cfg.where_count_dist,
            "ret_type_dist": cfg.ret_type_dist,
        }),
    })
}

#[derive(Debug, Args)]
pub struct SerializeArgs {
    #[arg(long)]
    pub tables: Option<PathBuf>,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SerializedLine<'a> {
    table_id: &'a str,
    sql: &'a str,
    qg_input: &'a str,
}

/// Generator inputs for every query; unserializable ones become warnings.
fn qg_inputs<'a>(
    queries: &[(&'a Table, QueryRecord)],
    warnings: &mut Vec<String>,
) -> Vec<(&'a Table, QgInput)> {
    let mut out = Vec::with_capacity(queries.len());
    for (t, r) in queries {
        match serialize_qg_input(&r.query(), &r.answer, t) {
            Ok(i) => out.push((*t, i)),
            Err(e) => warnings.push(format!("table {:?} query {:?} skipped: {e}", r.table_id, r.sql)),
        }
    }
    out
}

pub fn serialize(a: SerializeArgs, ctx: &Context) -> Result<Report, CliError> {
    let tables_path = required(&a.tables, &ctx.config.paths.tables, "tables")?;
    let tables = load_tables(&tables_path)?;
    let queries = load_queries(&tables, &a.queries)?;
    let mut warnings = Vec::new();
    let inputs = qg_inputs(&queries, &mut warnings);
    write_lines(
        &a.out,
        inputs.iter().map(|(t, i)| {
            to_line(&SerializedLine {
                table_id: t.id(),
                sql: &i.query.render(t),
                qg_input: &i.text,
            })
        }),
    )?;
    Ok(Report {
        inputs: vec![tables_path, a.queries],
        outputs: vec![a.out],
        stats: json!({ "queries": queries.len(), "serialized": inputs.len() }),
        warnings,
        ..Report::default()
    })
}

#[derive(Debug, Args)]
pub struct TranscribeArgs {
    #[arg(long)]
    pub tables: Option<PathBuf>,
    #[arg(long)]
    pub queries: PathBuf,
    /// Shell command reading one generator input per line on stdin and
    /// writing one question per line; templates are used without it.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn transcribe(a: TranscribeArgs, ctx: &Context) -> Result<Report, CliError> {
    let tables_path = required(&a.tables, &ctx.config.paths.tables, "tables")?;
    let tables = load_tables(&tables_path)?;
    let queries = load_queries(&tables, &a.queries)?;
    let mut warnings = Vec::new();
    let inputs = qg_inputs(&queries, &mut warnings);
    let questions: Vec<String> = match &a.generator {
        Some(cmd) => {
            let texts: Vec<String> = inputs.iter().map(|(_, i)| i.text.clone()).collect();
            run_line_filter(cmd, &texts).map_err(|e| CliError::data(e.to_string()))?
        }
        None => inputs.iter().map(|(t, i)| template_transcribe(&i.query, t)).collect(),
    };
    let mut lines = Vec::with_capacity(inputs.len());
    for ((t, input), q) in inputs.iter().zip(questions) {
        match QgRecord::new(t, input, q) {
            Ok(r) => lines.push(to_line(&r)),
            Err(e) => warnings.push(format!("table {:?} input {:?} skipped: {e}", t.id(), input.text)),
        }
    }
    write_lines(&a.out, &lines)?;
    Ok(Report {
        inputs: vec![tables_path, a.queries],
        outputs: vec![a.out],
        stats: json!({
            "queries": queries.len(),
            "questions": lines.len(),
            "generator": a.generator.as_deref().unwrap_or("template"),
        }),
        warnings,
        ..Report::default()
    })
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Question records (JSONL).
    #[arg(long)]
    pub records: PathBuf,
    /// Training sentences for the built-in n-gram model, one per line.
    #[arg(long, conflicts_with = "scorer")]
    pub lm_corpus: Option<PathBuf>,
    /// Shell command reading one question per line and writing one score
    /// per line.
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub k: Option<f64>,
    /// Scores, one per line, in record order.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the records with their perplexity filled in.
    #[arg(long)]
    pub annotated: Option<PathBuf>,
}

pub fn score(a: ScoreArgs, ctx: &Context) -> Result<Report, CliError> {
    let mut records: Vec<QgRecord> = read_jsonl(&a.records)?;
    let mut inputs = vec![a.records.clone()];
    let scores: Vec<f64> = if let Some(cmd) = &a.scorer {
        let questions: Vec<String> = records.iter().map(|r| r.question.clone()).collect();
        let out = run_line_filter(cmd, &questions).map_err(|e| CliError::data(e.to_string()))?;
        parse_scores(&out).map_err(|e| CliError::data(e.to_string()))?
    } else {
        let corpus_path = a
            .lm_corpus
            .clone()
            .or_else(|| ctx.config.paths.lm_corpus.clone())
            .ok_or_else(|| CliError::usage("one of --lm-corpus or --scorer is required"))?;
        let corpus = read_lines(&corpus_path)?;
        let order = a.order.unwrap_or(ctx.config.lm.order);
        let k = a.k.unwrap_or(ctx.config.lm.k);
        let lm = NGramLm::train(&corpus, order, k).map_err(|e| CliError::usage(e.to_string()))?;
        inputs.push(corpus_path);
        records
            .par_iter()
            .map(|r| lm.perplexity(&r.question).map_err(|e| CliError::data(format!("{:?}: {e}", r.question))))
            .collect::<Result<_, _>>()?
    };
    write_lines(&a.out, scores.iter().map(|s| s.to_string()))?;
    let mut outputs = vec![a.out];
    if let Some(p) = a.annotated {
        for (r, &s) in records.iter_mut().zip(&scores) {
            r.perplexity = Some(s);
        }
        write_lines(&p, records.iter().map(to_line))?;
        outputs.push(p);
    }
    let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
    Ok(Report {
        inputs,
        outputs,
        stats: json!({ "records": scores.len(), "mean_score": mean }),
        ..Report::default()
    })
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Scores from `score`; without it each record's `perplexity` is used.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub keep: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Deserialize)]
struct Scored {
    perplexity: Option<f64>,
}

pub fn filter(a: FilterArgs, ctx: &Context) -> Result<Report, CliError> {
    let keep = a.keep.unwrap_or(ctx.config.filter.keep_fraction);
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(CliError::usage(format!("keep fraction {keep} is outside (0, 1]")));
    }
    let lines = read_lines(&a.records)?;
    let mut inputs = vec![a.records.clone()];
    let scores = match &a.scores {
        Some(p) => {
            inputs.push(p.clone());
            parse_scores(&read_lines(p)?).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?
        }
        None => lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str::<Scored>(l)
                    .ok()
                    .and_then(|s| s.perplexity)
                    .ok_or_else(|| CliError::data(format!("record {} has no perplexity; pass --scores", i + 1)))
            })
            .collect::<Result<_, _>>()?,
    };
    if scores.len() != lines.len() {
        return Err(CliError::data(format!("{} scores for {} records", scores.len(), lines.len())));
    }
    let before = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
    let kept_scores = filter_by_score(scores.clone(), &scores, keep.min(1.0));
    let kept = filter_by_score(lines.clone(), &scores, keep);
    write_lines(&a.out, &kept)?;
    let after = kept_scores.iter().sum::<f64>() / kept_scores.len().max(1) as f64;
    Ok(Report {
        inputs,
        outputs: vec![a.out],
        stats: json!({
            "records": lines.len(),
            "kept": kept.len(),
            "keep_fraction": keep,
            "mean_score_before": before,
            "mean_score_after": after,
        }),
        ..Report::default()
    })
}

#[derive(Debug, Deserialize)]
struct GoldLine {
    qid: String,
    answer: Answer,
}

/// Candidate sets of a log, top-k by probability. Entries whose SQL does not
/// parse are skipped with a warning.
fn candidate_sets(
    tables: &HashMap<String, Table>,
    log: &[CandidateLogEntry],
    gold: &HashMap<String, Answer>,
    warnings: &mut Vec<String>,
) -> Result<Vec<(usize, Vec<Candidate>)>, CliError> {
    // Ok(Err(_)) is a question whose candidates do not parse
    type Parsed = Result<Vec<Candidate>, String>;
    let sets: Vec<Result<Parsed, CliError>> = log
        .par_iter()
        .map(|e| {
            let t = table(tables, &e.table_id)?;
            Ok(e.to_candidates(t, gold.get(&e.qid)).map_err(|err| format!("question {:?} skipped: {err}", e.qid)))
        })
        .collect();
    let mut out = Vec::with_capacity(sets.len());
    for (i, (e, s)) in log.iter().zip(sets).enumerate() {
        match s? {
            Ok(mut c) if !c.is_empty() => {
                c.truncate(MAX_CANDIDATES);
                out.push((i, c));
            }
            Ok(_) => warnings.push(format!("question {:?} has no candidates", e.qid)),
            Err(w) => warnings.push(w),
        }
    }
    Ok(out)
}

#[derive(Debug, Args)]
pub struct RerankTrainArgs {
    #[arg(long)]
    pub tables: Option<PathBuf>,
    /// Candidate log (JSONL).
    #[arg(long)]
    pub log: PathBuf,
    /// Gold answers (`{"qid", "answer"}` per line) for unlabelled candidates.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn read_gold(path: &Option<PathBuf>, inputs: &mut Vec<PathBuf>) -> Result<HashMap<String, Answer>, CliError> {
    let Some(p) = path else {
        return Ok(HashMap::new());
    };
    inputs.push(p.clone());
    Ok(read_jsonl::<GoldLine>(p)?.into_iter().map(|g| (g.qid, g.answer)).collect())
}

pub fn rerank_train(a: RerankTrainArgs, ctx: &Context) -> Result<Report, CliError> {
    let tables_path = required(&a.tables, &ctx.config.paths.tables, "tables")?;
    let tables = load_tables(&tables_path)?;
    let log: Vec<CandidateLogEntry> = read_jsonl(&a.log)?;
    let mut inputs = vec![tables_path, a.log.clone()];
    let gold = read_gold(&a.gold, &mut inputs)?;
    let mut warnings = Vec::new();
    let sets = candidate_sets(&tables, &log, &gold, &mut warnings)?;

    let mut examples: Vec<(FeatureVector, bool)> = Vec::new();
    for (_, set) in &sets {
        for c in set {
            if let (Some(f), Some(l)) = (c.features, c.label) {
                examples.push((f, l));
            }
        }
    }
    let (model, report) =
        rerank::train(&examples, &ctx.config.reranker).map_err(|e| CliError::data(e.to_string()))?;
    let labelled: Vec<Vec<Candidate>> = sets
        .into_iter()
        .map(|(_, s)| s)
        .filter(|s| s.iter().all(|c| c.label.is_some()))
        .collect();
    let metrics = rerank::evaluate(&labelled, &model).map_err(|e| CliError::data(e.to_string()))?;
    write_text(&a.out, &(model.to_json() + "\n"))?;
    Ok(Report {
        inputs,
        outputs: vec![a.out],
        warnings,
        stats: json!({
            "examples": examples.len(),
            "trees": model.trees.len(),
            "initial_loss": report.loss_history.first(),
            "final_loss": report.loss_history.last(),
            "train_metrics": metrics,
        }),
        ..Report::default()
    })
}

#[derive(Debug, Args)]
pub struct RerankApplyArgs {
    #[arg(long)]
    pub tables: Option<PathBuf>,
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Prediction<'a> {
    qid: &'a str,
    table_id: &'a str,
    sql: String,
    prob: f64,
    rank_before: usize,
    answer: Option<Answer>,
}

pub fn rerank_apply(a: RerankApplyArgs, ctx: &Context) -> Result<Report, CliError> {
    let tables_path = required(&a.tables, &ctx.config.paths.tables, "tables")?;
    let model_path = required(&a.model, &ctx.config.paths.model, "model")?;
    let tables = load_tables(&tables_path)?;
    let model_text = fs::read_to_string(&model_path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", model_path.display())))?;
    let model = GbtModel::from_json(&model_text).map_err(|e| CliError::data(format!("{}: {e}", model_path.display())))?;
    if model.n_features != NUM_FEATURES {
        return Err(CliError::data(format!(
            "model expects {} features, reranker uses {NUM_FEATURES}",
            model.n_features
        )));
    }
    let log: Vec<CandidateLogEntry> = read_jsonl(&a.log)?;
    let mut inputs = vec![tables_path, a.log.clone(), model_path];
    let gold = read_gold(&a.gold, &mut inputs)?;
    let mut warnings = Vec::new();
    let sets = candidate_sets(&tables, &log, &gold, &mut warnings)?;

    let mut lines = Vec::with_capacity(sets.len());
    for (i, set) in &sets {
        let e = &log[*i];
        let t = table(&tables, &e.table_id)?;
        let best = rerank::rerank_index(set, &model).map_err(|err| CliError::data(err.to_string()))?;
        let c = &set[best];
        let answer = c.predicted_answer.clone().or_else(|| execute(&c.query, t).ok());
        lines.push(to_line(&Prediction {
            qid: &e.qid,
            table_id: &e.table_id,
            sql: c.query.render(t),
            prob: c.model_prob,
            rank_before: best,
            answer,
        }));
    }
    write_lines(&a.out, &lines)?;
    let labelled: Vec<Vec<Candidate>> = sets
        .into_iter()
        .map(|(_, s)| s)
        .filter(|s| s.iter().all(|c| c.label.is_some()))
        .collect();
    let metrics = if labelled.is_empty() {
        None
    } else {
        Some(rerank::evaluate(&labelled, &model).map_err(|e| CliError::data(e.to_string()))?)
    };
    Ok(Report {
        inputs,
        outputs: vec![a.out],
        warnings,
        stats: json!({ "questions": lines.len(), "metrics": metrics }),
        ..Report::default()
    })
}

#[derive(Debug, Subcommand)]
pub enum TopicsCommand {
    /// Assign articles to their nearest main topics in a category graph.
    Assign(AssignArgs),
    /// Pairwise Jaccard similarity of topics over assignments.
    Jaccard(JaccardArgs),
    /// Frequent corpus words missing from a base vocabulary.
    Vocab(VocabArgs),
    /// Leave-one-out split for a target topic group.
    Split(SplitArgs),
    /// Top-k vocabulary overlap between topic groups.
    Overlap(OverlapArgs),
}

impl TopicsCommand {
    pub fn name(&self) -> &'static str {
        match self {
            TopicsCommand::Assign(_) => "topics assign",
            TopicsCommand::Jaccard(_) => "topics jaccard",
            TopicsCommand::Vocab(_) => "topics vocab",
            TopicsCommand::Split(_) => "topics split",
            TopicsCommand::Overlap(_) => "topics overlap",
        }
    }
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    /// `child<TAB>parent` category edges.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Main topic names, one per line.
    #[arg(long)]
    pub main_topics: Option<PathBuf>,
    /// Articles to assign, one per line; defaults to every graph leaf.
    #[arg(long)]
    pub articles: Option<PathBuf>,
    #[arg(long)]
    pub nearest: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct Assignment {
    article: String,
    topic: String,
    distance: usize,
    shortest_paths: u128,
    nearest: Vec<String>,
}

#[derive(Debug, Args)]
pub struct JaccardArgs {
    /// Output of `topics assign`.
    #[arg(long)]
    pub assignments: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    /// Topic corpus, one text per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Words already known, one per line.
    #[arg(long)]
    pub base_vocab: PathBuf,
    #[arg(long)]
    pub min_freq: Option<usize>,
    #[arg(long)]
    pub max_terms: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// `id<TAB>group<TAB>fold` lines.
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    /// `group<TAB>fold<TAB>question` lines.
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn tsv_fields<const N: usize>(path: &Path) -> Result<Vec<[String; N]>, CliError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let parts: Vec<&str> = l.splitn(N, '\t').collect();
            <[&str; N]>::try_from(parts)
                .map(|a| a.map(|s| s.trim().to_string()))
                .map_err(|_| CliError::data(format!("{}:{}: expected {N} tab-separated fields", path.display(), i + 1)))
        })
        .collect()
}

fn parse_fold(s: &str, path: &Path) -> Result<Fold, CliError> {
    s.parse().map_err(|e: String| CliError::data(format!("{}: {e}", path.display())))
}

pub fn topics(cmd: TopicsCommand, ctx: &Context) -> Result<Report, CliError> {
    let tc = &ctx.config.topics;
    match cmd {
        TopicsCommand::Assign(a) => {
            let edges = required(&a.edges, &ctx.config.paths.edges, "edges")?;
            let mains = required(&a.main_topics, &ctx.config.paths.main_topics, "main-topics")?;
            let mut g = CategoryGraph::new();
            let bad = |p: &Path, e: tabsynth::topics::TopicError| CliError::data(format!("{}: {e}", p.display()));
            g.read_edges(open(&edges)?).map_err(|e| bad(&edges, e))?;
            g.read_main_topics(open(&mains)?).map_err(|e| bad(&mains, e))?;
            let mut inputs = vec![edges, mains];
            let articles: Vec<String> = match &a.articles {
                Some(p) => {
                    inputs.push(p.clone());
                    read_lines(p)?.into_iter().map(|l| l.trim().to_string()).collect()
                }
                None => g.leaves().into_iter().map(str::to_string).collect(),
            };
            let k = a.nearest.unwrap_or(tc.nearest);
            let results: Vec<_> = articles
                .par_iter()
                .map(|art| {
                    let best = g.assign_topic(art)?;
                    let nearest = g.nearest_topics(art, k)?;
                    Ok(Assignment {
                        article: art.clone(),
                        topic: best.topic,
                        distance: best.distance,
                        shortest_paths: best.shortest_paths,
                        nearest,
                    })
                })
                .collect::<Vec<Result<Assignment, tabsynth::topics::TopicError>>>();
            let mut lines = Vec::new();
            let mut warnings = Vec::new();
            for r in results {
                match r {
                    Ok(asg) => lines.push(to_line(&asg)),
                    Err(e) => warnings.push(e.to_string()),
                }
            }
            write_lines(&a.out, &lines)?;
            Ok(Report {
                inputs,
                outputs: vec![a.out],
                stats: json!({ "articles": articles.len(), "assigned": lines.len() }),
                warnings,
                ..Report::default()
            })
        }
        TopicsCommand::Jaccard(a) => {
            let asg: Vec<Assignment> = read_jsonl(&a.assignments)?;
            let map: BTreeMap<String, Vec<String>> = asg.into_iter().map(|x| (x.article, x.nearest)).collect();
            let topics: BTreeSet<&String> = map.values().flatten().collect();
            let topics: Vec<&String> = topics.into_iter().collect();
            let mut lines = vec!["topic_a,topic_b,jaccard".to_string()];
            for (i, x) in topics.iter().enumerate() {
                for y in &topics[i + 1..] {
                    let j = tabsynth::topics::topic_jaccard(&map, x, y).map_err(|e| CliError::data(e.to_string()))?;
                    lines.push(format!("{},{},{j:.6}", csv_field(x), csv_field(y)));
                }
            }
            write_lines(&a.out, &lines)?;
            Ok(Report {
                inputs: vec![a.assignments],
                outputs: vec![a.out],
                stats: json!({ "articles": map.len(), "topics": topics.len() }),
                ..Report::default()
            })
        }
        TopicsCommand::Vocab(a) => {
            let corpus = read_lines(&a.corpus)?;
            let base: HashSet<String> = read_lines(&a.base_vocab)?
                .iter()
                .map(|w| w.trim().to_lowercase())
                .collect();
            let words = extract_topic_vocab(
                &corpus,
                &base,
                a.min_freq.unwrap_or(tc.min_freq),
                a.max_terms.unwrap_or(tc.max_terms),
            );
            write_lines(&a.out, &words)?;
            Ok(Report {
                inputs: vec![a.corpus, a.base_vocab],
                outputs: vec![a.out],
                stats: json!({ "terms": words.len() }),
                ..Report::default()
            })
        }
        TopicsCommand::Split(a) => {
            let instances: Vec<Instance> = tsv_fields::<3>(&a.instances)?
                .into_iter()
                .map(|[id, group, fold]| {
                    Ok(Instance {
                        id,
                        group,
                        fold: parse_fold(&fold, &a.instances)?,
                    })
                })
                .collect::<Result<_, CliError>>()?;
            let split = build_loo_splits(&instances, &a.target).map_err(|e| CliError::data(e.to_string()))?;
            write_text(&a.out, &(serde_json::to_string_pretty(&split).expect("split serializes") + "\n"))?;
            Ok(Report {
                inputs: vec![a.instances],
                outputs: vec![a.out],
                stats: json!({ "train": split.train.len(), "dev": split.dev.len(), "test": split.test.len() }),
                ..Report::default()
            })
        }
        TopicsCommand::Overlap(a) => {
            let mut train: BTreeMap<String, Vec<String>> = BTreeMap::new();
            let mut test: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for [group, fold, q] in tsv_fields::<3>(&a.questions)? {
                match parse_fold(&fold, &a.questions)? {
                    Fold::Train => train.entry(group).or_default().push(q),
                    Fold::Test => test.entry(group).or_default().push(q),
                    Fold::Dev => {}
                }
            }
            let k = a.top_k.unwrap_or(tc.top_k);
            let mut lines = vec![std::iter::once("test\\train".to_string())
                .chain(train.keys().map(|g| csv_field(g)))
                .collect::<Vec<_>>()
                .join(",")];
            for (tg, tq) in &test {
                let mut row = vec![csv_field(tg)];
                for trq in train.values() {
                    let o = vocab_overlap(trq, tq, k).map_err(|e| CliError::data(e.to_string()))?;
                    row.push(format!("{o:.2}"));
                }
                lines.push(row.join(","));
            }
            write_lines(&a.out, &lines)?;
            Ok(Report {
                inputs: vec![a.questions],
                outputs: vec![a.out],
                stats: json!({ "train_groups": train.len(), "test_groups": test.len(), "top_k": k }),
                ..Report::default()
            })
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Evaluation instances: `{"gold_query"?, "gold", "pred"}` per line.
    #[arg(long)]
    pub log: PathBuf,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write plain-text tables.
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Also write WHERE-count buckets as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn eval(a: EvalArgs, _ctx: &Context) -> Result<Report, CliError> {
    let instances: Vec<EvalInstance> = read_jsonl(&a.log)?;
    let report = sliced_report(&instances);
    write_text(&a.out, &(report.to_json() + "\n"))?;
    let mut outputs = vec![a.out];
    if let Some(p) = a.text {
        write_text(&p, &report.to_text())?;
        outputs.push(p);
    }
    if let Some(p) = a.csv {
        write_text(&p, &report.where_count_csv())?;
        outputs.push(p);
    }
    Ok(Report {
        inputs: vec![a.log],
        outputs,
        stats: json!({ "instances": report.total, "overall": report.overall }),
        ..Report::default()
    })
}

#[derive(Debug, Args)]
pub struct CompositeDevArgs {
    /// Real dev ids, one per line.
    #[arg(long)]
    pub real: PathBuf,
    /// Synthetic ids, one per line.
    #[arg(long)]
    pub synthetic: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn composite_dev(a: CompositeDevArgs, ctx: &Context) -> Result<Report, CliError> {
    let real = read_lines(&a.real)?;
    let synthetic = read_lines(&a.synthetic)?;
    let ids = build_composite_dev(&real, &synthetic, &mut stream(ctx.seed, "composite-dev"));
    write_lines(&a.out, &ids)?;
    Ok(Report {
        inputs: vec![a.real, a.synthetic],
        outputs: vec![a.out],
        stats: json!({ "real": real.len(), "synthetic": ids.len() - real.len() }),
        ..Report::default()
    })
}
