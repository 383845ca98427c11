//! Command-line front end: `slice`, `eval` and `cassette`.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 usage or input error,
//! 3 pipeline error, 4 benchmark schema error, 5 cassette conflict or
//! corruption.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::agents::{run_pipeline, write_transcript, AgentStep, Counters, SessionConfig};
use crate::eval::{
    aggregate, emit_report, load_benchmark, ratio_metrics, run_benchmark, score_instance,
    BenchmarkInstance, EvalError, InstanceResult, Ratios, ReportFormat, ScoredRow,
};
use crate::llm::{
    Cassette, CassetteBackend, ChatBackend, HttpBackend, HttpConfig, LlmError, ModelSettings,
    DEFAULT_MODEL, ENV_MODEL,
};
use crate::protocol::{PromptRenderer, TemplateSet, DEFAULT_CHAR_BUDGET};
use crate::slice::SliceDocument;
use crate::workspace::{build_index, LineRef, SlicingCriterion, Workspace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PIPELINE: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;
pub const EXIT_CASSETTE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "agentslice", version, about = "Agent-driven static backward slicing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Slice one workspace at one criterion.
    Slice(SliceArgs),
    /// Score predictions, or run the pipeline end to end, over a benchmark.
    Eval(EvalArgs),
    /// Inspect, verify or merge cassette files.
    Cassette {
        #[command(subcommand)]
        action: CassetteAction,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model id; defaults to $SLICEMATE_MODEL, then gpt-4o.
    #[arg(long)]
    model: Option<String>,
    /// Maximum verify/refine rounds.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    max_iters: u64,
    /// Maximum synthesis passes during call expansion.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    max_expansions: u64,
    /// Token ceiling per slicing session.
    #[arg(long, default_value_t = crate::llm::DEFAULT_TOKEN_BUDGET)]
    budget: u64,
    /// Character ceiling for a rendered synthesis prompt.
    #[arg(long, default_value_t = DEFAULT_CHAR_BUDGET)]
    char_budget: usize,
    /// Directory of `<kind>.prompt` files overriding the built-in templates.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Answer model calls only from this cassette.
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Call the live endpoint and append every exchange to this cassette.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SliceArgs {
    /// Workspace root directory.
    #[arg(long, required_unless_present = "files", conflicts_with = "files")]
    workspace: Option<PathBuf>,
    /// JSON manifest `{"files": [{"path", "content"?, "language"?}]}` instead of a directory.
    #[arg(long)]
    files: Option<PathBuf>,
    /// Criterion as `file:line[:var,var]`.
    #[arg(long)]
    criterion: String,
    /// Where to write the slice JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the transcript JSONL.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Where to write the run manifest.
    #[arg(long)]
    run_manifest: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Benchmark JSON file.
    #[arg(long)]
    benchmark: PathBuf,
    /// Directory of `<id>.json` slice documents to score.
    #[arg(long, conflicts_with_all = ["replay", "record"])]
    predictions: Option<PathBuf>,
    /// Report format: json, csv or markdown.
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    /// Where to write the report; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the run manifest.
    #[arg(long)]
    run_manifest: Option<PathBuf>,
    /// Parallel sessions in end-to-end mode.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
    /// Directory for per-instance transcripts (`<id>.jsonl`).
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Directory for per-instance slices (`<id>.json`).
    #[arg(long)]
    slices: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Subcommand)]
enum CassetteAction {
    /// Print entry and token counts.
    Inspect { file: PathBuf },
    /// Re-hash every entry and report mismatched lines.
    Verify { file: PathBuf },
    /// Union cassettes into a new file; conflicting answers are an error.
    Merge {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<SessionConfig>,
    pub backend: String,
    pub instances: Vec<InstanceRecord>,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
pub struct InstanceRecord {
    pub id: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub elapsed_ms: u64,
    pub tokens_used: u64,
    pub counters: Counters,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Slice(a) => cmd_slice(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Cassette { action } => cmd_cassette(action),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Splits `file:line[:vars]`. The line is the last all-digit field, so file
/// names may themselves contain colons.
pub fn parse_criterion(spec: &str) -> Result<(String, usize, Vec<String>), String> {
    let bad = || format!("criterion `{spec}` is not `file:line[:var,...]`");
    let (head, last) = spec.rsplit_once(':').ok_or_else(bad)?;
    let (file, line, vars) = match last.parse::<usize>() {
        Ok(line) => (head, line, ""),
        Err(_) => {
            let (file, line) = head.rsplit_once(':').ok_or_else(bad)?;
            (file, line.parse::<usize>().map_err(|_| bad())?, last)
        }
    };
    if file.is_empty() || line == 0 {
        return Err(bad());
    }
    let vars = vars
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
        .collect();
    Ok((file.to_string(), line, vars))
}

fn session_config(m: &ModelArgs) -> SessionConfig {
    let model_id = m
        .model
        .clone()
        .or_else(|| std::env::var(ENV_MODEL).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| DEFAULT_MODEL.to_string());
    SessionConfig {
        max_verify_refine: m.max_iters as usize,
        max_expansion_rounds: m.max_expansions as usize,
        model: ModelSettings {
            model_id,
            token_budget: m.budget,
            ..ModelSettings::default()
        },
        char_budget: m.char_budget,
        ..SessionConfig::default()
    }
}

fn renderer(m: &ModelArgs) -> CliResult<PromptRenderer> {
    let templates = match &m.templates {
        Some(dir) => TemplateSet::load_dir(dir).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?,
        None => TemplateSet::default(),
    };
    Ok(PromptRenderer::new(templates, m.char_budget))
}

fn llm_failure(e: LlmError) -> Failure {
    let code = match e {
        LlmError::CorruptCassette { .. } | LlmError::CassetteConflict { .. } => EXIT_CASSETTE,
        LlmError::Config(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    };
    Failure::new(code, e.to_string())
}

/// Builds the backend and a short label for the manifest.
fn backend(m: &ModelArgs, config: &SessionConfig) -> CliResult<(Arc<dyn ChatBackend>, String)> {
    if let Some(path) = &m.replay {
        if !path.is_file() {
            return Err(Failure::new(EXIT_USAGE, format!("{}: no such cassette", path.display())));
        }
        let b = CassetteBackend::replay(path).map_err(llm_failure)?;
        return Ok((Arc::new(b), format!("replay:{}", path.display())));
    }
    let mut http = HttpConfig::from_env().map_err(llm_failure)?;
    http.model_id = config.model.model_id.clone();
    let live: Arc<dyn ChatBackend> = Arc::new(HttpBackend::new(http).map_err(llm_failure)?);
    match &m.record {
        Some(path) => {
            let b = CassetteBackend::record(path, live).map_err(llm_failure)?;
            Ok((Arc::new(b), format!("record:{}", path.display())))
        }
        None => Ok((live, "live".to_string())),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_FAILURE, format!("cannot write {}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_failure(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_steps(path: &Path, steps: &[AgentStep]) -> CliResult<()> {
    let mut buf = Vec::new();
    write_transcript(steps, &mut buf).expect("writing to memory");
    write_file(path, &buf)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_slice(a: SliceArgs) -> CliResult<()> {
    let (file, line, vars) = parse_criterion(&a.criterion).map_err(|m| Failure::new(EXIT_USAGE, m))?;
    let workspace = match (&a.workspace, &a.files) {
        (Some(dir), _) => Workspace::from_dir(dir),
        (None, Some(manifest)) => Workspace::from_manifest(manifest),
        (None, None) => unreachable!("clap requires one of --workspace/--files"),
    }
    .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let criterion = SlicingCriterion::new(&workspace, &file, line, vars)
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let config = session_config(&a.model);
    let renderer = renderer(&a.model)?;
    let (backend, label) = backend(&a.model, &config)?;
    let index = build_index(&workspace);
    let started = Instant::now();
    let result = run_pipeline(&workspace, &index, criterion, config.clone(), renderer, backend);
    let elapsed_ms = started.elapsed().as_millis() as u64;

    let mut artifacts = BTreeMap::new();
    if let Some(p) = &a.out {
        artifacts.insert("slice".to_string(), p.display().to_string());
    }
    if let Some(p) = &a.transcript {
        artifacts.insert("transcript".to_string(), p.display().to_string());
    }
    let (record, outcome) = match result {
        Ok(out) => {
            let doc = out.slice.to_document(&out.hallucinated);
            let text = serde_json::to_string_pretty(&doc).expect("slice serializes") + "\n";
            emit(a.out.as_deref(), &text)?;
            if let Some(p) = &a.transcript {
                write_steps(p, &out.transcript)?;
            }
            let record = InstanceRecord {
                id: a.criterion.clone(),
                status: if out.complete { "ok" } else { "ok-unverified" },
                message: None,
                elapsed_ms,
                tokens_used: out.tokens_used,
                counters: out.counters,
            };
            (record, Ok(()))
        }
        Err(e) => {
            let message = e.source.to_string();
            let body = json!({
                "error": message,
                "last_valid_slice": e.last_slice.as_ref().map(|s| s.to_document(&[])),
            });
            match &a.out {
                Some(p) => write_json(p, &body)?,
                None => eprintln!("{}", serde_json::to_string_pretty(&body).expect("json")),
            }
            if let Some(p) = &a.transcript {
                write_steps(p, &e.transcript)?;
            }
            let record = InstanceRecord {
                id: a.criterion.clone(),
                status: "error",
                message: Some(message.clone()),
                elapsed_ms,
                tokens_used: 0,
                counters: e.counters,
            };
            (record, Err(Failure::new(EXIT_PIPELINE, message)))
        }
    };
    if let Some(p) = &a.run_manifest {
        let manifest = RunManifest {
            command: "slice".into(),
            config: Some(config),
            backend: label,
            instances: vec![record],
            artifacts,
        };
        write_json(p, &manifest)?;
    }
    outcome
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Schema(_) => Failure::new(EXIT_SCHEMA, e.to_string()),
        EvalError::MissingBuggyLines(_) => Failure::new(EXIT_SCHEMA, e.to_string()),
        EvalError::Io { .. } => Failure::new(EXIT_USAGE, e.to_string()),
    }
}

/// File-name-safe form of an instance id.
fn artifact_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn load_prediction(dir: &Path, inst: &BenchmarkInstance) -> Result<SliceDocument, String> {
    let path = dir.join(format!("{}.json", artifact_name(&inst.id)));
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let instances = load_benchmark(&a.benchmark).map_err(eval_failure)?;
    if instances.is_empty() {
        return Err(Failure::new(EXIT_SCHEMA, "benchmark has no instances"));
    }
    let mut predictions: Vec<BTreeSet<LineRef>> = Vec::with_capacity(instances.len());
    let mut records = Vec::with_capacity(instances.len());
    let mut artifacts = BTreeMap::new();
    let (config, label) = match &a.predictions {
        Some(dir) => {
            for inst in &instances {
                let (refs, status, message) = match load_prediction(dir, inst) {
                    Ok(doc) => (doc.line_refs(), "ok", None),
                    Err(m) => {
                        tracing::warn!(instance = %inst.id, "{m}; scored as an empty slice");
                        (BTreeSet::new(), "error", Some(m))
                    }
                };
                predictions.push(refs);
                records.push(InstanceRecord {
                    id: inst.id.clone(),
                    status,
                    message,
                    elapsed_ms: 0,
                    tokens_used: 0,
                    counters: Counters::default(),
                });
            }
            (None, format!("predictions:{}", dir.display()))
        }
        None => {
            if a.model.replay.is_none() && a.model.record.is_none() {
                return Err(Failure::new(
                    EXIT_USAGE,
                    "eval needs --predictions, --replay or --record",
                ));
            }
            let config = session_config(&a.model);
            let renderer = renderer(&a.model)?;
            let (backend, label) = backend(&a.model, &config)?;
            let outcomes = run_benchmark(&instances, backend, &config, &renderer, a.workers as usize);
            if let Some(dir) = &a.transcripts {
                artifacts.insert("transcripts".to_string(), dir.display().to_string());
            }
            if let Some(dir) = &a.slices {
                artifacts.insert("slices".to_string(), dir.display().to_string());
            }
            for out in outcomes {
                let name = artifact_name(&out.id);
                if let Some(dir) = &a.transcripts {
                    write_steps(&dir.join(format!("{name}.jsonl")), &out.transcript)?;
                }
                if let (Some(dir), Some(doc)) = (&a.slices, &out.slice) {
                    write_json(&dir.join(format!("{name}.json")), doc)?;
                }
                predictions.push(out.slice.as_ref().map(SliceDocument::line_refs).unwrap_or_default());
                let (status, message) = match out.result {
                    InstanceResult::Ok { complete: true } => ("ok", None),
                    InstanceResult::Ok { complete: false } => ("ok-unverified", None),
                    InstanceResult::Error { message } => ("error", Some(message)),
                };
                records.push(InstanceRecord {
                    id: out.id,
                    status,
                    message,
                    elapsed_ms: out.elapsed_ms,
                    tokens_used: out.tokens_used,
                    counters: out.counters,
                });
            }
            (Some(config), label)
        }
    };

    let rows: Vec<ScoredRow> = instances
        .iter()
        .zip(&predictions)
        .map(|(inst, pred)| ScoredRow {
            id: inst.id.clone(),
            language: inst.language,
            source_tag: inst.source_tag,
            metrics: score_instance(pred, inst).0,
        })
        .collect();
    let mut summary = aggregate(&rows);
    let with_bugs: Vec<_> = instances
        .iter()
        .zip(&predictions)
        .filter_map(|(inst, pred)| inst.buggy_refs().map(|b| (pred.clone(), b)))
        .collect();
    if !with_bugs.is_empty() {
        let (ratio_1, ratio_all) = ratio_metrics(&with_bugs).map_err(eval_failure)?;
        summary.ratios = Some(Ratios {
            n: with_bugs.len(),
            ratio_1,
            ratio_all,
        });
    }
    emit(a.out.as_deref(), &emit_report(&summary, a.format))?;
    if let Some(p) = &a.out {
        artifacts.insert("report".to_string(), p.display().to_string());
    }
    if let Some(p) = &a.run_manifest {
        let manifest = RunManifest {
            command: "eval".into(),
            config,
            backend: label,
            instances: records,
            artifacts,
        };
        write_json(p, &manifest)?;
    }
    Ok(())
}

fn cmd_cassette(action: CassetteAction) -> CliResult<()> {
    match action {
        CassetteAction::Inspect { file } => {
            let c = Cassette::load(&file).map_err(llm_failure)?;
            let mut models: BTreeMap<&str, usize> = BTreeMap::new();
            let (mut prompt, mut completion) = (0u64, 0u64);
            for e in c.entries() {
                *models.entry(e.request.model_id.as_str()).or_default() += 1;
                prompt += e.response.usage.prompt_tokens;
                completion += e.response.usage.completion_tokens;
            }
            let summary = json!({
                "entries": c.len(),
                "models": models,
                "prompt_tokens": prompt,
                "completion_tokens": completion,
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
            Ok(())
        }
        CassetteAction::Verify { file } => {
            let c = Cassette::load(&file).map_err(llm_failure)?;
            let bad = c.verify();
            if bad.is_empty() {
                println!("ok: {} entries", c.len());
                Ok(())
            } else {
                let lines: Vec<String> = bad.iter().map(usize::to_string).collect();
                Err(Failure::new(
                    EXIT_CASSETTE,
                    format!("fingerprint mismatch on line(s) {}", lines.join(", ")),
                ))
            }
        }
        CassetteAction::Merge { out, inputs } => {
            let mut merged = Cassette::default();
            for path in &inputs {
                let c = Cassette::load(path).map_err(llm_failure)?;
                merged.merge(&c).map_err(llm_failure)?;
            }
            merged.save(&out).map_err(llm_failure)?;
            println!("merged {} entries into {}", merged.len(), out.display());
            Ok(())
        }
    }
}
