//! Benchmark loading, slice scoring, aggregation and reports.

mod benchmark;
mod report;
mod runner;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use benchmark::{
    load_benchmark, parse_benchmark, Benchmark, BenchmarkFile, BenchmarkInstance, FileLineSet,
    SchemaIssue, SourceTag,
};
pub use report::{aggregate, emit_report, GroupSummary, Ratios, ReportFormat, ScoredRow, Summary, CSV_HEADER};
pub use runner::{run_benchmark, InstanceOutcome, InstanceResult};

use crate::slice::normalize_line;
use crate::workspace::{lexer, Language, LineRef, SourceFile};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("benchmark schema errors: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Schema(Vec<SchemaIssue>),
    #[error("instance {0} has no buggy lines")]
    MissingBuggyLines(usize),
    #[error("failed to read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub exact_match: bool,
}

/// Lines metrics are computed over: every line that is not blank, not
/// comment-only and not made of delimiters alone.
pub fn statement_universe(instance: &BenchmarkInstance) -> BTreeSet<LineRef> {
    let mut out = BTreeSet::new();
    for f in &instance.files {
        out.extend(file_universe(&f.path, instance.language, &f.content));
    }
    out
}

fn file_universe(path: &str, language: Language, text: &str) -> Vec<LineRef> {
    let source = SourceFile::new(path, language, text);
    let comments = lexer::comment_only_lines(text, language);
    source
        .lines()
        .filter(|(n, line)| {
            !comments.get(n - 1).copied().unwrap_or(false) && !normalize_line(line).non_semantic
        })
        .map(|(n, _)| LineRef::new(path, n))
        .collect()
}

/// Confusion counts of `predicted` against `truth` over `universe`; lines
/// outside the universe are ignored on both sides.
pub fn confusion(
    universe: &BTreeSet<LineRef>,
    truth: &BTreeSet<LineRef>,
    predicted: &BTreeSet<LineRef>,
) -> ConfusionCounts {
    let truth: BTreeSet<&LineRef> = truth.iter().filter(|l| universe.contains(*l)).collect();
    let predicted: BTreeSet<&LineRef> = predicted.iter().filter(|l| universe.contains(*l)).collect();
    let tp = predicted.intersection(&truth).count();
    let fp = predicted.len() - tp;
    let fn_ = truth.len() - tp;
    ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: universe.len() - tp - fp - fn_,
    }
}

/// Precision, recall, F1 and accuracy from counts. Precision is 0 when
/// nothing was predicted, recall 0 when nothing was expected, F1 0 when both
/// are 0.
pub fn metrics(c: ConfusionCounts, exact_match: bool) -> MetricsRow {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = ratio(c.tp + c.tn, c.tp + c.fp + c.fn_ + c.tn);
    MetricsRow {
        precision,
        recall,
        f1,
        accuracy,
        exact_match,
    }
}

/// Scores a predicted slice. Predicted lines outside the statement universe
/// are dropped with a warning; exact match compares the universe-filtered
/// sets.
pub fn score_instance(
    predicted: &BTreeSet<LineRef>,
    instance: &BenchmarkInstance,
) -> (MetricsRow, ConfusionCounts) {
    let universe = statement_universe(instance);
    let outside: Vec<&LineRef> = predicted.iter().filter(|l| !universe.contains(*l)).collect();
    if !outside.is_empty() {
        tracing::warn!(
            instance = %instance.id,
            count = outside.len(),
            "predicted lines outside the statement universe ignored"
        );
    }
    let truth = instance.ground_truth_refs();
    let counts = confusion(&universe, &truth, predicted);
    let in_u = |s: &BTreeSet<LineRef>| -> BTreeSet<LineRef> {
        s.iter().filter(|l| universe.contains(*l)).cloned().collect()
    };
    let exact = in_u(predicted) == in_u(&truth);
    (metrics(counts, exact), counts)
}

/// `(ratio_1, ratio_all)`: the share of bugs whose slice holds at least one
/// buggy line, and the share whose slice holds all of them.
pub fn ratio_metrics(
    results: &[(BTreeSet<LineRef>, BTreeSet<LineRef>)],
) -> Result<(f64, f64), EvalError> {
    if results.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut any = 0usize;
    let mut all = 0usize;
    for (i, (slice, buggy)) in results.iter().enumerate() {
        if buggy.is_empty() {
            return Err(EvalError::MissingBuggyLines(i));
        }
        if buggy.iter().any(|b| slice.contains(b)) {
            any += 1;
        }
        if buggy.is_subset(slice) {
            all += 1;
        }
    }
    let n = results.len() as f64;
    Ok((any as f64 / n, all as f64 / n))
}
