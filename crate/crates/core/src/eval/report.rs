use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MetricsRow, SourceTag};
use crate::workspace::Language;

/// A scored instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRow {
    pub id: String,
    pub language: Language,
    pub source_tag: SourceTag,
    pub metrics: MetricsRow,
}

/// Unweighted per-instance means for one `(language, source)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub language: Language,
    pub source_tag: SourceTag,
    pub n: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Fraction of instances whose slice matched exactly.
    pub acc_em: f64,
}

/// Bug-coverage ratios over instances that carry buggy lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub n: usize,
    pub ratio_1: f64,
    pub ratio_all: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Ratios>,
}

/// Groups rows by `(language, source_tag)` in that sort order and averages
/// each metric without weighting.
pub fn aggregate(rows: &[ScoredRow]) -> Summary {
    let mut groups: BTreeMap<(Language, SourceTag), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.language, r.source_tag)).or_default().push(&r.metrics);
    }
    let groups = groups
        .into_iter()
        .map(|((language, source_tag), ms)| {
            let n = ms.len();
            let mean = |f: fn(&MetricsRow) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / n as f64;
            GroupSummary {
                group: format!("{language}-{source_tag}"),
                language,
                source_tag,
                n,
                precision: mean(|m| m.precision),
                recall: mean(|m| m.recall),
                f1: mean(|m| m.f1),
                accuracy: mean(|m| m.accuracy),
                acc_em: mean(|m| if m.exact_match { 1.0 } else { 0.0 }),
            }
        })
        .collect();
    Summary {
        groups,
        ratios: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(format!("unknown report format `{other}` (json, csv, markdown)")),
        }
    }
}

pub const CSV_HEADER: &str = "group,n,precision,recall,f1,accuracy,acc_em";

/// Renders a summary. JSON is lossless; CSV has the fixed columns
/// `group,n,precision,recall,f1,accuracy,acc_em`; the markdown table lists
/// Prec., Rec., F1, Acc-EM and Acc. per group.
pub fn emit_report(summary: &Summary, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s = String::from(CSV_HEADER);
            s.push('\n');
            for g in &summary.groups {
                let _ = writeln!(
                    s,
                    "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    g.group, g.n, g.precision, g.recall, g.f1, g.accuracy, g.acc_em
                );
            }
            s
        }
        ReportFormat::Markdown => {
            let mut s = String::from("| Group | N | Prec. | Rec. | F1 | Acc-EM | Acc. |\n");
            s.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
            for g in &summary.groups {
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
                    g.group, g.n, g.precision, g.recall, g.f1, g.acc_em, g.accuracy
                );
            }
            if let Some(r) = &summary.ratios {
                let _ = write!(
                    s,
                    "\nBug coverage over {} instances: Ratio-1 {:.3}, Ratio-All {:.3}\n",
                    r.n, r.ratio_1, r.ratio_all
                );
            }
            s
        }
    }
}
