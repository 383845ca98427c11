//! Slices as sets of workspace lines, and alignment of LLM-emitted code back
//! onto the original source.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::SearchScope;
use crate::workspace::{LineRef, SlicingCriterion, Workspace};

/// Characters that carry no statement on their own.
const DELIMITERS: &[char] = &['(', ')', '{', '}', '[', ']', ':', ';', ','];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SliceError {
    #[error("no line of the response matched the workspace ({hallucinated} unmatched)")]
    EmptyAlignment { hallucinated: usize },
    #[error("cannot merge slices for different criteria ({left} vs {right})")]
    CriterionMismatch { left: LineRef, right: LineRef },
    #[error("{0} is not a workspace line")]
    NotInWorkspace(LineRef),
}

/// Trims, then collapses internal whitespace runs to one space.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes all whitespace.
pub fn strip_whitespace(text: &str) -> String {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedLine {
    /// Collapsed text; empty for non-semantic lines.
    pub text: String,
    pub non_semantic: bool,
}

/// Whitespace-normalizes a line. Lines consisting only of delimiters
/// `(){}[]:;,` once comments are removed (blank and comment-only lines
/// included) are non-semantic and normalize to the empty string.
pub fn normalize_line(text: &str) -> NormalizedLine {
    let collapsed = collapse_whitespace(text);
    let code = strip_comment_markers(&collapsed);
    let non_semantic = code
        .chars()
        .all(|c| c.is_whitespace() || DELIMITERS.contains(&c));
    NormalizedLine {
        text: if non_semantic { String::new() } else { collapsed },
        non_semantic,
    }
}

/// Drops `/* .. */` blocks and anything after `//` or `#`. Good enough to
/// judge whether a line is delimiters only; not used to rewrite code.
fn strip_comment_markers(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    loop {
        let cut = [rest.find("//"), rest.find('#'), rest.find("/*")]
            .into_iter()
            .flatten()
            .min();
        let Some(at) = cut else {
            out.push_str(rest);
            return out;
        };
        out.push_str(&rest[..at]);
        if rest[at..].starts_with("/*") {
            match rest[at + 2..].find("*/") {
                Some(end) => rest = &rest[at + 2 + end + 2..],
                None => return out,
            }
        } else {
            return out;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SliceLine {
    pub file: String,
    pub line: usize,
    pub text: String,
}

impl SliceLine {
    pub fn at(&self) -> LineRef {
        LineRef::new(self.file.clone(), self.line)
    }
}

/// A raw code line from a model response, with the file it claimed to be from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub text: String,
}

impl RawLine {
    pub fn new(file: Option<&str>, text: impl Into<String>) -> Self {
        Self {
            file: file.map(str::to_string),
            text: text.into(),
        }
    }
}

/// Lines of a backward slice, ordered by `(file, line)`. The criterion line
/// is always a member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slice {
    criterion: SlicingCriterion,
    lines: BTreeSet<SliceLine>,
}

impl Slice {
    /// The slice holding only the criterion line.
    pub fn new(workspace: &Workspace, criterion: SlicingCriterion) -> Result<Self, SliceError> {
        let mut slice = Self {
            criterion,
            lines: BTreeSet::new(),
        };
        let at = slice.criterion.line_ref();
        if !slice.insert(workspace, &at) {
            return Err(SliceError::NotInWorkspace(at));
        }
        Ok(slice)
    }

    /// Builds a slice from line references, rejecting any that are not
    /// workspace lines.
    pub fn from_lines<'a>(
        workspace: &Workspace,
        criterion: SlicingCriterion,
        lines: impl IntoIterator<Item = &'a LineRef>,
    ) -> Result<Self, SliceError> {
        let mut slice = Self::new(workspace, criterion)?;
        for at in lines {
            if !slice.insert(workspace, at) {
                return Err(SliceError::NotInWorkspace(at.clone()));
            }
        }
        Ok(slice)
    }

    pub fn criterion(&self) -> &SlicingCriterion {
        &self.criterion
    }

    /// Adds a workspace line; returns false when it does not exist.
    pub fn insert(&mut self, workspace: &Workspace, at: &LineRef) -> bool {
        match workspace.line_text(&at.file, at.line) {
            Some(text) => {
                self.lines.insert(SliceLine {
                    file: at.file.clone(),
                    line: at.line,
                    text: text.to_string(),
                });
                true
            }
            None => false,
        }
    }

    /// Removes a line unless it is the criterion line.
    pub fn remove(&mut self, at: &LineRef) -> bool {
        if *at == self.criterion.line_ref() {
            return false;
        }
        let before = self.lines.len();
        self.lines.retain(|l| !(l.file == at.file && l.line == at.line));
        self.lines.len() != before
    }

    pub fn contains(&self, at: &LineRef) -> bool {
        self.lines
            .iter()
            .any(|l| l.file == at.file && l.line == at.line)
    }

    pub fn lines(&self) -> impl Iterator<Item = &SliceLine> {
        self.lines.iter()
    }

    pub fn line_refs(&self) -> Vec<LineRef> {
        self.lines.iter().map(SliceLine::at).collect()
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Checks every slice invariant against `workspace`: the criterion line
    /// is present and each line's text is the workspace text at its position.
    pub fn validate(&self, workspace: &Workspace) -> Result<(), SliceError> {
        if !self.contains(&self.criterion.line_ref()) {
            return Err(SliceError::NotInWorkspace(self.criterion.line_ref()));
        }
        for l in &self.lines {
            let ok = workspace
                .line_text(&l.file, l.line)
                .is_some_and(|t| collapse_whitespace(t) == collapse_whitespace(&l.text));
            if !ok {
                return Err(SliceError::NotInWorkspace(l.at()));
            }
        }
        Ok(())
    }

    pub fn to_document(&self, hallucinated: &[RawLine]) -> SliceDocument {
        SliceDocument {
            criterion: CriterionRef {
                file: self.criterion.file.clone(),
                line: self.criterion.line,
                variables: self.criterion.variables.clone(),
            },
            lines: self.lines.iter().cloned().collect(),
            hallucinated: hallucinated.to_vec(),
        }
    }
}

/// Set union of two slices for the same criterion.
pub fn merge_slices(a: &Slice, b: &Slice) -> Result<Slice, SliceError> {
    if !a.criterion.same_anchor(&b.criterion) {
        return Err(SliceError::CriterionMismatch {
            left: a.criterion.line_ref(),
            right: b.criterion.line_ref(),
        });
    }
    let mut out = a.clone();
    out.lines.extend(b.lines.iter().cloned());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionRef {
    pub file: String,
    pub line: usize,
    #[serde(default)]
    pub variables: Vec<String>,
}

/// On-disk form of a slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceDocument {
    pub criterion: CriterionRef,
    pub lines: Vec<SliceLine>,
    #[serde(default)]
    pub hallucinated: Vec<RawLine>,
}

impl SliceDocument {
    pub fn line_refs(&self) -> BTreeSet<LineRef> {
        self.lines.iter().map(SliceLine::at).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub aligned: Vec<SliceLine>,
    pub hallucinated: Vec<RawLine>,
    pub ambiguous_resolved: usize,
}

/// Maps raw response lines onto workspace lines by whitespace-normalized
/// equality (falling back to whitespace-free equality).
///
/// When a line matches several workspace lines the candidates are narrowed,
/// one step at a time and only while some remain: lines in the hinted file,
/// lines inside `scope`, lines not yet claimed by this call, lines of
/// `previous`, and finally the line nearest to the last aligned line in the
/// same file. Remaining ties go to the first line in workspace order. The
/// criterion line is always added.
pub fn align_text_to_slice(
    raw: &[RawLine],
    workspace: &Workspace,
    scope: &SearchScope,
    previous: Option<&Slice>,
    criterion: &SlicingCriterion,
) -> Result<(Slice, AlignmentReport), SliceError> {
    let mut slice = Slice::new(workspace, criterion.clone())?;
    let mut report = AlignmentReport::default();
    let mut claimed: HashSet<LineRef> = HashSet::new();
    let mut last: Option<LineRef> = None;

    for item in raw {
        if item.text.trim().is_empty() {
            continue;
        }
        let mut candidates = lookup(workspace, &item.text);
        if candidates.is_empty() {
            report.hallucinated.push(item.clone());
            continue;
        }
        if candidates.len() > 1 {
            report.ambiguous_resolved += 1;
            if let Some(hint) = item.file.as_deref().and_then(|h| workspace.resolve_path(h)) {
                narrow(&mut candidates, |c| c.file == hint);
            }
            narrow(&mut candidates, |c| scope.contains(c));
            narrow(&mut candidates, |c| !claimed.contains(c));
            if let Some(prev) = previous {
                narrow(&mut candidates, |c| prev.contains(c));
            }
            if let Some(last) = &last {
                let nearest = candidates
                    .iter()
                    .filter(|c| c.file == last.file)
                    .map(|c| c.line.abs_diff(last.line))
                    .min();
                if let Some(d) = nearest {
                    narrow(&mut candidates, |c| {
                        c.file == last.file && c.line.abs_diff(last.line) == d
                    });
                }
            }
        }
        let chosen = candidates
            .into_iter()
            .min_by_key(|c| (workspace.file_order(&c.file), c.line))
            .expect("candidates non-empty");
        slice.insert(workspace, &chosen);
        report.aligned.push(SliceLine {
            file: chosen.file.clone(),
            line: chosen.line,
            text: workspace
                .line_text(&chosen.file, chosen.line)
                .unwrap_or_default()
                .to_string(),
        });
        claimed.insert(chosen.clone());
        last = Some(chosen);
    }

    if report.aligned.is_empty() {
        return Err(SliceError::EmptyAlignment {
            hallucinated: report.hallucinated.len(),
        });
    }
    Ok((slice, report))
}

fn lookup(workspace: &Workspace, text: &str) -> Vec<LineRef> {
    let key = collapse_whitespace(text);
    if let Some(hits) = workspace.lines_by_text().get(&key) {
        return hits.clone();
    }
    workspace
        .lines_by_compact_text()
        .get(&strip_whitespace(text))
        .cloned()
        .unwrap_or_default()
}

fn narrow(candidates: &mut Vec<LineRef>, keep: impl Fn(&LineRef) -> bool) {
    if candidates.iter().any(&keep) {
        candidates.retain(|c| keep(c));
    }
}
