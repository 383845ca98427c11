use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::scope::GAP_MARKER;
use super::ProtocolError;
use crate::slice::{strip_whitespace, RawLine};
use crate::workspace::{CallSite, FunctionRecord};

/// Lines of one file in a slice answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileLines {
    pub file: String,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingKind {
    Dependency,
    Structural,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingItem {
    pub kind: MissingKind,
    pub description: String,
}

impl MissingItem {
    pub fn new(kind: MissingKind, description: impl Into<String>) -> Self {
        Self {
            kind,
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessAnswer {
    pub verdict: Verdict,
    pub missing: Vec<MissingItem>,
}

impl CompletenessAnswer {
    pub fn from_missing(missing: Vec<MissingItem>) -> Self {
        let verdict = if missing.is_empty() {
            Verdict::Complete
        } else {
            Verdict::Incomplete
        };
        Self { verdict, missing }
    }

    pub fn is_complete(&self) -> bool {
        self.verdict == Verdict::Complete
    }
}

/// `name/arity`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CallKey {
    pub name: String,
    pub arity: usize,
}

impl CallKey {
    pub fn of(call: &CallSite) -> Self {
        Self {
            name: call.callee_name.clone(),
            arity: call.arity,
        }
    }
}

impl fmt::Display for CallKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

impl FromStr for CallKey {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arity) = s
            .trim()
            .rsplit_once('/')
            .ok_or_else(|| ProtocolError::Parse(format!("call key `{s}` is not name/arity")))?;
        let arity = arity
            .trim()
            .parse()
            .map_err(|_| ProtocolError::Parse(format!("call key `{s}` has a bad arity")))?;
        Ok(Self {
            name: name.trim().to_string(),
            arity,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub call: CallKey,
    pub target: FunctionRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExpansionAnswer {
    pub resolved: Vec<Resolution>,
    /// Entries naming a call that was not asked about or a function that is
    /// not in the catalog.
    pub hallucinated: usize,
    /// Further targets given for a call that already had one.
    pub duplicates: usize,
}

/// Code lines of a slice answer. The JSON schema is tried first, then fenced
/// blocks labelled with a file name (or preceded by a `File:` line).
pub fn parse_slice_response(text: &str) -> Result<Vec<RawLine>, ProtocolError> {
    if let Some(value) = find_json(text, "slices") {
        return slice_lines_from_json(&value);
    }
    let fenced = fenced_slice_lines(text);
    if fenced.is_empty() {
        return Err(ProtocolError::Parse(
            "response holds neither a slice object nor a labelled code block".into(),
        ));
    }
    Ok(fenced)
}

fn slice_lines_from_json(value: &Value) -> Result<Vec<RawLine>, ProtocolError> {
    let bad = |what: &str| ProtocolError::Parse(format!("slice object: {what}"));
    let slices = value["slices"]
        .as_array()
        .ok_or_else(|| bad("`slices` is not an array"))?;
    let mut out = Vec::new();
    for entry in slices {
        let file = entry
            .get("file")
            .and_then(Value::as_str)
            .map(str::to_string);
        let lines = entry
            .get("lines")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("entry without a `lines` array"))?;
        for line in lines {
            let line = line.as_str().ok_or_else(|| bad("non-string line"))?;
            for part in line.split('\n') {
                push_code_line(&mut out, file.as_deref(), part);
            }
        }
    }
    Ok(out)
}

fn push_code_line(out: &mut Vec<RawLine>, file: Option<&str>, text: &str) {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == GAP_MARKER || trimmed == "..." {
        return;
    }
    out.push(RawLine::new(file, text.trim_end_matches('\r')));
}

fn fenced_slice_lines(text: &str) -> Vec<RawLine> {
    let mut out = Vec::new();
    let mut last_file_line: Option<String> = None;
    let mut block: Option<(Option<String>, Vec<&str>)> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some((file, body)) = block.as_mut() {
            if trimmed == "```" {
                if let Some(file) = file.as_deref() {
                    for l in body.iter() {
                        push_code_line(&mut out, Some(file), l);
                    }
                }
                block = None;
                last_file_line = None;
            } else {
                body.push(line);
            }
            continue;
        }
        if let Some(info) = trimmed.strip_prefix("```") {
            let info = info.trim();
            let file = if looks_like_filename(info) {
                Some(info.to_string())
            } else {
                last_file_line.take()
            };
            block = Some((file, Vec::new()));
        } else if let Some(path) = trimmed.strip_prefix("File:") {
            last_file_line = Some(path.trim().to_string());
        } else if !trimmed.is_empty() {
            last_file_line = None;
        }
    }
    out
}

fn looks_like_filename(info: &str) -> bool {
    !info.is_empty()
        && !info.contains(char::is_whitespace)
        && info.rsplit_once('.').is_some_and(|(stem, ext)| {
            !stem.is_empty() && !ext.is_empty() && ext.chars().all(|c| c.is_ascii_alphanumeric())
        })
}

/// Validates an expansion answer against the catalog. Targets are matched on
/// their signature with whitespace ignored; a bare qualified name, or a
/// signature missing its leading qualifiers, is accepted when it picks out
/// one function. When several functions share a signature the one in the
/// calling file wins. Only the first target per call is kept.
pub fn parse_expansion_response(
    text: &str,
    catalog: &[FunctionRecord],
    callsites: &[CallSite],
) -> Result<ExpansionAnswer, ProtocolError> {
    let value = find_json(text, "resolutions")
        .ok_or_else(|| ProtocolError::Parse("response holds no resolutions object".into()))?;
    let entries = value["resolutions"]
        .as_array()
        .ok_or_else(|| ProtocolError::Parse("`resolutions` is not an array".into()))?;
    let mut answer = ExpansionAnswer::default();
    let mut seen: HashSet<CallKey> = HashSet::new();
    for entry in entries {
        let (Some(call), Some(target)) = (
            entry.get("call").and_then(Value::as_str),
            entry.get("target").and_then(Value::as_str),
        ) else {
            return Err(ProtocolError::Parse(
                "resolution entries need string `call` and `target`".into(),
            ));
        };
        let Ok(key) = call.parse::<CallKey>() else {
            answer.hallucinated += 1;
            continue;
        };
        let sites: Vec<&CallSite> = callsites.iter().filter(|c| CallKey::of(c) == key).collect();
        if sites.is_empty() {
            answer.hallucinated += 1;
            continue;
        }
        let Some(record) = match_target(target, catalog, &sites) else {
            answer.hallucinated += 1;
            continue;
        };
        if !seen.insert(key.clone()) {
            answer.duplicates += 1;
            tracing::debug!(call = %key, target, "ignoring additional target");
            continue;
        }
        answer.resolved.push(Resolution {
            call: key,
            target: record.clone(),
        });
    }
    Ok(answer)
}

fn match_target<'c>(
    target: &str,
    catalog: &'c [FunctionRecord],
    sites: &[&CallSite],
) -> Option<&'c FunctionRecord> {
    let wanted = strip_whitespace(target);
    let exact: Vec<&FunctionRecord> = catalog
        .iter()
        .filter(|f| strip_whitespace(&f.signature()) == wanted)
        .collect();
    let pool = if !exact.is_empty() {
        exact
    } else {
        let loose: Vec<&FunctionRecord> = catalog
            .iter()
            .filter(|f| {
                let sig = strip_whitespace(&f.signature());
                f.qualified_name == wanted || sig.ends_with(&format!(".{wanted}"))
            })
            .collect();
        let distinct: HashSet<String> = loose.iter().map(|f| f.signature()).collect();
        if distinct.len() != 1 {
            return None;
        }
        loose
    };
    pool.iter()
        .find(|f| sites.iter().any(|s| s.at.file == f.file))
        .or_else(|| pool.first())
        .copied()
}

/// Parses a completeness answer. The verdict follows the missing list.
pub fn parse_completeness_response(text: &str) -> Result<CompletenessAnswer, ProtocolError> {
    let value = find_json(text, "missing")
        .ok_or_else(|| ProtocolError::Parse("response holds no missing-items object".into()))?;
    let items = value["missing"]
        .as_array()
        .ok_or_else(|| ProtocolError::Parse("`missing` is not an array".into()))?;
    let mut missing = Vec::new();
    for item in items {
        let (kind, description) = match item {
            Value::String(s) => (MissingKind::Dependency, s.clone()),
            Value::Object(map) => {
                let kind = match map.get("kind").and_then(Value::as_str) {
                    Some(k) if k.eq_ignore_ascii_case("structural") => MissingKind::Structural,
                    _ => MissingKind::Dependency,
                };
                let description = map
                    .get("description")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string();
                (kind, description)
            }
            _ => return Err(ProtocolError::Parse("malformed missing item".into())),
        };
        missing.push(MissingItem { kind, description });
    }
    Ok(CompletenessAnswer::from_missing(missing))
}

/// The JSON text of a slice answer.
pub fn render_slice_answer(files: &[FileLines]) -> String {
    json!({ "slices": files }).to_string()
}

/// The JSON text of an expansion answer from `(call, target)` pairs.
pub fn render_expansion_answer(pairs: &[(String, String)]) -> String {
    let entries: Vec<Value> = pairs
        .iter()
        .map(|(call, target)| json!({ "call": call, "target": target }))
        .collect();
    json!({ "resolutions": entries }).to_string()
}

pub fn render_completeness_answer(missing: &[MissingItem]) -> String {
    json!({ "missing": missing }).to_string()
}

/// First JSON object in `text` that has `key`: the whole text, then each
/// fenced block, then the span from the first `{` to the last `}`.
fn find_json(text: &str, key: &str) -> Option<Value> {
    let has_key = |v: &Value| v.get(key).is_some();
    let try_parse = |s: &str| serde_json::from_str::<Value>(s.trim()).ok().filter(has_key);
    if let Some(v) = try_parse(text) {
        return Some(v);
    }
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        let Some(close) = body.find("```") else {
            break;
        };
        if let Some(v) = try_parse(&body[..close]) {
            return Some(v);
        }
        rest = &body[close + 3..];
    }
    let (start, end) = (text.find('{')?, text.rfind('}')?);
    (start < end).then(|| try_parse(&text[start..=end])).flatten()
}
