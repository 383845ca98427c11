use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EvalError;
use crate::slice::CriterionRef;
use crate::workspace::{
    load_workspace, FileEntry, Language, LineRef, SlicingCriterion, SourceFile, Workspace,
    WorkspaceError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Codenet,
    Github,
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceTag::Codenet => "codenet",
            SourceTag::Github => "github",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkFile {
    pub path: String,
    pub content: String,
}

/// Line numbers of one file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileLineSet {
    pub file: String,
    pub lines: Vec<usize>,
}

/// One benchmark program with its criterion and annotated slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub id: String,
    pub language: Language,
    pub files: Vec<BenchmarkFile>,
    pub criterion: CriterionRef,
    pub ground_truth: Vec<FileLineSet>,
    pub source_tag: SourceTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buggy_lines: Option<Vec<FileLineSet>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Benchmark {
    pub instances: Vec<BenchmarkInstance>,
}

/// A schema or invariant violation, located by JSON pointer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaIssue {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pointer, self.message)
    }
}

pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkInstance>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_benchmark(&text)
}

/// Parses and validates benchmark JSON, reporting every problem found.
pub fn parse_benchmark(text: &str) -> Result<Vec<BenchmarkInstance>, EvalError> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        EvalError::Schema(vec![SchemaIssue {
            pointer: String::new(),
            message: format!("not valid JSON: {e}"),
        }])
    })?;
    let mut issues = Vec::new();
    check_shape(&value, &mut issues);
    if !issues.is_empty() {
        return Err(EvalError::Schema(issues));
    }
    let bench: Benchmark = serde_json::from_value(value).map_err(|e| {
        EvalError::Schema(vec![SchemaIssue {
            pointer: "/instances".into(),
            message: e.to_string(),
        }])
    })?;
    let mut ids = HashSet::new();
    for (i, inst) in bench.instances.iter().enumerate() {
        let base = format!("/instances/{i}");
        if !ids.insert(inst.id.clone()) {
            issues.push(issue(&format!("{base}/id"), format!("duplicate id `{}`", inst.id)));
        }
        check_invariants(inst, &base, &mut issues);
    }
    if issues.is_empty() {
        Ok(bench.instances)
    } else {
        Err(EvalError::Schema(issues))
    }
}

fn issue(pointer: &str, message: impl Into<String>) -> SchemaIssue {
    SchemaIssue {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

fn check_shape(root: &Value, issues: &mut Vec<SchemaIssue>) {
    let Some(instances) = root.get("instances").and_then(Value::as_array) else {
        issues.push(issue("/instances", "missing or not an array"));
        return;
    };
    for (i, inst) in instances.iter().enumerate() {
        let base = format!("/instances/{i}");
        if !inst.is_object() {
            issues.push(issue(&base, "not an object"));
            continue;
        }
        require_str(inst, &base, "id", issues);
        match inst.get("language").and_then(Value::as_str) {
            Some("java") | Some("python") => {}
            _ => issues.push(issue(&format!("{base}/language"), "must be \"java\" or \"python\"")),
        }
        match inst.get("source_tag").and_then(Value::as_str) {
            Some("codenet") | Some("github") => {}
            _ => issues.push(issue(
                &format!("{base}/source_tag"),
                "must be \"codenet\" or \"github\"",
            )),
        }
        match inst.get("files").and_then(Value::as_array) {
            Some(files) if !files.is_empty() => {
                for (j, f) in files.iter().enumerate() {
                    let fb = format!("{base}/files/{j}");
                    require_str(f, &fb, "path", issues);
                    require_str(f, &fb, "content", issues);
                }
            }
            _ => issues.push(issue(&format!("{base}/files"), "missing or empty array")),
        }
        match inst.get("criterion") {
            Some(c) if c.is_object() => {
                let cb = format!("{base}/criterion");
                require_str(c, &cb, "file", issues);
                require_line(c.get("line"), &format!("{cb}/line"), issues);
                if let Some(vars) = c.get("variables") {
                    let ok = vars
                        .as_array()
                        .is_some_and(|a| a.iter().all(Value::is_string));
                    if !ok {
                        issues.push(issue(&format!("{cb}/variables"), "must be an array of strings"));
                    }
                }
            }
            _ => issues.push(issue(&format!("{base}/criterion"), "missing or not an object")),
        }
        check_line_sets(inst.get("ground_truth"), &format!("{base}/ground_truth"), false, issues);
        if let Some(b) = inst.get("buggy_lines").filter(|b| !b.is_null()) {
            check_line_sets(Some(b), &format!("{base}/buggy_lines"), true, issues);
        }
    }
}

fn require_str(obj: &Value, base: &str, key: &str, issues: &mut Vec<SchemaIssue>) {
    match obj.get(key).and_then(Value::as_str) {
        Some(s) if !s.is_empty() => {}
        _ => issues.push(issue(&format!("{base}/{key}"), "missing or not a non-empty string")),
    }
}

fn require_line(v: Option<&Value>, pointer: &str, issues: &mut Vec<SchemaIssue>) {
    if !v.and_then(Value::as_u64).is_some_and(|n| n >= 1) {
        issues.push(issue(pointer, "must be a positive integer"));
    }
}

fn check_line_sets(v: Option<&Value>, pointer: &str, allow_empty: bool, issues: &mut Vec<SchemaIssue>) {
    let Some(sets) = v.and_then(Value::as_array) else {
        issues.push(issue(pointer, "missing or not an array"));
        return;
    };
    if sets.is_empty() && !allow_empty {
        issues.push(issue(pointer, "must not be empty"));
    }
    for (i, s) in sets.iter().enumerate() {
        let sb = format!("{pointer}/{i}");
        require_str(s, &sb, "file", issues);
        match s.get("lines").and_then(Value::as_array) {
            Some(lines) => {
                for (j, l) in lines.iter().enumerate() {
                    require_line(Some(l), &format!("{sb}/lines/{j}"), issues);
                }
            }
            None => issues.push(issue(&format!("{sb}/lines"), "missing or not an array")),
        }
    }
}

fn check_invariants(inst: &BenchmarkInstance, base: &str, issues: &mut Vec<SchemaIssue>) {
    let mut counts = std::collections::HashMap::new();
    for (j, f) in inst.files.iter().enumerate() {
        let lines = SourceFile::new(f.path.clone(), inst.language, f.content.clone()).line_count();
        if counts.insert(f.path.clone(), lines).is_some() {
            issues.push(issue(&format!("{base}/files/{j}/path"), "duplicate path"));
        }
    }
    let exists = |file: &str, line: usize| counts.get(file).is_some_and(|&n| line >= 1 && line <= n);
    if !exists(&inst.criterion.file, inst.criterion.line) {
        issues.push(issue(
            &format!("{base}/criterion"),
            format!("{}:{} is not a line of the instance files", inst.criterion.file, inst.criterion.line),
        ));
    }
    let sets = [("ground_truth", Some(&inst.ground_truth)), ("buggy_lines", inst.buggy_lines.as_ref())];
    for (name, sets) in sets {
        for (i, s) in sets.into_iter().flatten().enumerate() {
            for (j, &l) in s.lines.iter().enumerate() {
                if !exists(&s.file, l) {
                    issues.push(issue(
                        &format!("{base}/{name}/{i}/lines/{j}"),
                        format!("{}:{l} is not a line of the instance files", s.file),
                    ));
                }
            }
        }
    }
}

fn to_refs(sets: &[FileLineSet]) -> BTreeSet<LineRef> {
    sets.iter()
        .flat_map(|s| s.lines.iter().map(|&l| LineRef::new(s.file.clone(), l)))
        .collect()
}

impl BenchmarkInstance {
    pub fn workspace(&self) -> Result<Workspace, WorkspaceError> {
        load_workspace(
            self.files
                .iter()
                .map(|f| FileEntry::new(f.path.clone(), f.content.clone()).with_language(self.language))
                .collect(),
        )
    }

    pub fn slicing_criterion(&self, workspace: &Workspace) -> Result<SlicingCriterion, WorkspaceError> {
        SlicingCriterion::new(
            workspace,
            &self.criterion.file,
            self.criterion.line,
            self.criterion.variables.clone(),
        )
    }

    pub fn ground_truth_refs(&self) -> BTreeSet<LineRef> {
        to_refs(&self.ground_truth)
    }

    pub fn buggy_refs(&self) -> Option<BTreeSet<LineRef>> {
        self.buggy_lines.as_deref().map(to_refs)
    }

    pub fn group(&self) -> String {
        format!("{}-{}", self.language, self.source_tag)
    }
}
