use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{java, python, syntax, Language, Workspace};

/// Inclusive 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end, "span {start}..{end}");
        Self { start, end }
    }

    pub fn line(line: usize) -> Self {
        Self::new(line, line)
    }

    pub fn contains(&self, line: usize) -> bool {
        self.start <= line && line <= self.end
    }

    pub fn encloses(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lines(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    /// Empty when the parameter carries no annotation.
    #[serde(default)]
    pub declared_type: String,
}

impl Param {
    pub fn new(name: impl Into<String>, declared_type: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            declared_type: declared_type.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionKind {
    Function,
    Method,
    Constructor,
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FunctionKind::Function => "function",
            FunctionKind::Method => "method",
            FunctionKind::Constructor => "constructor",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub file: String,
    /// Enclosing classes (and functions, for nested definitions) joined by `.`.
    pub qualified_name: String,
    pub name: String,
    pub params: Vec<Param>,
    /// Direct supertypes of the enclosing class; empty outside classes.
    pub supertypes: Vec<String>,
    pub body_span: Span,
    pub kind: FunctionKind,
}

impl FunctionRecord {
    /// `Qualified.name(type,...)`, using the parameter name where no type is
    /// declared. This is the identifier the expansion protocol exchanges.
    pub fn signature(&self) -> String {
        let params: Vec<&str> = self
            .params
            .iter()
            .map(|p| {
                if p.declared_type.is_empty() {
                    p.name.as_str()
                } else {
                    p.declared_type.as_str()
                }
            })
            .collect();
        format!("{}({})", self.qualified_name, params.join(","))
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn is_lambda(&self) -> bool {
        self.name.starts_with("lambda@")
    }
}

/// Position of a record in [`SyntaxIndex::functions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FunctionId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub file: String,
    pub qualified_name: String,
    pub name: String,
    pub supertypes: Vec<String>,
    pub span: Span,
    /// Lines from the declaration start up to the body opener.
    pub header: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableScope {
    Global,
    Member,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableDecl {
    pub file: String,
    pub name: String,
    /// Qualified name of the owning class for members.
    pub owner: Option<String>,
    pub scope: VariableScope,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructuralKind {
    Package,
    Import,
    ClassHeader,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralDecl {
    pub kind: StructuralKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileIndex {
    pub path: String,
    pub language: Language,
    pub line_count: usize,
    /// The parser had to recover from syntax errors; records are best-effort.
    pub degraded: bool,
    pub structural: Vec<StructuralDecl>,
}

impl FileExtract {
    pub fn record_count(&self) -> usize {
        self.functions.len() + self.classes.len() + self.variables.len() + self.structural.len()
    }
}

/// Records produced by one language extractor for one file.
#[derive(Debug, Default)]
pub(crate) struct FileExtract {
    pub functions: Vec<(FunctionRecord, BTreeSet<String>)>,
    pub classes: Vec<ClassRecord>,
    pub variables: Vec<VariableDecl>,
    pub structural: Vec<StructuralDecl>,
}

/// Immutable, extracted view of every file in a workspace.
#[derive(Debug, Clone, Default)]
pub struct SyntaxIndex {
    files: Vec<FileIndex>,
    functions: Vec<FunctionRecord>,
    writes: Vec<BTreeSet<String>>,
    classes: Vec<ClassRecord>,
    variables: Vec<VariableDecl>,
}

/// Parses every file and extracts functions, classes, global/member
/// variables and structural declarations. Files with syntax errors are
/// indexed best-effort and flagged as degraded.
pub fn build_index(workspace: &Workspace) -> SyntaxIndex {
    let per_file: Vec<(FileIndex, FileExtract)> = workspace
        .files()
        .par_iter()
        .map(|file| {
            let tree = syntax::parse(file.language(), file.text());
            let root = tree.root_node();
            let mut extract = match file.language() {
                Language::Java => java::extract(file.path(), file.text(), root),
                Language::Python => python::extract(file.path(), file.text(), root),
            };
            if root.has_error() && file.language() == Language::Python {
                if let Some(masked) = syntax::mask_broken_chunks(file.text()) {
                    let retry = syntax::parse(Language::Python, &masked);
                    let alt = python::extract(file.path(), &masked, retry.root_node());
                    if alt.record_count() > extract.record_count() {
                        extract = alt;
                    }
                }
            }
            extract.structural.sort_by_key(|s| s.span);
            extract.structural.dedup();
            let degraded = root.has_error();
            if degraded {
                tracing::warn!(path = file.path(), "syntax errors; index is best-effort");
            }
            let info = FileIndex {
                path: file.path().to_string(),
                language: file.language(),
                line_count: file.line_count(),
                degraded,
                structural: std::mem::take(&mut extract.structural),
            };
            (info, extract)
        })
        .collect();

    let mut index = SyntaxIndex::default();
    for (info, extract) in per_file {
        index.files.push(info);
        let mut functions = extract.functions;
        functions.sort_by(|a, b| {
            (a.0.body_span.start, std::cmp::Reverse(a.0.body_span.end))
                .cmp(&(b.0.body_span.start, std::cmp::Reverse(b.0.body_span.end)))
        });
        for (record, writes) in functions {
            index.functions.push(record);
            index.writes.push(writes);
        }
        index.classes.extend(extract.classes);
        index.variables.extend(extract.variables);
    }
    index
}

impl SyntaxIndex {
    pub fn files(&self) -> &[FileIndex] {
        &self.files
    }

    pub fn file(&self, path: &str) -> Option<&FileIndex> {
        self.files.iter().find(|f| f.path == path)
    }

    pub fn functions(&self) -> &[FunctionRecord] {
        &self.functions
    }

    pub fn function(&self, id: FunctionId) -> &FunctionRecord {
        &self.functions[id.0]
    }

    pub fn function_ids(&self) -> impl Iterator<Item = FunctionId> {
        (0..self.functions.len()).map(FunctionId)
    }

    pub fn id_of(&self, record: &FunctionRecord) -> Option<FunctionId> {
        self.functions.iter().position(|f| f == record).map(FunctionId)
    }

    /// Global or member names this function assigns (or mutates in place).
    pub fn writes_of(&self, id: FunctionId) -> &BTreeSet<String> {
        &self.writes[id.0]
    }

    pub fn classes(&self) -> &[ClassRecord] {
        &self.classes
    }

    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn degraded_files(&self) -> impl Iterator<Item = &str> {
        self.files.iter().filter(|f| f.degraded).map(|f| f.path.as_str())
    }

    pub fn has_function_named(&self, name: &str) -> bool {
        self.functions.iter().any(|f| f.name == name)
    }

    /// Innermost function whose span covers `line`; lambdas are skipped when
    /// `skip_lambdas` is set.
    pub fn innermost_function_at(
        &self,
        file: &str,
        line: usize,
        skip_lambdas: bool,
    ) -> Option<FunctionId> {
        self.function_ids()
            .filter(|&id| {
                let f = self.function(id);
                f.file == file && f.body_span.contains(line) && !(skip_lambdas && f.is_lambda())
            })
            .min_by_key(|&id| self.function(id).body_span.len())
    }

    pub fn innermost_class_at(&self, file: &str, line: usize) -> Option<&ClassRecord> {
        self.classes
            .iter()
            .filter(|c| c.file == file && c.span.contains(line))
            .min_by_key(|c| c.span.len())
    }
}
