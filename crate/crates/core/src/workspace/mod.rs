//! Source ingestion, the syntax index, and the four agent-facing queries
//! (criterion scope, invocation extraction, project function retrieval and
//! module context).

mod aci;
mod index;
mod java;
pub mod lexer;
mod python;
mod syntax;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aci::{
    criterion_scope, extract_invocations, list_project_functions, module_context, CallSite,
    CodeFragment, CodeRegion, ExclusionPolicy, FragmentLine, RegionRole,
};
pub use index::{
    build_index, ClassRecord, FileIndex, FunctionId, FunctionKind, FunctionRecord, Param, Span,
    StructuralDecl, StructuralKind, SyntaxIndex, VariableDecl, VariableScope,
};

/// Files larger than this are skipped when scanning a directory.
pub const MAX_FILE_BYTES: u64 = 2 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("workspace contains no source files")]
    EmptyWorkspace,
    #[error("duplicate path in workspace: {0}")]
    DuplicatePath(String),
    #[error("unsupported language for {0}")]
    UnsupportedLanguage(String),
    #[error("criterion {file}:{line} does not exist in the workspace")]
    CriterionNotFound { file: String, line: usize },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid workspace manifest: {0}")]
    Manifest(String),
}

pub type Result<T, E = WorkspaceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Java,
    Python,
}

impl Language {
    pub fn from_path(path: &str) -> Option<Self> {
        let ext = Path::new(path).extension()?.to_str()?;
        match ext {
            "java" => Some(Language::Java),
            "py" | "pyi" => Some(Language::Python),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Java => "java",
            Language::Python => "python",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = WorkspaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "java" => Ok(Language::Java),
            "python" | "py" => Ok(Language::Python),
            other => Err(WorkspaceError::UnsupportedLanguage(other.to_string())),
        }
    }
}

/// A `(file, line)` pair with a 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LineRef {
    pub file: String,
    pub line: usize,
}

impl LineRef {
    pub fn new(file: impl Into<String>, line: usize) -> Self {
        Self {
            file: file.into(),
            line,
        }
    }
}

impl fmt::Display for LineRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

/// One source file. Lines are 1-based and keep their terminators internally,
/// so concatenating [`SourceFile::raw_line`] over all lines yields `text`.
#[derive(Debug, Clone)]
pub struct SourceFile {
    path: String,
    language: Language,
    text: String,
    line_starts: Vec<usize>,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, language: Language, text: impl Into<String>) -> Self {
        let text = text.into();
        let mut line_starts = vec![0];
        for (i, b) in text.bytes().enumerate() {
            if b == b'\n' && i + 1 < text.len() {
                line_starts.push(i + 1);
            }
        }
        Self {
            path: normalize_path(&path.into()),
            language,
            text,
            line_starts,
        }
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn line_count(&self) -> usize {
        self.line_starts.len()
    }

    /// The line including its terminator.
    pub fn raw_line(&self, line: usize) -> Option<&str> {
        if line == 0 || line > self.line_starts.len() {
            return None;
        }
        let start = self.line_starts[line - 1];
        let end = self
            .line_starts
            .get(line)
            .copied()
            .unwrap_or(self.text.len());
        Some(&self.text[start..end])
    }

    /// The line without its `\n` / `\r\n` terminator.
    pub fn line(&self, line: usize) -> Option<&str> {
        self.raw_line(line)
            .map(|l| l.strip_suffix('\n').unwrap_or(l))
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
    }

    pub fn lines(&self) -> impl Iterator<Item = (usize, &str)> + '_ {
        (1..=self.line_count()).filter_map(move |n| self.line(n).map(|t| (n, t)))
    }
}

/// Input to [`load_workspace`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    #[serde(alias = "text")]
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<Language>,
}

impl FileEntry {
    pub fn new(path: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            content: content.into(),
            language: None,
        }
    }

    pub fn with_language(mut self, language: Language) -> Self {
        self.language = Some(language);
        self
    }
}

/// An immutable set of source files, sorted by path.
#[derive(Debug)]
pub struct Workspace {
    files: Vec<SourceFile>,
    by_path: HashMap<String, usize>,
    line_lookup: OnceLock<HashMap<String, Vec<LineRef>>>,
    compact_lookup: OnceLock<HashMap<String, Vec<LineRef>>>,
}

/// Builds a workspace from explicit entries. Unknown extensions are rejected
/// unless the entry carries a language override.
pub fn load_workspace(entries: Vec<FileEntry>) -> Result<Workspace> {
    if entries.is_empty() {
        return Err(WorkspaceError::EmptyWorkspace);
    }
    let mut files = Vec::with_capacity(entries.len());
    let mut seen = HashMap::new();
    for entry in entries {
        let path = normalize_path(&entry.path);
        if seen.insert(path.clone(), ()).is_some() {
            return Err(WorkspaceError::DuplicatePath(path));
        }
        let language = match entry.language.or_else(|| Language::from_path(&path)) {
            Some(l) => l,
            None => return Err(WorkspaceError::UnsupportedLanguage(path)),
        };
        files.push(SourceFile::new(path, language, entry.content));
    }
    Ok(Workspace::from_files(files))
}

impl Workspace {
    fn from_files(mut files: Vec<SourceFile>) -> Self {
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let by_path = files
            .iter()
            .enumerate()
            .map(|(i, f)| (f.path.clone(), i))
            .collect();
        Self {
            files,
            by_path,
            line_lookup: OnceLock::new(),
            compact_lookup: OnceLock::new(),
        }
    }

    /// Scans `root` recursively for Java and Python sources. Binary files and
    /// files over [`MAX_FILE_BYTES`] are skipped with a warning.
    pub fn from_dir(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let mut entries = Vec::new();
        let walker = walkdir::WalkDir::new(root)
            .sort_by_file_name()
            .into_iter()
            .filter_entry(|e| e.depth() == 0 || !is_hidden(e.file_name()));
        for entry in walker {
            let entry = entry.map_err(|e| WorkspaceError::Io {
                path: root.to_path_buf(),
                source: e.into(),
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(root)
                .unwrap_or(entry.path())
                .to_string_lossy()
                .replace('\\', "/");
            if Language::from_path(&rel).is_none() {
                continue;
            }
            if let Some(content) = read_source(entry.path())? {
                entries.push(FileEntry::new(rel, content));
            }
        }
        load_workspace(entries)
    }

    /// Loads an explicit manifest: `{"files": [{"path": .., "content"?: .., "language"?: ..}]}`.
    /// Entries without `content` are read relative to the manifest's directory.
    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Manifest {
            files: Vec<ManifestEntry>,
        }
        #[derive(Deserialize)]
        struct ManifestEntry {
            path: String,
            #[serde(default, alias = "text")]
            content: Option<String>,
            #[serde(default)]
            language: Option<Language>,
        }
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|source| WorkspaceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: Manifest =
            serde_json::from_str(&raw).map_err(|e| WorkspaceError::Manifest(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        for m in manifest.files {
            let content = match m.content {
                Some(c) => c,
                None => match read_source(&base.join(&m.path))? {
                    Some(c) => c,
                    None => continue,
                },
            };
            entries.push(FileEntry {
                path: m.path,
                content,
                language: m.language,
            });
        }
        load_workspace(entries)
    }

    pub fn files(&self) -> &[SourceFile] {
        &self.files
    }

    pub fn file(&self, path: &str) -> Option<&SourceFile> {
        self.by_path.get(path).map(|&i| &self.files[i])
    }

    /// Position of a file in the sorted file list.
    pub fn file_order(&self, path: &str) -> Option<usize> {
        self.by_path.get(path).copied()
    }

    pub fn line_text(&self, file: &str, line: usize) -> Option<&str> {
        self.file(file)?.line(line)
    }

    pub fn contains_line(&self, file: &str, line: usize) -> bool {
        self.line_text(file, line).is_some()
    }

    /// Resolves a possibly partial path (as an LLM might write it) to a
    /// workspace path: exact match first, then a unique `/`-boundary suffix
    /// match in either direction.
    pub fn resolve_path(&self, hint: &str) -> Option<&str> {
        let hint = normalize_path(hint);
        if let Some(f) = self.file(&hint) {
            return Some(f.path());
        }
        let mut found = self.files.iter().filter(|f| {
            path_suffix_of(&hint, f.path()) || path_suffix_of(f.path(), &hint)
        });
        let first = found.next()?;
        if found.next().is_some() {
            return None;
        }
        Some(first.path())
    }

    /// Every workspace line keyed by its whitespace-collapsed text.
    pub fn lines_by_text(&self) -> &HashMap<String, Vec<LineRef>> {
        self.line_lookup
            .get_or_init(|| self.build_lookup(crate::slice::collapse_whitespace))
    }

    /// Every workspace line keyed by its text with all whitespace removed.
    pub fn lines_by_compact_text(&self) -> &HashMap<String, Vec<LineRef>> {
        self.compact_lookup
            .get_or_init(|| self.build_lookup(crate::slice::strip_whitespace))
    }

    fn build_lookup(&self, key_of: fn(&str) -> String) -> HashMap<String, Vec<LineRef>> {
        let mut map: HashMap<String, Vec<LineRef>> = HashMap::new();
        for f in &self.files {
            for (n, text) in f.lines() {
                let key = key_of(text);
                if key.is_empty() {
                    continue;
                }
                map.entry(key).or_default().push(LineRef::new(f.path(), n));
            }
        }
        map
    }
}

/// The statement a backward slice is computed for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlicingCriterion {
    pub file: String,
    pub line: usize,
    #[serde(default)]
    pub variables: Vec<String>,
    #[serde(default)]
    pub statement_text: String,
}

impl SlicingCriterion {
    /// Anchors a criterion in `workspace`. When `variables` is empty they are
    /// taken from the identifiers on the line, minus keywords and built-ins.
    pub fn new(
        workspace: &Workspace,
        file: &str,
        line: usize,
        variables: Vec<String>,
    ) -> Result<Self> {
        let not_found = || WorkspaceError::CriterionNotFound {
            file: file.to_string(),
            line,
        };
        let path = workspace.resolve_path(file).ok_or_else(not_found)?;
        let source = workspace.file(path).ok_or_else(not_found)?;
        let text = source.line(line).ok_or_else(not_found)?;
        let variables = if variables.is_empty() {
            lexer::criterion_variables(text, source.language())
        } else {
            variables
        };
        Ok(Self {
            file: path.to_string(),
            line,
            variables,
            statement_text: text.to_string(),
        })
    }

    pub fn line_ref(&self) -> LineRef {
        LineRef::new(self.file.clone(), self.line)
    }

    /// Same anchor, regardless of variables or text.
    pub fn same_anchor(&self, other: &SlicingCriterion) -> bool {
        self.file == other.file && self.line == other.line
    }
}

pub(crate) fn normalize_path(path: &str) -> String {
    let p = path.replace('\\', "/");
    let mut p = p.as_str();
    while let Some(rest) = p.strip_prefix("./") {
        p = rest;
    }
    p.to_string()
}

fn path_suffix_of(short: &str, long: &str) -> bool {
    long.len() > short.len()
        && long.ends_with(short)
        && long.as_bytes()[long.len() - short.len() - 1] == b'/'
}

fn is_hidden(name: &std::ffi::OsStr) -> bool {
    name.to_str()
        .map(|s| s.starts_with('.') && s.len() > 1 && s != "..")
        .unwrap_or(false)
}

fn read_source(path: &Path) -> Result<Option<String>> {
    let io_err = |source| WorkspaceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let meta = std::fs::metadata(path).map_err(io_err)?;
    if meta.len() > MAX_FILE_BYTES {
        tracing::warn!(path = %path.display(), bytes = meta.len(), "skipping oversized file");
        return Ok(None);
    }
    let bytes = std::fs::read(path).map_err(io_err)?;
    if bytes.contains(&0) {
        tracing::warn!(path = %path.display(), "skipping binary file");
        return Ok(None);
    }
    match String::from_utf8(bytes) {
        Ok(s) => Ok(Some(s)),
        Err(_) => {
            tracing::warn!(path = %path.display(), "skipping non-UTF-8 file");
            Ok(None)
        }
    }
}
