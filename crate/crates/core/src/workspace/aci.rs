//! Deterministic syntax queries handed to the agents: the criterion's
//! initial scope, call sites in a candidate slice, the project function
//! catalog, and module-level context for a slice.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::index::{FunctionRecord, Span, StructuralKind, SyntaxIndex};
use super::lexer::{self, JAVA_ALWAYS_EXCLUDED, PYTHON_BUILTINS};
use super::syntax::{self, RawCall};
use super::{java, python, Language, LineRef, Result, SlicingCriterion, Workspace, WorkspaceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionRole {
    CriterionScope,
    FunctionBody,
    GlobalDecl,
    Structural,
}

impl RegionRole {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionRole::CriterionScope => "criterion-scope",
            RegionRole::FunctionBody => "function-body",
            RegionRole::GlobalDecl => "global-decl",
            RegionRole::Structural => "structural",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeRegion {
    pub file: String,
    pub span: Span,
    pub role: RegionRole,
}

impl CodeRegion {
    pub fn new(file: impl Into<String>, span: Span, role: RegionRole) -> Self {
        Self {
            file: file.into(),
            span,
            role,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallSite {
    pub callee_name: String,
    pub receiver_hint: Option<String>,
    pub arity: usize,
    pub at: LineRef,
}

impl CallSite {
    /// `name/arity`, the key the expansion protocol uses for a call.
    pub fn key(&self) -> String {
        format!("{}/{}", self.callee_name, self.arity)
    }
}

/// One line of code handed to [`extract_invocations`], with its origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentLine {
    pub at: LineRef,
    pub text: String,
}

/// Code lines in a single language, not necessarily contiguous or
/// syntactically complete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeFragment {
    pub language: Language,
    pub lines: Vec<FragmentLine>,
}

impl CodeFragment {
    pub fn new(language: Language) -> Self {
        Self {
            language,
            lines: Vec::new(),
        }
    }

    /// A free-standing snippet; lines are numbered from 1 under `file`.
    pub fn from_text(language: Language, file: &str, text: &str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| FragmentLine {
                at: LineRef::new(file, i + 1),
                text: l.to_string(),
            })
            .collect();
        Self { language, lines }
    }

    pub fn push(&mut self, at: LineRef, text: impl Into<String>) {
        self.lines.push(FragmentLine {
            at,
            text: text.into(),
        });
    }
}

/// Which callees [`extract_invocations`] treats as external.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionPolicy {
    /// Java callees excluded unconditionally.
    pub java_always: Vec<String>,
    /// Exclude Java callees that match no project function by name.
    pub java_require_project_match: bool,
    /// Python callees excluded unless the project defines a function of the
    /// same name.
    pub python_builtins: Vec<String>,
    /// Additional names excluded in either language.
    pub extra: Vec<String>,
}

impl Default for ExclusionPolicy {
    fn default() -> Self {
        Self {
            java_always: JAVA_ALWAYS_EXCLUDED.iter().map(|s| s.to_string()).collect(),
            java_require_project_match: true,
            python_builtins: PYTHON_BUILTINS.iter().map(|s| s.to_string()).collect(),
            extra: Vec::new(),
        }
    }
}

impl ExclusionPolicy {
    pub fn excludes(&self, index: &SyntaxIndex, language: Language, name: &str) -> bool {
        if self.extra.iter().any(|e| e == name) {
            return true;
        }
        match language {
            Language::Java => {
                self.java_always.iter().any(|e| e == name)
                    || (self.java_require_project_match && !index.has_function_named(name))
            }
            Language::Python => {
                self.python_builtins.iter().any(|e| e == name) && !index.has_function_named(name)
            }
        }
    }
}

/// The region a slicing session starts from: the innermost enclosing
/// function (lambdas skipped), else the innermost enclosing class, else the
/// whole module.
pub fn criterion_scope(index: &SyntaxIndex, criterion: &SlicingCriterion) -> Result<CodeRegion> {
    let file = index
        .file(&criterion.file)
        .filter(|f| criterion.line >= 1 && criterion.line <= f.line_count)
        .ok_or_else(|| WorkspaceError::CriterionNotFound {
            file: criterion.file.clone(),
            line: criterion.line,
        })?;
    let span = if let Some(id) = index.innermost_function_at(&file.path, criterion.line, true) {
        index.function(id).body_span
    } else if let Some(class) = index.innermost_class_at(&file.path, criterion.line) {
        class.span
    } else {
        Span::new(1, file.line_count)
    };
    Ok(CodeRegion::new(file.path.clone(), span, RegionRole::CriterionScope))
}

/// Call sites in `fragment` in source order, minus excluded callees.
///
/// The lines are flattened (leading whitespace removed) and parsed as one
/// unit so that calls spanning lines are seen whole; any line on which that
/// parse found no call is then parsed on its own, which recovers calls lost
/// to error recovery around unbalanced fragments.
pub fn extract_invocations(
    index: &SyntaxIndex,
    fragment: &CodeFragment,
    policy: &ExclusionPolicy,
) -> Vec<CallSite> {
    if fragment.lines.is_empty() {
        return Vec::new();
    }
    let language = fragment.language;
    let flat: Vec<&str> = fragment.lines.iter().map(|l| l.text.trim()).collect();
    let joined = flat.join("\n");
    let mut found: Vec<(usize, usize, RawCall)> = raw_calls(language, &joined)
        .into_iter()
        .filter(|c| c.row < flat.len())
        .map(|c| (c.row, c.byte, c))
        .collect();

    let covered: HashSet<usize> = found.iter().map(|(row, _, _)| *row).collect();
    for (row, line) in flat.iter().enumerate() {
        if covered.contains(&row) || !line.contains('(') {
            continue;
        }
        let mut probe = line.to_string();
        if language == Language::Python && probe.ends_with(':') {
            probe.push_str(" pass");
        }
        for c in raw_calls(language, &probe) {
            if c.row == 0 {
                found.push((row, c.byte, c));
            }
        }
    }
    found.sort_by_key(|(row, byte, _)| (*row, *byte));

    found
        .into_iter()
        .filter(|(_, _, c)| !c.name.is_empty() && !policy.excludes(index, language, &c.name))
        .map(|(row, _, c)| CallSite {
            callee_name: c.name,
            receiver_hint: c.receiver,
            arity: c.arity,
            at: fragment.lines[row].at.clone(),
        })
        .collect()
}

fn raw_calls(language: Language, text: &str) -> Vec<RawCall> {
    let tree = syntax::parse(language, text);
    let mut out = Vec::new();
    match language {
        Language::Java => java::collect_calls(tree.root_node(), text, &mut out),
        Language::Python => python::collect_calls(tree.root_node(), text, &mut out),
    }
    out
}

/// Every function, method, constructor and lambda in the workspace.
pub fn list_project_functions(index: &SyntaxIndex) -> Vec<FunctionRecord> {
    index.functions().to_vec()
}

/// Context a slice needs beyond its own lines: declarations of the global and
/// member variables it mentions, bodies of functions that write them, and the
/// package/import lines plus enclosing class headers of every file involved.
///
/// Lines claimed by several regions keep the strongest role (structural, then
/// declaration, then body); lines already in the slice are left out. Regions
/// come back in workspace file order, then line order.
pub fn module_context(
    workspace: &Workspace,
    index: &SyntaxIndex,
    slice: &[LineRef],
) -> Vec<CodeRegion> {
    let mut referenced = BTreeSet::new();
    for at in slice {
        let (Some(file), Some(text)) = (workspace.file(&at.file), workspace.line_text(&at.file, at.line))
        else {
            continue;
        };
        for tok in lexer::identifiers(text, file.language()) {
            if !tok.is_call && !lexer::is_keyword(tok.text, file.language()) {
                referenced.insert(tok.text.to_string());
            }
        }
    }

    let mut claims: BTreeMap<(String, usize), RegionRole> = BTreeMap::new();
    let mut claim = |file: &str, span: Span, role: RegionRole| {
        for line in span.lines() {
            let slot = claims.entry((file.to_string(), line)).or_insert(role);
            if role > *slot {
                *slot = role;
            }
        }
    };

    let mut anchors: Vec<LineRef> = slice.to_vec();
    let mut declared = BTreeSet::new();
    for decl in index.variables() {
        if referenced.contains(&decl.name) {
            claim(&decl.file, decl.span, RegionRole::GlobalDecl);
            anchors.push(LineRef::new(decl.file.clone(), decl.span.start));
            declared.insert(decl.name.clone());
        }
    }
    for id in index.function_ids() {
        if index.writes_of(id).iter().any(|w| declared.contains(w)) {
            let f = index.function(id);
            claim(&f.file, f.body_span, RegionRole::FunctionBody);
            anchors.push(LineRef::new(f.file.clone(), f.body_span.start));
        }
    }

    let files: BTreeSet<&str> = anchors.iter().map(|a| a.file.as_str()).collect();
    for file in index.files().iter().filter(|f| files.contains(f.path.as_str())) {
        for decl in &file.structural {
            if matches!(decl.kind, StructuralKind::Package | StructuralKind::Import) {
                claim(&file.path, decl.span, RegionRole::Structural);
            }
        }
    }
    for class in index.classes() {
        let encloses = anchors
            .iter()
            .any(|a| a.file == class.file && class.span.contains(a.line));
        if encloses {
            claim(&class.file, class.header, RegionRole::Structural);
        }
    }

    for at in slice {
        claims.remove(&(at.file.clone(), at.line));
    }

    let mut regions: Vec<CodeRegion> = Vec::new();
    for ((file, line), role) in claims {
        match regions.last_mut() {
            Some(last) if last.file == file && last.role == role && last.span.end + 1 == line => {
                last.span.end = line;
            }
            _ => regions.push(CodeRegion::new(file, Span::line(line), role)),
        }
    }
    regions.sort_by_key(|r| (workspace.file_order(&r.file).unwrap_or(usize::MAX), r.span.start));
    regions
}
