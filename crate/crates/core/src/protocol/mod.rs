//! Prompt rendering and response parsing for every agent call.

mod parse;
mod scope;
mod template;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

pub use parse::{
    parse_completeness_response, parse_expansion_response, parse_slice_response,
    render_completeness_answer, render_expansion_answer, render_slice_answer, CallKey,
    CompletenessAnswer, ExpansionAnswer, FileLines, MissingItem, MissingKind, Resolution,
    Verdict,
};
pub use scope::{SearchScope, GAP_MARKER};
pub use template::{PromptKind, Template, TemplateSet};

use crate::slice::Slice;
use crate::workspace::{CallSite, FunctionRecord, Language, SlicingCriterion, Workspace};

/// Default cap on a rendered synthesis prompt, in characters.
pub const DEFAULT_CHAR_BUDGET: usize = 48_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("could not parse response: {0}")]
    Parse(String),
    #[error("prompt of {size} characters exceeds the budget of {budget}")]
    ScopeTooLarge { size: usize, budget: usize },
    #[error("template error: {0}")]
    Template(String),
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
}

/// Sections of a prompt, rendered in a fixed order: role, input data,
/// definitions, rules, task, output format.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptSections {
    pub role: String,
    pub data: Vec<(String, String)>,
    pub definitions: Option<String>,
    pub rules: Option<String>,
    pub task: Option<String>,
    pub output_format: Option<String>,
}

impl PromptSections {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut section = |title: &str, body: &str| {
            let _ = write!(out, "## {title}\n{}\n\n", body.trim_end());
        };
        section("Role", &self.role);
        let mut data = String::new();
        for (name, block) in &self.data {
            let _ = write!(data, "### {name}\n{}\n\n", block.trim_end());
        }
        section("Input Data", &data);
        if let Some(d) = &self.definitions {
            section("Dependency Definitions", d);
        }
        if let Some(r) = &self.rules {
            section("Rules", r);
        }
        if let Some(t) = &self.task {
            section("Task", t);
        }
        if let Some(o) = &self.output_format {
            section("Output Format", o);
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    }

    /// Number of top-level sections that will be rendered.
    pub fn section_count(&self) -> usize {
        2 + [&self.definitions, &self.rules, &self.task, &self.output_format]
            .iter()
            .filter(|s| s.is_some())
            .count()
    }
}

/// Renders the agent prompts from a template set.
#[derive(Debug, Clone)]
pub struct PromptRenderer {
    templates: TemplateSet,
    char_budget: usize,
}

impl Default for PromptRenderer {
    fn default() -> Self {
        Self::new(TemplateSet::default(), DEFAULT_CHAR_BUDGET)
    }
}

impl PromptRenderer {
    pub fn new(templates: TemplateSet, char_budget: usize) -> Self {
        Self {
            templates,
            char_budget,
        }
    }

    pub fn char_budget(&self) -> usize {
        self.char_budget
    }

    pub fn synthesis_sections(
        &self,
        workspace: &Workspace,
        criterion: &SlicingCriterion,
        scope: &SearchScope,
    ) -> Result<PromptSections, ProtocolError> {
        if scope.is_empty() {
            return Err(ProtocolError::Precondition("synthesis needs a non-empty scope"));
        }
        let mut s = self.sections(PromptKind::Synthesis, workspace, criterion)?;
        s.data = vec![
            ("Slicing Criterion".into(), criterion_block(criterion)),
            ("Searched Code".into(), scope.render(workspace)),
        ];
        Ok(s)
    }

    /// The synthesis prompt; fails with `ScopeTooLarge` rather than trimming.
    pub fn render_synthesis(
        &self,
        workspace: &Workspace,
        criterion: &SlicingCriterion,
        scope: &SearchScope,
    ) -> Result<String, ProtocolError> {
        let text = self.synthesis_sections(workspace, criterion, scope)?.render();
        let size = text.chars().count();
        if size > self.char_budget {
            return Err(ProtocolError::ScopeTooLarge {
                size,
                budget: self.char_budget,
            });
        }
        Ok(text)
    }

    pub fn render_expansion(
        &self,
        workspace: &Workspace,
        criterion: &SlicingCriterion,
        callsites: &[CallSite],
        catalog: &[FunctionRecord],
    ) -> Result<String, ProtocolError> {
        if callsites.is_empty() {
            return Err(ProtocolError::Precondition("expansion needs at least one call site"));
        }
        let mut s = self.sections(PromptKind::Expansion, workspace, criterion)?;
        let mut calls = String::new();
        for (i, c) in callsites.iter().enumerate() {
            let _ = write!(calls, "{}. call `{}/{}`", i + 1, c.callee_name, c.arity);
            if let Some(r) = &c.receiver_hint {
                let _ = write!(calls, ", receiver `{r}`");
            }
            let code = workspace.line_text(&c.at.file, c.at.line).unwrap_or_default();
            let _ = writeln!(calls, ", at {}: `{}`", c.at, code.trim());
        }
        let mut functions = String::new();
        if catalog.is_empty() {
            functions.push_str("(no project functions)\n");
        }
        for f in catalog {
            let supers = if f.supertypes.is_empty() {
                "none".to_string()
            } else {
                f.supertypes.join(", ")
            };
            let _ = writeln!(
                functions,
                "- {} | {} | file {} | supertypes: {}",
                f.signature(),
                f.kind,
                f.file,
                supers
            );
        }
        s.data = vec![
            ("Invocations".into(), calls),
            ("Project Functions".into(), functions),
        ];
        Ok(s.render())
    }

    pub fn render_conciseness(
        &self,
        workspace: &Workspace,
        slice: &Slice,
    ) -> Result<String, ProtocolError> {
        if slice.is_empty() {
            return Err(ProtocolError::Precondition("conciseness needs a non-empty slice"));
        }
        let criterion = slice.criterion();
        let mut s = self.sections(PromptKind::Conciseness, workspace, criterion)?;
        s.data = vec![
            ("Slicing Criterion".into(), criterion_block(criterion)),
            ("Candidate Slice".into(), slice_block(workspace, slice)),
        ];
        Ok(s.render())
    }

    pub fn render_completeness(
        &self,
        workspace: &Workspace,
        slice: &Slice,
        scope: &SearchScope,
    ) -> Result<String, ProtocolError> {
        if slice.is_empty() || scope.is_empty() {
            return Err(ProtocolError::Precondition(
                "completeness needs a non-empty slice and scope",
            ));
        }
        let criterion = slice.criterion();
        let mut s = self.sections(PromptKind::Completeness, workspace, criterion)?;
        s.data = vec![
            ("Slicing Criterion".into(), criterion_block(criterion)),
            ("Searched Code".into(), scope.render(workspace)),
            ("Candidate Slice".into(), slice_block(workspace, slice)),
        ];
        Ok(s.render())
    }

    pub fn render_refinement(
        &self,
        workspace: &Workspace,
        slice: &Slice,
        scope: &SearchScope,
        missing: &[MissingItem],
    ) -> Result<String, ProtocolError> {
        if missing.is_empty() {
            return Err(ProtocolError::Precondition("refinement needs missing items"));
        }
        let criterion = slice.criterion();
        let mut s = self.sections(PromptKind::Refinement, workspace, criterion)?;
        let mut items = String::new();
        for (i, m) in missing.iter().enumerate() {
            let kind = match m.kind {
                MissingKind::Dependency => "dependency",
                MissingKind::Structural => "structural",
            };
            let _ = writeln!(items, "{}. [{kind}] {}", i + 1, m.description);
        }
        s.data = vec![
            ("Slicing Criterion".into(), criterion_block(criterion)),
            ("Missing Items".into(), items),
            ("Searched Code".into(), scope.render(workspace)),
            ("Current Slice".into(), slice_block(workspace, slice)),
        ];
        Ok(s.render())
    }

    fn sections(
        &self,
        kind: PromptKind,
        workspace: &Workspace,
        criterion: &SlicingCriterion,
    ) -> Result<PromptSections, ProtocolError> {
        let language = workspace
            .file(&criterion.file)
            .map(|f| f.language())
            .unwrap_or(Language::Python);
        let mut values = BTreeMap::new();
        values.insert("language", language_name(language).to_string());
        values.insert("criterion_file", criterion.file.clone());
        values.insert("criterion_line", criterion.line.to_string());
        values.insert("criterion_statement", criterion.statement_text.trim().to_string());
        values.insert("criterion_variables", criterion.variables.join(", "));
        let t = self.templates.get(kind);
        Ok(PromptSections {
            role: t.section("role", &values)?.unwrap_or_default(),
            data: Vec::new(),
            definitions: t.section("definitions", &values)?,
            rules: t.section("rules", &values)?,
            task: t.section("task", &values)?,
            output_format: t.section("output_format", &values)?,
        })
    }
}

fn language_name(language: Language) -> &'static str {
    match language {
        Language::Java => "Java",
        Language::Python => "Python",
    }
}

fn criterion_block(c: &SlicingCriterion) -> String {
    let vars = if c.variables.is_empty() {
        "(none)".to_string()
    } else {
        c.variables.join(", ")
    };
    format!(
        "File: {}\nLine: {}\nStatement: {}\nVariables: {}\n",
        c.file,
        c.line,
        c.statement_text.trim(),
        vars
    )
}

/// Slice lines grouped per file as fenced blocks, without gap markers.
fn slice_block(workspace: &Workspace, slice: &Slice) -> String {
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for l in slice.lines() {
        if current != Some(l.file.as_str()) {
            if current.is_some() {
                out.push_str("```\n\n");
            }
            let lang = workspace
                .file(&l.file)
                .map(|f| f.language().as_str())
                .unwrap_or_default();
            let _ = write!(out, "File: {}\n```{lang}\n", l.file);
            current = Some(&l.file);
        }
        let _ = writeln!(out, "{}", l.text);
    }
    if current.is_some() {
        out.push_str("```\n");
    }
    out
}
