//! A scripted model that knows the expected slice. It answers from what the
//! prompt shows: it can only return lines that are visible in the prompt, so
//! a slice it produces is as good as the scope the pipeline built.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use agentslice::agents::AgentKind;
use agentslice::llm::{ChatBackend, ChatRequest, ScriptedBackend};
use agentslice::protocol::GAP_MARKER;
use agentslice::workspace::{build_index, list_project_functions, LineRef, Workspace};
use serde_json::{json, Value};

/// Data sections of a rendered prompt, keyed by heading, fence-aware.
pub fn sections(prompt: &str) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut fenced = false;
    for line in prompt.lines() {
        if !fenced {
            if let Some(h) = line.strip_prefix("### ") {
                current = Some(h.trim().to_string());
                out.entry(h.trim().to_string()).or_default();
                continue;
            }
            if line.starts_with("## ") {
                current = None;
                continue;
            }
        }
        if line.starts_with("```") {
            fenced = !fenced;
        }
        if let Some(h) = &current {
            out.get_mut(h).unwrap().push(line.to_string());
        }
    }
    out
}

/// Which agent a prompt belongs to, judged from its data sections.
pub fn agent_of(prompt: &str) -> AgentKind {
    let s = sections(prompt);
    let has = |h: &str| s.contains_key(h);
    if has("Invocations") {
        AgentKind::Expansion
    } else if has("Missing Items") {
        AgentKind::Refinement
    } else if has("Candidate Slice") && has("Searched Code") {
        AgentKind::Completeness
    } else if has("Candidate Slice") {
        AgentKind::Conciseness
    } else {
        AgentKind::Synthesis
    }
}

/// `(file, trimmed code)` pairs of the fenced blocks in a section.
pub fn code_lines(block: &[String]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut file = String::new();
    let mut fenced = false;
    for line in block {
        if line.starts_with("```") {
            fenced = !fenced;
            continue;
        }
        if !fenced {
            if let Some(f) = line.strip_prefix("File: ") {
                file = f.trim().to_string();
            }
            continue;
        }
        let t = line.trim();
        if t.is_empty() || t == GAP_MARKER {
            continue;
        }
        out.push((file.clone(), t.to_string()));
    }
    out
}

/// The first prompt of the request (the one carrying the data).
pub fn prompt_of(request: &ChatRequest) -> &str {
    &request.messages[0].content
}

fn slices_json(lines: &[(String, String)]) -> String {
    let mut by_file: Vec<(String, Vec<String>)> = Vec::new();
    for (f, t) in lines {
        match by_file.iter_mut().find(|(g, _)| g == f) {
            Some((_, v)) => v.push(t.clone()),
            None => by_file.push((f.clone(), vec![t.clone()])),
        }
    }
    let slices: Vec<Value> = by_file
        .into_iter()
        .map(|(f, v)| json!({ "file": f, "lines": v }))
        .collect();
    json!({ "slices": slices }).to_string()
}

/// A catalog entry from an expansion prompt.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub signature: String,
    pub file: String,
}

impl CatalogEntry {
    fn name(&self) -> &str {
        let head = self.signature.split('(').next().unwrap_or("");
        head.rsplit('.').next().unwrap_or(head)
    }

    fn owner(&self) -> Option<&str> {
        let head = self.signature.split('(').next().unwrap_or("");
        head.rsplit('.').nth(1)
    }

    fn params(&self) -> Vec<&str> {
        let inner = self.signature.split_once('(').map_or("", |(_, r)| r.trim_end_matches(')'));
        inner.split(',').map(str::trim).filter(|p| !p.is_empty()).collect()
    }

    /// Whether a call `name/arity` could run this entry.
    pub fn accepts(&self, name: &str, arity: usize) -> bool {
        let params = self.params();
        let n = params.len();
        let bound = params.first().is_some_and(|p| *p == "self" || *p == "cls");
        let arity_ok = n == arity || (bound && n == arity + 1);
        let name_ok = self.name() == name || (self.name() == "__init__" && self.owner() == Some(name));
        name_ok && arity_ok
    }
}

/// `(call key, catalog)` from an expansion prompt.
pub fn expansion_request(prompt: &str) -> (Vec<String>, Vec<CatalogEntry>) {
    let s = sections(prompt);
    let calls = s["Invocations"]
        .iter()
        .filter_map(|l| l.split_once("call `").and_then(|(_, r)| r.split_once('`')).map(|(k, _)| k.to_string()))
        .collect();
    let catalog = s["Project Functions"]
        .iter()
        .filter_map(|l| l.strip_prefix("- "))
        .map(|l| {
            let parts: Vec<&str> = l.split(" | ").collect();
            CatalogEntry {
                signature: parts[0].to_string(),
                file: parts[2].trim_start_matches("file ").to_string(),
            }
        })
        .collect();
    (calls, catalog)
}

/// Answers every agent as a careful model would if it knew `truth`.
#[derive(Debug, Clone)]
pub struct Oracle {
    truth: BTreeSet<(String, String)>,
    /// Signatures of functions with a wanted line below their header.
    targets: BTreeSet<String>,
}

impl Oracle {
    pub fn new(workspace: &Workspace, wanted: &BTreeSet<LineRef>) -> Self {
        let truth = wanted
            .iter()
            .map(|r| {
                let text = workspace.line_text(&r.file, r.line).expect("truth line exists");
                (r.file.clone(), text.trim().to_string())
            })
            .collect();
        let index = build_index(workspace);
        let targets = list_project_functions(&index)
            .iter()
            .filter(|f| {
                wanted
                    .iter()
                    .any(|r| r.file == f.file && r.line > f.body_span.start && r.line <= f.body_span.end)
            })
            .map(|f| f.signature())
            .collect();
        Self { truth, targets }
    }

    fn wanted(&self, lines: &[(String, String)]) -> Vec<(String, String)> {
        lines.iter().filter(|l| self.truth.contains(*l)).cloned().collect()
    }

    fn missing(&self, s: &BTreeMap<String, Vec<String>>, slice_heading: &str) -> Vec<(String, String)> {
        let have: BTreeSet<(String, String)> = code_lines(&s[slice_heading]).into_iter().collect();
        let mut seen = BTreeSet::new();
        self.wanted(&code_lines(&s["Searched Code"]))
            .into_iter()
            .filter(|l| !have.contains(l) && seen.insert(l.clone()))
            .collect()
    }

    pub fn answer(&self, prompt: &str) -> String {
        let s = sections(prompt);
        match agent_of(prompt) {
            AgentKind::Synthesis => slices_json(&self.wanted(&code_lines(&s["Searched Code"]))),
            AgentKind::Conciseness => slices_json(&self.wanted(&code_lines(&s["Candidate Slice"]))),
            AgentKind::Completeness => {
                let items: Vec<Value> = self
                    .missing(&s, "Candidate Slice")
                    .iter()
                    .map(|(f, t)| json!({ "kind": "dependency", "description": format!("`{t}` in {f}") }))
                    .collect();
                json!({ "missing": items }).to_string()
            }
            AgentKind::Refinement => {
                let mut lines = code_lines(&s["Current Slice"]);
                lines.extend(self.missing(&s, "Current Slice"));
                slices_json(&lines)
            }
            AgentKind::Expansion => {
                let truth_files: BTreeSet<&str> = self.truth.iter().map(|(f, _)| f.as_str()).collect();
                let (calls, catalog) = expansion_request(prompt);
                let mut resolutions = Vec::new();
                for key in calls {
                    let (name, arity) = key.rsplit_once('/').unwrap();
                    let arity: usize = arity.parse().unwrap();
                    let fits: Vec<&CatalogEntry> = catalog.iter().filter(|c| c.accepts(name, arity)).collect();
                    let pick = fits
                        .iter()
                        .find(|c| self.targets.contains(&c.signature))
                        .or_else(|| fits.iter().find(|c| truth_files.contains(c.file.as_str())))
                        .or(fits.first());
                    if let Some(c) = pick {
                        resolutions.push(json!({ "call": key, "target": c.signature }));
                    }
                }
                json!({ "resolutions": resolutions }).to_string()
            }
        }
    }

    pub fn backend(self) -> Arc<dyn ChatBackend> {
        Arc::new(ScriptedBackend::new(move |r| Ok(self.answer(prompt_of(r)))))
    }
}

/// The oracle, except that completeness answers come from `verdict`, called
/// with the 1-based completeness call number.
pub fn with_verdict(oracle: Oracle, verdict: impl Fn(usize) -> bool + Send + Sync + 'static) -> Arc<dyn ChatBackend> {
    let n = AtomicUsize::new(0);
    Arc::new(ScriptedBackend::new(move |r| {
        let p = prompt_of(r);
        if agent_of(p) != AgentKind::Completeness {
            return Ok(oracle.answer(p));
        }
        let k = n.fetch_add(1, Ordering::SeqCst) + 1;
        Ok(if verdict(k) {
            r#"{"missing":[]}"#.to_string()
        } else {
            r#"{"missing":[{"kind":"dependency","description":"the value of n"}]}"#.to_string()
        })
    }))
}
