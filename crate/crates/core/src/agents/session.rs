use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde_json::{json, Value};

use super::{AgentError, AgentKind, AgentStep, Counters, PipelineError, SessionConfig};
use crate::llm::{ChatBackend, LlmClient, Message};
use crate::protocol::{
    parse_completeness_response, parse_expansion_response, parse_slice_response, CallKey,
    CompletenessAnswer, MissingItem, PromptRenderer, ProtocolError, SearchScope,
};
use crate::slice::{align_text_to_slice, merge_slices, RawLine, Slice, SliceError, SliceLine};
use crate::workspace::{
    criterion_scope, extract_invocations, list_project_functions, module_context, CallSite,
    CodeFragment, CodeRegion, FunctionId, FunctionRecord, LineRef, RegionRole, SlicingCriterion, SyntaxIndex,
    Workspace,
};

const SLICE_REMINDER: &str = "Your previous reply could not be read. Reply again with only the \
JSON object, in the shape {\"slices\":[{\"file\":\"<path>\",\"lines\":[\"<line of code>\"]}]}.";
const EXPANSION_REMINDER: &str = "Your previous reply could not be read. Reply again with only \
the JSON object, in the shape {\"resolutions\":[{\"call\":\"<name>/<arity>\",\"target\":\"<signature>\"}]}.";
const COMPLETENESS_REMINDER: &str = "Your previous reply could not be read. Reply again with only \
the JSON object, in the shape {\"missing\":[{\"kind\":\"dependency\",\"description\":\"<text>\"}]}.";

/// State of one slicing run for one criterion.
pub struct SliceSession<'w> {
    workspace: &'w Workspace,
    index: &'w SyntaxIndex,
    criterion: SlicingCriterion,
    config: SessionConfig,
    renderer: PromptRenderer,
    client: LlmClient,
    scope: SearchScope,
    current: Slice,
    visited: BTreeSet<FunctionId>,
    queried: BTreeSet<CallKey>,
    transcript: Vec<AgentStep>,
    counters: Counters,
    hallucinated: Vec<RawLine>,
}

/// Result of a successful pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub slice: Slice,
    pub transcript: Vec<AgentStep>,
    pub counters: Counters,
    /// Response lines that matched no workspace line, over the whole run.
    pub hallucinated: Vec<RawLine>,
    pub tokens_used: u64,
    pub complete: bool,
}

/// Synthesis once, then up to `max_verify_refine` rounds of conciseness,
/// completeness and (when something is missing) refinement. Stops early as
/// soon as a completeness check finds nothing missing.
pub fn run_pipeline(
    workspace: &Workspace,
    index: &SyntaxIndex,
    criterion: SlicingCriterion,
    config: SessionConfig,
    renderer: PromptRenderer,
    backend: Arc<dyn ChatBackend>,
) -> Result<PipelineOutcome, PipelineError> {
    let mut session = match SliceSession::new(workspace, index, criterion, config, renderer, backend)
    {
        Ok(s) => s,
        Err(source) => {
            return Err(PipelineError {
                source,
                last_slice: None,
                transcript: Vec::new(),
                counters: Counters::default(),
            })
        }
    };
    match session.drive() {
        Ok(complete) => Ok(session.into_outcome(complete)),
        Err(source) => Err(session.into_error(source)),
    }
}

impl<'w> SliceSession<'w> {
    pub fn new(
        workspace: &'w Workspace,
        index: &'w SyntaxIndex,
        criterion: SlicingCriterion,
        config: SessionConfig,
        renderer: PromptRenderer,
        backend: Arc<dyn ChatBackend>,
    ) -> Result<Self, AgentError> {
        let current = Slice::new(workspace, criterion.clone())?;
        let client = LlmClient::new(backend, config.model.clone());
        Ok(Self {
            workspace,
            index,
            criterion,
            config,
            renderer,
            client,
            scope: SearchScope::default(),
            current,
            visited: BTreeSet::new(),
            queried: BTreeSet::new(),
            transcript: Vec::new(),
            counters: Counters::default(),
            hallucinated: Vec::new(),
        })
    }

    pub fn scope(&self) -> &SearchScope {
        &self.scope
    }

    pub fn current(&self) -> &Slice {
        &self.current
    }

    pub fn transcript(&self) -> &[AgentStep] {
        &self.transcript
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn visited(&self) -> &BTreeSet<FunctionId> {
        &self.visited
    }

    fn drive(&mut self) -> Result<bool, AgentError> {
        self.run_synthesis()?;
        for _ in 0..self.config.max_verify_refine {
            self.counters.verify_refine_iterations += 1;
            let slice = self.current.clone();
            let (concise, _) = self.run_conciseness(&slice)?;
            self.current = concise;
            self.check()?;
            let answer = self.run_completeness(&self.current.clone())?;
            if answer.is_complete() {
                return Ok(true);
            }
            let refined = self.run_refinement(&self.current.clone(), &answer.missing)?;
            self.current = refined;
            self.check()?;
        }
        Ok(false)
    }

    fn into_outcome(self, complete: bool) -> PipelineOutcome {
        PipelineOutcome {
            tokens_used: self.client.used_tokens(),
            slice: self.current,
            transcript: self.transcript,
            counters: self.counters,
            hallucinated: self.hallucinated,
            complete,
        }
    }

    fn into_error(self, source: AgentError) -> PipelineError {
        PipelineError {
            source,
            last_slice: Some(self.current),
            transcript: self.transcript,
            counters: self.counters,
        }
    }

    /// Builds the slice from the criterion's scope outwards: one slicing
    /// pass, then rounds of call expansion and re-slicing, then one last pass
    /// with module-level context added to the scope.
    pub fn run_synthesis(&mut self) -> Result<Slice, AgentError> {
        let region = criterion_scope(self.index, &self.criterion)?;
        self.scope = SearchScope::new(region.clone());
        self.mark_enclosed_visited();
        self.synthesis_pass()?;

        while self.counters.synthesis_passes < self.config.max_expansion_rounds {
            let calls = self.pending_calls();
            if calls.is_empty() {
                break;
            }
            self.counters.expansion_rounds += 1;
            let new_targets = self.expand(&calls)?;
            if new_targets.is_empty() {
                break;
            }
            self.synthesis_pass()?;
        }

        let context = module_context(self.workspace, self.index, &self.current.line_refs());
        if self.scope.add_all(context) {
            self.mark_enclosed_visited();
            self.synthesis_pass()?;
        }
        Ok(self.current.clone())
    }

    fn synthesis_pass(&mut self) -> Result<(), AgentError> {
        let prompt = self
            .renderer
            .render_synthesis(self.workspace, &self.criterion, &self.scope)?;
        self.counters.synthesis_passes += 1;
        let raw = self.ask(AgentKind::Synthesis, prompt, SLICE_REMINDER, |t| {
            parse_slice_response(t)
        })?;
        let (aligned, report) = align_text_to_slice(
            &raw,
            self.workspace,
            &self.scope,
            Some(&self.current),
            &self.criterion,
        )?;
        self.hallucinated.extend(report.hallucinated.iter().cloned());
        self.current = merge_slices(&self.current, &aligned)?;
        self.annotate(json!({
            "aligned": report.aligned.len(),
            "hallucinated": report.hallucinated.len(),
            "ambiguous_resolved": report.ambiguous_resolved,
            "slice_size": self.current.len(),
            "scope_lines": self.scope.line_count(),
        }));
        self.check()
    }

    /// Call sites in the current slice worth asking about: not asked about
    /// before, and with at least one same-named project function whose body
    /// is not in scope yet. The first site of each `name/arity` is kept.
    fn pending_calls(&self) -> Vec<CallSite> {
        let mut by_language: BTreeMap<_, CodeFragment> = BTreeMap::new();
        for line in self.current.lines() {
            let Some(file) = self.workspace.file(&line.file) else {
                continue;
            };
            by_language
                .entry(file.language())
                .or_insert_with(|| CodeFragment::new(file.language()))
                .push(line.at(), line.text.clone());
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for fragment in by_language.values() {
            for call in extract_invocations(self.index, fragment, &self.config.exclusion) {
                let key = CallKey::of(&call);
                if self.queried.contains(&key) || !seen.insert(key) {
                    continue;
                }
                let open_target = self
                    .index
                    .function_ids()
                    .any(|id| may_run(self.index.function(id), &call) && !self.visited.contains(&id));
                if open_target {
                    out.push(call);
                }
            }
        }
        out
    }

    /// Asks the model to resolve `calls` and adds the bodies of newly
    /// resolved functions to the scope.
    fn expand(&mut self, calls: &[CallSite]) -> Result<Vec<FunctionId>, AgentError> {
        self.queried.extend(calls.iter().map(CallKey::of));
        let catalog = list_project_functions(self.index);
        let prompt = self
            .renderer
            .render_expansion(self.workspace, &self.criterion, calls, &catalog)?;
        let answer = self.ask(AgentKind::Expansion, prompt, EXPANSION_REMINDER, |t| {
            parse_expansion_response(t, &catalog, calls)
        })?;
        let mut added = Vec::new();
        for r in &answer.resolved {
            let Some(id) = self.index.id_of(&r.target) else {
                continue;
            };
            if self.visited.insert(id) {
                let f = self.index.function(id);
                self.scope
                    .add(CodeRegion::new(f.file.clone(), f.body_span, RegionRole::FunctionBody));
                added.push(id);
            }
        }
        self.mark_enclosed_visited();
        let resolved: Vec<Value> = answer
            .resolved
            .iter()
            .map(|r| json!([r.call.to_string(), r.target.signature()]))
            .collect();
        let calls_json: Vec<String> = calls.iter().map(|c| CallKey::of(c).to_string()).collect();
        self.annotate(json!({
            "calls": calls_json,
            "resolved": resolved,
            "new_targets": added.len(),
            "hallucinated": answer.hallucinated,
            "duplicates": answer.duplicates,
        }));
        self.check()?;
        Ok(added)
    }

    /// Functions whose whole body is visible count as visited.
    fn mark_enclosed_visited(&mut self) {
        for id in self.index.function_ids() {
            let f = self.index.function(id);
            if self.scope.encloses(&f.file, f.body_span) {
                self.visited.insert(id);
            }
        }
    }

    /// Drops the lines the model marks as irrelevant. Only lines of `slice`
    /// can be kept, and the criterion line always stays.
    pub fn run_conciseness(&mut self, slice: &Slice) -> Result<(Slice, Vec<SliceLine>), AgentError> {
        self.counters.conciseness_calls += 1;
        let prompt = self.renderer.render_conciseness(self.workspace, slice)?;
        let raw = self.ask(AgentKind::Conciseness, prompt, SLICE_REMINDER, |t| {
            parse_slice_response(t)
        })?;
        let mut own_scope = SearchScope::default();
        for at in slice.line_refs() {
            own_scope.add(CodeRegion::new(
                at.file.clone(),
                crate::workspace::Span::line(at.line),
                RegionRole::FunctionBody,
            ));
        }
        let kept = match align_text_to_slice(
            &raw,
            self.workspace,
            &own_scope,
            Some(slice),
            slice.criterion(),
        ) {
            Ok((aligned, _)) => Some(aligned),
            Err(SliceError::EmptyAlignment { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let Some(kept) = kept else {
            tracing::warn!("conciseness reply matched no slice line; keeping the slice");
            self.annotate(json!({ "removed": [], "ignored": true }));
            return Ok((slice.clone(), Vec::new()));
        };
        let mut out = slice.clone();
        let mut removed = Vec::new();
        for line in slice.lines() {
            let at = line.at();
            if !kept.contains(&at) && out.remove(&at) {
                removed.push(line.clone());
            }
        }
        let removed_json: Vec<String> = removed.iter().map(|l| l.at().to_string()).collect();
        self.annotate(json!({ "removed": removed_json, "slice_size": out.len() }));
        Ok((out, removed))
    }

    /// Asks whether anything is missing from `slice`; the slice is not changed.
    pub fn run_completeness(&mut self, slice: &Slice) -> Result<CompletenessAnswer, AgentError> {
        self.counters.completeness_calls += 1;
        let prompt = self
            .renderer
            .render_completeness(self.workspace, slice, &self.scope)?;
        let answer = self.ask(AgentKind::Completeness, prompt, COMPLETENESS_REMINDER, |t| {
            parse_completeness_response(t)
        })?;
        self.annotate(serde_json::to_value(&answer).unwrap_or(Value::Null));
        Ok(answer)
    }

    /// Adds lines covering `missing`. Lines that align outside the search
    /// scope are dropped; the result is the old slice plus accepted lines.
    pub fn run_refinement(
        &mut self,
        slice: &Slice,
        missing: &[MissingItem],
    ) -> Result<Slice, AgentError> {
        self.counters.refinement_calls += 1;
        let prompt = self
            .renderer
            .render_refinement(self.workspace, slice, &self.scope, missing)?;
        let raw = self.ask(AgentKind::Refinement, prompt, SLICE_REMINDER, |t| {
            parse_slice_response(t)
        })?;
        let (aligned, report) = align_text_to_slice(
            &raw,
            self.workspace,
            &self.scope,
            Some(slice),
            slice.criterion(),
        )?;
        self.hallucinated.extend(report.hallucinated.iter().cloned());
        let mut out = slice.clone();
        let mut added = Vec::new();
        let mut dropped = Vec::new();
        for line in aligned.lines() {
            let at = line.at();
            if slice.contains(&at) {
                continue;
            }
            if self.scope.contains(&at) {
                out.insert(self.workspace, &at);
                added.push(at.to_string());
            } else {
                tracing::info!(line = %at, "refinement line outside the search scope dropped");
                dropped.push(at.to_string());
            }
        }
        self.annotate(json!({
            "added": added,
            "dropped_outside_scope": dropped,
            "hallucinated": report.hallucinated.len(),
            "slice_size": out.len(),
        }));
        Ok(out)
    }

    /// One model exchange with a single format-reminder retry on parse
    /// failure. Both attempts are recorded.
    fn ask<T>(
        &mut self,
        agent: AgentKind,
        prompt: String,
        reminder: &str,
        parse: impl Fn(&str) -> Result<T, ProtocolError>,
    ) -> Result<T, AgentError> {
        let first = self.client.chat(vec![Message::user(prompt.clone())])?;
        let parsed = parse(&first.text);
        self.transcript.push(AgentStep {
            agent,
            attempt: 1,
            prompt: prompt.clone(),
            response: first.text.clone(),
            parsed: Value::Null,
            usage: first.usage,
        });
        let err = match parsed {
            Ok(v) => return Ok(v),
            Err(e @ ProtocolError::Parse(_)) => e,
            Err(e) => return Err(e.into()),
        };
        tracing::warn!(agent = ?agent, error = %err, "retrying with a format reminder");
        let messages = vec![
            Message::user(prompt.clone()),
            Message::assistant(first.text),
            Message::user(reminder),
        ];
        let second = self.client.chat(messages)?;
        let parsed = parse(&second.text);
        self.transcript.push(AgentStep {
            agent,
            attempt: 2,
            prompt: reminder.to_string(),
            response: second.text.clone(),
            parsed: Value::Null,
            usage: second.usage,
        });
        Ok(parsed?)
    }

    fn annotate(&mut self, summary: Value) {
        if let Some(step) = self.transcript.last_mut() {
            step.parsed = summary;
        }
    }

    /// Slice and loop invariants, checked after every agent step.
    fn check(&self) -> Result<(), AgentError> {
        self.current
            .validate(self.workspace)
            .map_err(|e| AgentError::Invariant(format!("slice: {e}")))?;
        if self.counters.synthesis_passes > self.config.max_expansion_rounds + 1 {
            return Err(AgentError::Invariant("too many synthesis passes".into()));
        }
        if self.counters.verify_refine_iterations > self.config.max_verify_refine {
            return Err(AgentError::Invariant("too many verification rounds".into()));
        }
        let crit: LineRef = self.criterion.line_ref();
        if !self.current.contains(&crit) {
            return Err(AgentError::Invariant("criterion line left the slice".into()));
        }
        Ok(())
    }
}

/// Whether `call` could execute `f` by name: a same-named function, or the
/// `__init__` of a Python class instantiated by name.
fn may_run(f: &FunctionRecord, call: &CallSite) -> bool {
    if f.name == call.callee_name {
        return true;
    }
    f.name == "__init__"
        && f.qualified_name
            .strip_suffix(".__init__")
            .is_some_and(|owner| owner.rsplit('.').next() == Some(call.callee_name.as_str()))
}
