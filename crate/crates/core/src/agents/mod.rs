//! The synthesis, verification and refinement agents and the control loop
//! that runs them.

mod session;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use session::{run_pipeline, PipelineOutcome, SliceSession};

use crate::llm::{LlmError, ModelSettings, Usage};
use crate::protocol::{ProtocolError, DEFAULT_CHAR_BUDGET};
use crate::slice::{Slice, SliceError};
use crate::workspace::{ExclusionPolicy, WorkspaceError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error("session invariant violated: {0}")]
    Invariant(String),
}

/// A failed pipeline run, with whatever was valid when it stopped.
#[derive(Debug, Error)]
#[error("slicing pipeline failed: {source}")]
pub struct PipelineError {
    #[source]
    pub source: AgentError,
    pub last_slice: Option<Slice>,
    pub transcript: Vec<AgentStep>,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub max_verify_refine: usize,
    pub max_expansion_rounds: usize,
    pub model: ModelSettings,
    /// Cap on a rendered synthesis prompt, in characters.
    pub char_budget: usize,
    pub exclusion: ExclusionPolicy,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_verify_refine: 5,
            max_expansion_rounds: 10,
            model: ModelSettings::default(),
            char_budget: DEFAULT_CHAR_BUDGET,
            exclusion: ExclusionPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Synthesis,
    Expansion,
    Conciseness,
    Completeness,
    Refinement,
}

/// One model call made by an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub agent: AgentKind,
    /// 1 for the first try, 2 for the format-reminder retry.
    pub attempt: u32,
    pub prompt: String,
    pub response: String,
    /// What was taken from the response; `null` when it did not parse.
    pub parsed: serde_json::Value,
    pub usage: Usage,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub synthesis_passes: usize,
    pub expansion_rounds: usize,
    pub verify_refine_iterations: usize,
    pub conciseness_calls: usize,
    pub completeness_calls: usize,
    pub refinement_calls: usize,
}

/// Writes a transcript as JSONL, one step per line.
pub fn write_transcript(steps: &[AgentStep], out: &mut impl Write) -> std::io::Result<()> {
    for step in steps {
        serde_json::to_writer(&mut *out, step)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
