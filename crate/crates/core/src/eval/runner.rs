use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BenchmarkInstance;
use crate::agents::{run_pipeline, AgentStep, Counters, SessionConfig};
use crate::llm::ChatBackend;
use crate::protocol::PromptRenderer;
use crate::slice::SliceDocument;
use crate::workspace::build_index;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum InstanceResult {
    Ok {
        complete: bool,
    },
    Error {
        message: String,
    },
}

/// What a pipeline run produced for one benchmark instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub id: String,
    pub result: InstanceResult,
    /// The final slice, or the last valid one when the run failed.
    pub slice: Option<SliceDocument>,
    pub transcript: Vec<AgentStep>,
    pub counters: Counters,
    pub tokens_used: u64,
    pub elapsed_ms: u64,
}

/// Runs the pipeline on every instance with at most `workers` sessions at
/// once. Outcomes come back in instance order whatever the scheduling.
pub fn run_benchmark(
    instances: &[BenchmarkInstance],
    backend: Arc<dyn ChatBackend>,
    config: &SessionConfig,
    renderer: &PromptRenderer,
    workers: usize,
) -> Vec<InstanceOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        instances
            .par_iter()
            .map(|inst| run_one(inst, backend.clone(), config, renderer))
            .collect()
    })
}

fn run_one(
    instance: &BenchmarkInstance,
    backend: Arc<dyn ChatBackend>,
    config: &SessionConfig,
    renderer: &PromptRenderer,
) -> InstanceOutcome {
    let started = Instant::now();
    let failed = |message: String| InstanceOutcome {
        id: instance.id.clone(),
        result: InstanceResult::Error { message },
        slice: None,
        transcript: Vec::new(),
        counters: Counters::default(),
        tokens_used: 0,
        elapsed_ms: started.elapsed().as_millis() as u64,
    };
    let workspace = match instance.workspace() {
        Ok(ws) => ws,
        Err(e) => return failed(e.to_string()),
    };
    let criterion = match instance.slicing_criterion(&workspace) {
        Ok(c) => c,
        Err(e) => return failed(e.to_string()),
    };
    let index = build_index(&workspace);
    match run_pipeline(
        &workspace,
        &index,
        criterion,
        config.clone(),
        renderer.clone(),
        backend,
    ) {
        Ok(out) => InstanceOutcome {
            id: instance.id.clone(),
            result: InstanceResult::Ok {
                complete: out.complete,
            },
            slice: Some(out.slice.to_document(&out.hallucinated)),
            transcript: out.transcript,
            counters: out.counters,
            tokens_used: out.tokens_used,
            elapsed_ms: started.elapsed().as_millis() as u64,
        },
        Err(e) => {
            tracing::warn!(instance = %instance.id, error = %e.source, "pipeline failed");
            InstanceOutcome {
                id: instance.id.clone(),
                result: InstanceResult::Error {
                    message: e.source.to_string(),
                },
                slice: e.last_slice.as_ref().map(|s| s.to_document(&[])),
                transcript: e.transcript,
                counters: e.counters,
                tokens_used: 0,
                elapsed_ms: started.elapsed().as_millis() as u64,
            }
        }
    }
}
