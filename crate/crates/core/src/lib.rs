//! Static backward slicing of Java and Python workspaces driven by a
//! language model, with syntax-level tooling, record/replay model access and
//! an evaluation harness.

pub mod agents;
pub mod cli;
pub mod eval;
pub mod llm;
pub mod protocol;
pub mod slice;
pub mod workspace;
