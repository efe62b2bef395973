//! Task-graph orchestration and evaluation for LLM agent pipelines.
//!
//! * [`graph`]: the task DAG, orderings, dependency closure, critical path.
//! * [`embedding`]: embedding providers and cosine similarity.
//! * [`tools`]: tool manifests, semantic tool filtering, deterministic behaviors.
//! * [`orchestration`]: query decomposition through a model backend.
//! * [`execution`]: sequential and dependency-aware parallel execution.
//! * [`evaluation`]: graph, tool and answer metrics plus correlation analysis.
//! * [`dataset`]: scenario builders and the on-disk scenario format.

pub mod dataset;
pub mod embedding;
pub mod evaluation;
pub mod execution;
pub mod graph;
#[cfg(feature = "http")]
pub mod http;
pub mod orchestration;
pub mod tools;

pub use embedding::{cosine_similarity, EmbeddingProvider, EmbeddingVector, HashEmbedder};
pub use execution::{ExecutionMode, ExecutionOptions, ExecutionTrace, Executor};
pub use graph::{GraphError, TaskEdge, TaskGraph, TaskNode};
pub use orchestration::{DecompositionStrategy, ModelBackend, Orchestrator, ScriptedBackend};
pub use tools::{ToolCatalog, ToolDeclaration};
