//! Query decomposition: prompt the model for a task graph, validate what comes
//! back, and re-prompt with the validation error when it is unusable.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TaskGraph;

pub const DEFAULT_MAX_REPAIRS: usize = 2;
pub const DEFAULT_BACKEND_TIMEOUT_SECS: u64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend timed out after {0} s")]
    Timeout(u64),
    #[error("no scripted rule matched the prompt and no fallback is configured")]
    NoMatch,
    #[error("backend configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrchestrationError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("no valid task graph after {attempts} attempts; last error: {last_error}")]
    RepairsExhausted { attempts: usize, last_error: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A text-completion model. Implementations must be callable from several
/// threads at once.
pub trait ModelBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;

    fn backend_id(&self) -> &str;
}

impl<T: ModelBackend + ?Sized> ModelBackend for Arc<T> {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }

    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionStrategy {
    Coarse,
    Fine,
    #[serde(alias = "critical-path")]
    CriticalPath,
    #[default]
    Default,
}

impl DecompositionStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Coarse => "coarse",
            Self::Fine => "fine",
            Self::CriticalPath => "critical-path",
            Self::Default => "default",
        }
    }

    fn clause(self) -> Option<&'static str> {
        match self {
            Self::Coarse => Some(
                "Decomposition strategy: coarse-grained. Produce a small number of large, \
                 self-contained tasks; merge steps that would otherwise need to exchange \
                 intermediate results.",
            ),
            Self::Fine => Some(
                "Decomposition strategy: fine-grained. Produce many small, granular tasks so \
                 that independent work can run in parallel; split any task that combines \
                 unrelated steps.",
            ),
            Self::CriticalPath => Some(
                "Decomposition strategy: critical path. Identify the longest chain of dependent \
                 tasks and shorten it: only add an edge when a task truly needs the result of \
                 another, and move independent work off that chain.",
            ),
            Self::Default => None,
        }
    }
}

impl fmt::Display for DecompositionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecompositionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coarse" => Ok(Self::Coarse),
            "fine" => Ok(Self::Fine),
            "critical-path" | "critical_path" => Ok(Self::CriticalPath),
            "default" => Ok(Self::Default),
            other => Err(format!("unknown strategy {other:?} (expected coarse, fine, critical-path or default)")),
        }
    }
}

const TASK_GRAPH_TEMPLATE: &str = r#"You are responsible for generating a task graph
from the following user query. Decompose the query
into individual tasks and create a Directed Acyclic Graph (DAG)
with nodes as tasks and edges as dependencies.
Ensure there are no cyclic dependencies.

User Query: {user_query}

Respond with the task graph in the following JSON format:
{
  "nodes": [
    {"id": 1, "label": "Task description 1"},
    {"id": 2, "label": "Task description 2"}
  ],
  "edges": [
    {"from": 1, "to": 2}
  ]
}
"#;

/// Decomposition prompt for `query`, plus the strategy clause if any.
///
/// Panics if `query` is blank.
pub fn build_task_graph_prompt(query: &str, strategy: DecompositionStrategy) -> String {
    assert!(!query.trim().is_empty(), "query must not be empty");
    let mut prompt = TASK_GRAPH_TEMPLATE.replace("{user_query}", query);
    if let Some(clause) = strategy.clause() {
        prompt.push('\n');
        prompt.push_str(clause);
        prompt.push('\n');
    }
    prompt
}

fn repair_prompt(base: &str, previous: &str, error: &str) -> String {
    format!(
        "{base}\nYour previous response could not be used.\nValidation error: {error}\n\
         Previous response:\n{previous}\n\nRespond again with a corrected task graph in the same JSON format.\n"
    )
}

/// First balanced top-level `{...}` in `text`, skipping braces inside JSON
/// strings.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + offset + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Parses the first JSON object in a model response as a task graph.
pub fn parse_graph_response(response: &str) -> Result<TaskGraph, String> {
    let doc = extract_json_object(response).ok_or_else(|| "response contains no JSON object".to_string())?;
    TaskGraph::from_json(doc).map_err(|e| e.to_string())
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub graph: TaskGraph,
    /// Backend calls made, including the successful one.
    pub attempts: usize,
}

/// Turns queries into validated task graphs. Holds no per-query state.
pub struct Orchestrator<B: ModelBackend> {
    backend: B,
    max_repairs: usize,
}

impl<B: ModelBackend> Orchestrator<B> {
    pub fn new(backend: B) -> Self {
        Self {
            backend,
            max_repairs: DEFAULT_MAX_REPAIRS,
        }
    }

    pub fn with_max_repairs(mut self, max_repairs: usize) -> Self {
        self.max_repairs = max_repairs;
        self
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    /// At most `max_repairs + 1` backend calls.
    pub fn produce_task_graph(&self, query: &str, strategy: DecompositionStrategy) -> Result<Decomposition, OrchestrationError> {
        if query.trim().is_empty() {
            return Err(OrchestrationError::EmptyQuery);
        }
        let base = build_task_graph_prompt(query, strategy);
        let mut prompt = base.clone();
        let mut last_error = String::new();
        for attempt in 1..=self.max_repairs + 1 {
            let response = self.backend.complete(&prompt)?;
            match parse_graph_response(&response) {
                Ok(graph) => return Ok(Decomposition { graph, attempts: attempt }),
                Err(error) => {
                    prompt = repair_prompt(&base, &response, &error);
                    last_error = error;
                }
            }
        }
        Err(OrchestrationError::RepairsExhausted {
            attempts: self.max_repairs + 1,
            last_error,
        })
    }
}

/// Adapts a closure into a backend.
pub struct FnBackend<F> {
    id: String,
    respond: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&str) -> Result<String, BackendError> + Send + Sync,
{
    pub fn new(id: impl Into<String>, respond: F) -> Self {
        Self {
            id: id.into(),
            respond,
        }
    }
}

impl<F> ModelBackend for FnBackend<F>
where
    F: Fn(&str) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (self.respond)(prompt)
    }

    fn backend_id(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Clone)]
pub enum PromptMatcher {
    Contains(String),
    Pattern(Regex),
}

impl PromptMatcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Self::Contains(needle) => prompt.contains(needle.as_str()),
            Self::Pattern(re) => re.is_match(prompt),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptRule {
    pub matcher: PromptMatcher,
    pub response: String,
}

/// Offline backend: the first rule whose matcher accepts the prompt answers.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    id: String,
    rules: Vec<ScriptRule>,
    fallback: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    #[serde(default)]
    backend_id: Option<String>,
    #[serde(default)]
    rules: Vec<RuleEntry>,
    #[serde(default)]
    fallback: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RuleEntry {
    #[serde(default)]
    contains: Option<String>,
    #[serde(default)]
    pattern: Option<String>,
    response: String,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self {
            id: "scripted".into(),
            rules: Vec::new(),
            fallback: None,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn when_contains(mut self, needle: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(ScriptRule {
            matcher: PromptMatcher::Contains(needle.into()),
            response: response.into(),
        });
        self
    }

    pub fn when_matches(mut self, pattern: &str, response: impl Into<String>) -> Result<Self, BackendError> {
        let re = Regex::new(pattern).map_err(|e| BackendError::Config(e.to_string()))?;
        self.rules.push(ScriptRule {
            matcher: PromptMatcher::Pattern(re),
            response: response.into(),
        });
        Ok(self)
    }

    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }

    /// Rules file: `{"backend_id"?, "rules": [{"contains"|"pattern", "response"}], "fallback"?}`.
    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let file: RuleFile = serde_json::from_str(text).map_err(|e| BackendError::Config(e.to_string()))?;
        let mut backend = Self::new();
        if let Some(id) = file.backend_id {
            backend.id = id;
        }
        for entry in file.rules {
            backend = match (entry.contains, entry.pattern) {
                (Some(needle), None) => backend.when_contains(needle, entry.response),
                (None, Some(pattern)) => backend.when_matches(&pattern, entry.response)?,
                _ => {
                    return Err(BackendError::Config(
                        "each rule needs exactly one of `contains` or `pattern`".into(),
                    ))
                }
            };
        }
        backend.fallback = file.fallback;
        Ok(backend)
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.rules
            .iter()
            .find(|r| r.matcher.matches(prompt))
            .map(|r| r.response.clone())
            .or_else(|| self.fallback.clone())
            .ok_or(BackendError::NoMatch)
    }

    fn backend_id(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Rules file for the scripted backend.
    pub rules: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible API, e.g. `http://localhost:8000/v1`.
    pub base_url: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Scripted,
            rules: None,
            base_url: None,
            token_env: None,
            model: None,
            temperature: 0.0,
            timeout_secs: DEFAULT_BACKEND_TIMEOUT_SECS,
        }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Arc<dyn ModelBackend>, BackendError> {
        match self.kind {
            BackendKind::Scripted => {
                let path = self
                    .rules
                    .as_ref()
                    .ok_or_else(|| BackendError::Config("scripted backend needs a rules file".into()))?;
                Ok(Arc::new(ScriptedBackend::from_file(path)?))
            }
            #[cfg(feature = "http")]
            BackendKind::Http => Ok(Arc::new(crate::http::HttpBackend::from_config(self)?)),
            #[cfg(not(feature = "http"))]
            BackendKind::Http => Err(BackendError::Config("http backend requires the `http` feature".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    const CHAIN: &str = r#"{"nodes":[{"id":1,"label":"find flights"},{"id":2,"label":"book hotel"},{"id":3,"label":"write itinerary"}],
        "edges":[{"from":1,"to":2},{"from":2,"to":3}]}"#;
    const CYCLIC: &str = r#"{"nodes":[{"id":1,"label":"a"},{"id":2,"label":"b"}],"edges":[{"from":1,"to":2},{"from":2,"to":1}]}"#;

    struct Counting<B> {
        inner: B,
        calls: AtomicUsize,
    }

    impl<B: ModelBackend> ModelBackend for Counting<B> {
        fn complete(&self, prompt: &str) -> Result<String, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.complete(prompt)
        }

        fn backend_id(&self) -> &str {
            "counting"
        }
    }

    fn counting<B>(inner: B) -> Arc<Counting<B>> {
        Arc::new(Counting {
            inner,
            calls: AtomicUsize::new(0),
        })
    }

    #[test]
    fn prompt_contains_query_and_format() {
        let p = build_task_graph_prompt("plan a trip", DecompositionStrategy::Default);
        assert!(p.contains("User Query: plan a trip"));
        assert!(p.contains(r#""edges": ["#));
        assert!(!p.contains("Decomposition strategy"));
        let coarse = build_task_graph_prompt("plan a trip", DecompositionStrategy::Coarse);
        assert!(coarse.starts_with(&p));
        assert!(coarse.contains("small number of large"));
        assert!(build_task_graph_prompt("q", DecompositionStrategy::Fine).contains("many small"));
        assert!(build_task_graph_prompt("q", DecompositionStrategy::CriticalPath).contains("longest chain"));
    }

    #[test]
    #[should_panic(expected = "query must not be empty")]
    fn prompt_rejects_empty_query() {
        build_task_graph_prompt("", DecompositionStrategy::Coarse);
    }

    #[test]
    fn extracts_first_balanced_object() {
        let text = r#"Sure! Here you go: {"a": "}{", "b": {"c": 1}} and {"ignored": true}"#;
        assert_eq!(extract_json_object(text), Some(r#"{"a": "}{", "b": {"c": 1}}"#));
        assert_eq!(extract_json_object(r#"{"a": "\"}"}"#), Some(r#"{"a": "\"}"}"#));
        assert_eq!(extract_json_object("no json"), None);
        assert_eq!(extract_json_object("{ unterminated"), None);
    }

    #[test]
    fn scripted_round_trip() {
        let backend = counting(ScriptedBackend::new().with_fallback(format!("Here is the graph:\n{CHAIN}\nDone.")));
        let out = Orchestrator::new(backend.clone())
            .produce_task_graph("plan a trip", DecompositionStrategy::Default)
            .unwrap();
        assert_eq!(out.graph.node_count(), 3);
        assert_eq!(out.attempts, 1);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn repairs_after_cycle() {
        let backend = ScriptedBackend::new()
            .when_contains("Validation error: graph contains a cycle", CHAIN)
            .with_fallback(CYCLIC);
        let out = Orchestrator::new(backend)
            .with_max_repairs(1)
            .produce_task_graph("plan a trip", DecompositionStrategy::Default)
            .unwrap();
        assert_eq!(out.attempts, 2);
        assert_eq!(out.graph.node("3").unwrap().label, "write itinerary");
    }

    #[test]
    fn gives_up_after_bounded_attempts() {
        let backend = counting(ScriptedBackend::new().with_fallback(CYCLIC));
        let err = Orchestrator::new(backend.clone())
            .with_max_repairs(2)
            .produce_task_graph("plan a trip", DecompositionStrategy::Fine)
            .unwrap_err();
        assert!(matches!(err, OrchestrationError::RepairsExhausted { attempts: 3, ref last_error } if last_error.contains("cycle")));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn backend_errors_propagate() {
        let err = Orchestrator::new(ScriptedBackend::new())
            .produce_task_graph("q", DecompositionStrategy::Default)
            .unwrap_err();
        assert_eq!(err, OrchestrationError::Backend(BackendError::NoMatch));
        let err = Orchestrator::new(ScriptedBackend::new())
            .produce_task_graph("   ", DecompositionStrategy::Default)
            .unwrap_err();
        assert_eq!(err, OrchestrationError::EmptyQuery);
    }

    #[test]
    fn rules_file_first_match_wins() {
        let backend = ScriptedBackend::from_json(
            r#"{"rules": [
                {"contains": "alpha", "response": "first"},
                {"pattern": "al.ha|beta", "response": "second"}
            ], "fallback": "none"}"#,
        )
        .unwrap();
        assert_eq!(backend.complete("alpha").unwrap(), "first");
        assert_eq!(backend.complete("beta").unwrap(), "second");
        assert_eq!(backend.complete("gamma").unwrap(), "none");
        assert!(ScriptedBackend::from_json(r#"{"rules": [{"response": "x"}]}"#).is_err());
        assert!(ScriptedBackend::from_json(r#"{"rulez": []}"#).is_err());
    }

    #[test]
    fn strategy_parsing() {
        for s in ["coarse", "fine", "critical-path", "default"] {
            assert_eq!(s.parse::<DecompositionStrategy>().unwrap().as_str(), s);
        }
        assert!("medium".parse::<DecompositionStrategy>().is_err());
    }

    #[test]
    fn scripted_orchestration_is_deterministic() {
        let backend = ScriptedBackend::new().with_fallback(CHAIN);
        let orch = Orchestrator::new(backend);
        let a = orch.produce_task_graph("q", DecompositionStrategy::Default).unwrap().graph.to_json_pretty();
        let b = orch.produce_task_graph("q", DecompositionStrategy::Default).unwrap().graph.to_json_pretty();
        assert_eq!(a, b);
    }
}
