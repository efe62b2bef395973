//! Tool manifests, semantic tool filtering, and deterministic tool behaviors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::embedding::{cosine_similarity, EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::graph::natural_cmp;

/// Default number of tools kept per task.
pub const DEFAULT_TOOL_K: usize = 5;
/// Threshold above which two names count as duplicates.
pub const DUPLICATE_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("cannot parse tool manifest {path}: {message}")]
    ManifestParse { path: String, message: String },
    #[error("duplicate tool name {0}")]
    DuplicateTool(String),
    #[error("bad behavior for tool {tool}: {reason}")]
    BadBehaviorSpec { tool: String, reason: String },
    #[error("unknown tool {0}")]
    UnknownTool(String),
    #[error("tool {tool} is missing required argument {param}")]
    MissingArgument { tool: String, param: String },
    #[error("tool {tool} has no table entry for key {key:?}")]
    TableKey { tool: String, key: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub semantic_type: String,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablePayload {
    pub table: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case", deny_unknown_fields)]
pub enum BehaviorSpec {
    FixedOutput(String),
    /// Text with `{param}` slots.
    Template(String),
    /// Lookup keyed on the first declared parameter.
    TableLookup(TablePayload),
}

/// One manifest entry, as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolDeclaration {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    pub behavior: BehaviorSpec,
}

fn slot_regex() -> &'static Regex {
    static SLOT: OnceLock<Regex> = OnceLock::new();
    SLOT.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex"))
}

impl ToolDeclaration {
    pub fn validate(&self) -> Result<(), ToolError> {
        let bad = |reason: String| ToolError::BadBehaviorSpec {
            tool: self.name.clone(),
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(bad("tool name is empty".into()));
        }
        if self.description.trim().is_empty() {
            return Err(bad("description is empty".into()));
        }
        let mut names = BTreeSet::new();
        for p in &self.params {
            if !names.insert(p.name.as_str()) {
                return Err(bad(format!("parameter {} declared twice", p.name)));
            }
        }
        match &self.behavior {
            BehaviorSpec::FixedOutput(_) => {}
            BehaviorSpec::Template(text) => {
                for slot in slot_regex().captures_iter(text) {
                    if !names.contains(&slot[1]) {
                        return Err(bad(format!("template slot {{{}}} is not a declared parameter", &slot[1])));
                    }
                }
            }
            BehaviorSpec::TableLookup(payload) => {
                if self.params.is_empty() {
                    return Err(bad("table lookup needs a key parameter".into()));
                }
                if payload.table.is_empty() {
                    return Err(bad("lookup table is empty".into()));
                }
                if payload.table.keys().any(|k| k.is_empty()) {
                    return Err(bad("lookup table has an empty key".into()));
                }
            }
        }
        Ok(())
    }

    /// `name(param: type, opt?: type)`, as shown to the model.
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| {
                let marker = if p.required { "" } else { "?" };
                format!("{}{}: {}", p.name, marker, p.semantic_type)
            })
            .collect();
        format!("{}({})", self.name, params.join(", "))
    }

    fn resolve_argument(&self, param: &ParamSpec, arguments: &BTreeMap<String, Value>) -> Result<Option<String>, ToolError> {
        match arguments.get(&param.name) {
            Some(v) => Ok(Some(value_text(v))),
            None => match (&param.default, param.required) {
                (Some(d), _) => Ok(Some(d.clone())),
                (None, true) => Err(ToolError::MissingArgument {
                    tool: self.name.clone(),
                    param: param.name.clone(),
                }),
                (None, false) => Ok(None),
            },
        }
    }

    /// Computes the tool output for `arguments`. Pure.
    pub fn run(&self, arguments: &BTreeMap<String, Value>) -> Result<String, ToolError> {
        let mut resolved = BTreeMap::new();
        for p in &self.params {
            if let Some(v) = self.resolve_argument(p, arguments)? {
                resolved.insert(p.name.as_str(), v);
            }
        }
        match &self.behavior {
            BehaviorSpec::FixedOutput(text) => Ok(text.clone()),
            BehaviorSpec::Template(text) => Ok(slot_regex()
                .replace_all(text, |c: &regex::Captures| {
                    resolved.get(&c[1]).cloned().unwrap_or_default()
                })
                .into_owned()),
            BehaviorSpec::TableLookup(payload) => {
                let key = resolved.get(self.params[0].name.as_str()).cloned().unwrap_or_default();
                payload
                    .table
                    .get(&key)
                    .or(payload.default.as_ref())
                    .cloned()
                    .ok_or(ToolError::TableKey {
                        tool: self.name.clone(),
                        key,
                    })
            }
        }
    }
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct ToolDescriptor {
    pub declaration: ToolDeclaration,
    pub embedding: EmbeddingVector,
}

impl ToolDescriptor {
    pub fn name(&self) -> &str {
        &self.declaration.name
    }
}

/// A recorded tool invocation. Timestamps live in the execution timing
/// section, not here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_name: String,
    pub arguments: BTreeMap<String, Value>,
    pub output: String,
}

#[derive(Debug, Clone)]
pub struct ScoredTool<'a> {
    pub tool: &'a ToolDescriptor,
    pub similarity: f64,
}

type LatencyFn = dyn Fn(&str) -> Duration + Send + Sync;

/// Immutable set of tools with embedded descriptions.
#[derive(Clone)]
pub struct ToolCatalog {
    tools: BTreeMap<String, ToolDescriptor>,
    provider: Arc<dyn EmbeddingProvider>,
    latency: Option<Arc<LatencyFn>>,
}

impl fmt::Debug for ToolCatalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolCatalog")
            .field("tools", &self.tools.keys().collect::<Vec<_>>())
            .field("provider", &self.provider.model_id())
            .finish()
    }
}

pub fn parse_manifest(text: &str, origin: &str) -> Result<Vec<ToolDeclaration>, ToolError> {
    serde_json::from_str(text).map_err(|e| ToolError::ManifestParse {
        path: origin.to_string(),
        message: e.to_string(),
    })
}

pub fn manifest_to_json(decls: &[ToolDeclaration]) -> String {
    let mut s = serde_json::to_string_pretty(decls).expect("manifest serialization is infallible");
    s.push('\n');
    s
}

impl ToolCatalog {
    pub fn from_declarations(
        decls: Vec<ToolDeclaration>,
        provider: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, ToolError> {
        let mut seen = BTreeSet::new();
        for d in &decls {
            if !seen.insert(d.name.clone()) {
                return Err(ToolError::DuplicateTool(d.name.clone()));
            }
            d.validate()?;
        }
        let texts: Vec<&str> = decls.iter().map(|d| d.description.as_str()).collect();
        let embeddings = if texts.is_empty() { Vec::new() } else { provider.embed(&texts)? };
        let tools = decls
            .into_iter()
            .zip(embeddings)
            .map(|(declaration, embedding)| {
                (declaration.name.clone(), ToolDescriptor { declaration, embedding })
            })
            .collect();
        Ok(Self {
            tools,
            provider,
            latency: None,
        })
    }

    pub fn load_manifest(path: &Path, provider: Arc<dyn EmbeddingProvider>) -> Result<Self, ToolError> {
        let text = std::fs::read_to_string(path).map_err(|source| ToolError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let decls = parse_manifest(&text, &path.display().to_string())?;
        Self::from_declarations(decls, provider)
    }

    /// Adds an artificial delay to every invocation. Outputs are unchanged.
    pub fn with_latency(mut self, latency: impl Fn(&str) -> Duration + Send + Sync + 'static) -> Self {
        self.latency = Some(Arc::new(latency));
        self
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ToolDescriptor> {
        self.tools.get(name)
    }

    pub fn tools(&self) -> impl Iterator<Item = &ToolDescriptor> {
        self.tools.values()
    }

    pub fn provider(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.provider
    }

    pub fn declarations(&self) -> Vec<ToolDeclaration> {
        self.tools.values().map(|t| t.declaration.clone()).collect()
    }

    /// Tools whose description is at least `min_sim` similar to the task,
    /// best first (ties by name), at most `k`.
    pub fn filter_tools_by_task(&self, task_label: &str, k: usize, min_sim: f64) -> Result<Vec<ScoredTool<'_>>, ToolError> {
        if k == 0 || self.tools.is_empty() {
            return Ok(Vec::new());
        }
        let query = self.provider.embed_one(task_label)?;
        let mut scored = Vec::with_capacity(self.tools.len());
        for tool in self.tools.values() {
            let similarity = cosine_similarity(&query, &tool.embedding)?;
            if similarity >= min_sim {
                scored.push(ScoredTool { tool, similarity });
            }
        }
        scored.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| natural_cmp(a.tool.name(), b.tool.name()))
        });
        scored.truncate(k);
        Ok(scored)
    }

    /// Per-task filtering over a batch; the union keeps each tool's best score.
    pub fn filter_tools_by_tasks(&self, task_labels: &[&str], k: usize, min_sim: f64) -> Result<Vec<ScoredTool<'_>>, ToolError> {
        let mut best: BTreeMap<&str, ScoredTool<'_>> = BTreeMap::new();
        for label in task_labels {
            for hit in self.filter_tools_by_task(label, k, min_sim)? {
                match best.get(hit.tool.name()) {
                    Some(prev) if prev.similarity >= hit.similarity => {}
                    _ => {
                        best.insert(hit.tool.name(), hit);
                    }
                }
            }
        }
        let mut out: Vec<_> = best.into_values().collect();
        out.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| natural_cmp(a.tool.name(), b.tool.name()))
        });
        Ok(out)
    }

    pub fn invoke(&self, tool_name: &str, arguments: BTreeMap<String, Value>) -> Result<ToolCall, ToolError> {
        let tool = self
            .tools
            .get(tool_name)
            .ok_or_else(|| ToolError::UnknownTool(tool_name.to_string()))?;
        let output = tool.declaration.run(&arguments)?;
        if let Some(latency) = &self.latency {
            std::thread::sleep(latency(tool_name));
        }
        Ok(ToolCall {
            tool_name: tool_name.to_string(),
            arguments,
            output,
        })
    }
}

/// Keeps `names[i]` unless some earlier name (kept or not) is more than
/// `threshold` similar to it.
pub fn remove_semantic_duplicates(
    names: &[String],
    provider: &dyn EmbeddingProvider,
    threshold: f64,
) -> Result<Vec<String>, EmbeddingError> {
    let texts: Vec<&str> = names.iter().map(String::as_str).collect();
    let embeddings = provider.embed(&texts)?;
    let mut keep = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let mut duplicate = false;
        for earlier in &embeddings[..i] {
            if cosine_similarity(&embeddings[i], earlier)? > threshold {
                duplicate = true;
                break;
            }
        }
        if !duplicate {
            keep.push(name.clone());
        }
    }
    Ok(keep)
}
