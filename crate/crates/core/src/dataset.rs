//! Evaluation scenarios: graph builders, tool manifest synthesis and the
//! directory-per-scenario format.
//!
//! ```text
//! <root>/<name>/metadata.json        {"name", "category", "complexity"}
//!              /graph.json           wrapped task_graph document
//!              /tools.json           tool manifest
//!              /expected_calls.json  ordered list of tool names
//!              /gold_response.txt
//!              /query.txt            optional
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{fnv1a, EmbeddingError, EmbeddingProvider};
use crate::graph::{GraphError, TaskEdge, TaskGraph, TaskNode};
use crate::orchestration::{extract_json_object, ModelBackend};
use crate::tools::{manifest_to_json, parse_manifest, remove_semantic_duplicates, BehaviorSpec, ParamSpec, ToolDeclaration, DUPLICATE_THRESHOLD};

pub const METADATA_FILE: &str = "metadata.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const TOOLS_FILE: &str = "tools.json";
pub const EXPECTED_CALLS_FILE: &str = "expected_calls.json";
pub const GOLD_RESPONSE_FILE: &str = "gold_response.txt";
pub const QUERY_FILE: &str = "query.txt";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario {name}: {message}")]
    Invalid { name: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Sequential,
    Parallel,
    Async,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Sequential => "sequential",
            Category::Parallel => "parallel",
            Category::Async => "async",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(Category::Sequential),
            "parallel" => Ok(Category::Parallel),
            "async" => Ok(Category::Async),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMetadata {
    pub name: String,
    pub category: Category,
    pub complexity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRecord {
    pub name: String,
    pub category: Category,
    pub complexity: usize,
    pub expected_graph: TaskGraph,
    pub tool_manifest: Vec<ToolDeclaration>,
    pub expected_tool_calls: Vec<String>,
    pub gold_response: String,
    pub query: Option<String>,
}

pub fn valid_scenario_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl ScenarioRecord {
    pub fn metadata(&self) -> ScenarioMetadata {
        ScenarioMetadata {
            name: self.name.clone(),
            category: self.category,
            complexity: self.complexity,
        }
    }

    /// Every broken invariant, as messages.
    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !valid_scenario_name(&self.name) {
            problems.push(format!("scenario name {:?} is not a valid directory name", self.name));
        }
        let actual = self.expected_graph.complexity_score();
        if self.complexity != actual {
            problems.push(format!(
                "complexity is {} but the graph has complexity {actual}",
                self.complexity
            ));
        }
        let names: BTreeSet<&str> = self.tool_manifest.iter().map(|t| t.name.as_str()).collect();
        for call in &self.expected_tool_calls {
            if !names.contains(call.as_str()) {
                problems.push(format!("expected call {call:?} names no manifest tool"));
            }
        }
        if self.category == Category::Parallel && self.expected_graph.edge_count() > 0 {
            problems.push(format!(
                "parallel scenario has {} edges",
                self.expected_graph.edge_count()
            ));
        }
        if self.gold_response.trim().is_empty() {
            problems.push("gold response is empty".into());
        }
        problems
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(DatasetError::Invalid {
                name: self.name.clone(),
                message: problems.join("; "),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Builders

/// Drops nodes labelled exactly "Start" or "End", renumbers the rest
/// `task_1..` in order, and keeps edges whose endpoints both survive. Edge
/// endpoints are 1-based positions into `node_descriptions`.
pub fn create_seq_task_graph(edges: &[(String, String)], node_descriptions: &[String]) -> Result<TaskGraph, GraphError> {
    let mut task_map = std::collections::HashMap::new();
    let mut nodes = Vec::new();
    for (i, description) in node_descriptions.iter().enumerate() {
        if description != "Start" && description != "End" {
            let id = format!("task_{}", nodes.len() + 1);
            task_map.insert((i + 1).to_string(), id.clone());
            nodes.push(TaskNode::new(id, description.clone()));
        }
    }
    let edges = edges
        .iter()
        .filter_map(|(from, to)| {
            let (f, t) = (task_map.get(from.trim())?, task_map.get(to.trim())?);
            Some(TaskEdge::new(f.clone(), t.clone()))
        })
        .collect();
    TaskGraph::new(nodes, edges)
}

/// One node per tool with ids `1..n` and no edges.
pub fn create_parallel_graph(tools: &[String]) -> Result<TaskGraph, GraphError> {
    let nodes = tools
        .iter()
        .enumerate()
        .map(|(i, t)| TaskNode::new((i + 1).to_string(), t.clone()))
        .collect();
    TaskGraph::new(nodes, Vec::new())
}

/// Nodes `1..n` labelled by the descriptions, edges copied verbatim.
pub fn create_async_graph(edges: &[(String, String)], node_descriptions: &[String]) -> Result<TaskGraph, GraphError> {
    let nodes = node_descriptions
        .iter()
        .enumerate()
        .map(|(i, d)| TaskNode::new((i + 1).to_string(), d.clone()))
        .collect();
    let edges = edges
        .iter()
        .map(|(f, t)| TaskEdge::new(f.trim(), t.trim()))
        .collect();
    TaskGraph::new(nodes, edges)
}

// ---------------------------------------------------------------------------
// Tool manifest synthesis

/// Lowercase snake-case name derived from a description, at most 48 chars.
pub fn slugify(description: &str) -> String {
    let mut slug = String::new();
    for c in description.chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.is_empty() && !slug.ends_with('_') {
            slug.push('_');
        }
    }
    let mut slug: String = slug.trim_end_matches('_').chars().take(48).collect();
    while slug.ends_with('_') {
        slug.pop();
    }
    if slug.is_empty() {
        slug.push_str("tool");
    }
    slug
}

/// Slugs made unique by suffixing `_2`, `_3`, ... in order of appearance.
pub fn unique_tool_names(descriptions: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    descriptions
        .iter()
        .map(|d| {
            let base = slugify(d);
            let mut name = base.clone();
            let mut n = 2;
            while !seen.insert(name.clone()) {
                name = format!("{base}_{n}");
                n += 1;
            }
            name
        })
        .collect()
}

pub fn offline_tool(name: &str, description: &str) -> ToolDeclaration {
    ToolDeclaration {
        name: name.to_string(),
        description: description.to_string(),
        params: Vec::new(),
        behavior: BehaviorSpec::FixedOutput(format!(
            "{description}: done (ref {:08x})",
            fnv1a(description.as_bytes()) as u32
        )),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BehaviorProposal {
    #[serde(default)]
    params: Vec<ParamSpec>,
    behavior: BehaviorSpec,
}

pub fn behavior_prompt(name: &str, description: &str) -> String {
    format!(
        "Design a deterministic stand-in for a real-world tool so that it returns realistic synthetic data.\n\n\
         Tool name: {name}\n\
         Tool description: {description}\n\n\
         Reply with one JSON object {{\"params\": [{{\"name\": ..., \"type\": ..., \"required\": true}}], \
         \"behavior\": {{\"kind\": \"fixed_output\" | \"template\" | \"table_lookup\", \"payload\": ...}}}}.\n\
         A template payload is text with {{param}} slots. A table_lookup payload is \
         {{\"table\": {{key: output}}, \"default\": output}} keyed on the first parameter.\n"
    )
}

fn propose(backend: &dyn ModelBackend, prompt: &str, name: &str, description: &str) -> Result<ToolDeclaration, String> {
    let reply = backend.complete(prompt).map_err(|e| e.to_string())?;
    let object = extract_json_object(&reply).ok_or("reply contains no JSON object")?;
    let proposal: BehaviorProposal = serde_json::from_str(object).map_err(|e| e.to_string())?;
    let decl = ToolDeclaration {
        name: name.to_string(),
        description: description.to_string(),
        params: proposal.params,
        behavior: proposal.behavior,
    };
    decl.validate().map_err(|e| e.to_string())?;
    Ok(decl)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FallbackNote {
    pub tool: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestSynthesis {
    pub tools: Vec<ToolDeclaration>,
    pub fallbacks: Vec<FallbackNote>,
}

/// One tool per description. Without a backend every tool gets a fixed
/// output derived from its description. With a backend each proposal is
/// validated; an invalid one is retried once with the error attached, then
/// replaced by the offline behavior.
pub fn synthesize_tool_manifest(
    descriptions: &[String],
    backend: Option<&dyn ModelBackend>,
) -> Result<ManifestSynthesis, DatasetError> {
    if descriptions.is_empty() {
        return Err(DatasetError::Invalid {
            name: String::new(),
            message: "no tool descriptions to synthesize".into(),
        });
    }
    let names = unique_tool_names(descriptions);
    let mut tools = Vec::with_capacity(descriptions.len());
    let mut fallbacks = Vec::new();
    for (name, description) in names.iter().zip(descriptions) {
        let Some(backend) = backend else {
            tools.push(offline_tool(name, description));
            continue;
        };
        let prompt = behavior_prompt(name, description);
        let decl = propose(backend, &prompt, name, description).or_else(|first| {
            let retry = format!("{prompt}\nYour previous reply was rejected: {first}\nReply again.\n");
            propose(backend, &retry, name, description)
        });
        match decl {
            Ok(d) => tools.push(d),
            Err(reason) => {
                fallbacks.push(FallbackNote {
                    tool: name.clone(),
                    reason,
                });
                tools.push(offline_tool(name, description));
            }
        }
    }
    Ok(ManifestSynthesis { tools, fallbacks })
}

// ---------------------------------------------------------------------------
// Source datasets

/// An edge endpoint written either as a number or a string.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum EndpointRepr {
    Number(u64),
    Text(String),
}

impl EndpointRepr {
    pub fn into_id(self) -> String {
        match self {
            EndpointRepr::Number(n) => n.to_string(),
            EndpointRepr::Text(s) => s,
        }
    }
}

/// One scenario in the source format used by `dataset build`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceScenario {
    pub name: String,
    pub category: Category,
    #[serde(default)]
    pub query: Option<String>,
    #[serde(default)]
    pub node_descriptions: Vec<String>,
    #[serde(default)]
    pub edges: Vec<(EndpointRepr, EndpointRepr)>,
    pub tools: Vec<String>,
    /// Tool descriptions in call order; defaults to every tool once.
    #[serde(default)]
    pub expected_tool_calls: Option<Vec<String>>,
    pub gold_response: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDataset {
    pub scenarios: Vec<SourceScenario>,
}

impl SourceDataset {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, DatasetError> {
        serde_json::from_str(text).map_err(|e| DatasetError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutcome {
    pub record: ScenarioRecord,
    pub removed_duplicates: Vec<String>,
    pub fallbacks: Vec<FallbackNote>,
}

/// Builds a validated record: near-duplicate tool descriptions are dropped,
/// the graph is built by the category's builder, and a manifest is
/// synthesized for the remaining tools.
pub fn build_scenario(
    source: &SourceScenario,
    provider: &dyn EmbeddingProvider,
    backend: Option<&dyn ModelBackend>,
) -> Result<BuildOutcome, DatasetError> {
    let invalid = |message: String| DatasetError::Invalid {
        name: source.name.clone(),
        message,
    };
    if source.tools.is_empty() {
        return Err(invalid("scenario lists no tools".into()));
    }
    let tools = remove_semantic_duplicates(&source.tools, provider, DUPLICATE_THRESHOLD)?;
    let removed: Vec<String> = source.tools.iter().filter(|t| !tools.contains(t)).cloned().collect();
    let edges: Vec<(String, String)> = source
        .edges
        .iter()
        .map(|(f, t)| (f.clone().into_id(), t.clone().into_id()))
        .collect();
    let graph = match source.category {
        Category::Sequential => create_seq_task_graph(&edges, &source.node_descriptions)?,
        Category::Parallel => create_parallel_graph(&tools)?,
        Category::Async => create_async_graph(&edges, &source.node_descriptions)?,
    };
    let synthesis = synthesize_tool_manifest(&tools, backend)?;
    let name_of = |description: &str| {
        tools
            .iter()
            .position(|t| t == description)
            .map(|i| synthesis.tools[i].name.clone())
    };
    let expected_tool_calls = match &source.expected_tool_calls {
        None => synthesis.tools.iter().map(|t| t.name.clone()).collect(),
        Some(calls) => {
            let mut names = Vec::new();
            for c in calls {
                match name_of(c) {
                    Some(n) => names.push(n),
                    None if removed.contains(c) => {}
                    None => return Err(invalid(format!("expected call {c:?} is not one of the scenario tools"))),
                }
            }
            names
        }
    };
    let record = ScenarioRecord {
        name: source.name.clone(),
        category: source.category,
        complexity: graph.complexity_score(),
        expected_graph: graph,
        tool_manifest: synthesis.tools,
        expected_tool_calls,
        gold_response: source.gold_response.clone(),
        query: source.query.clone(),
    };
    record.validate()?;
    Ok(BuildOutcome {
        record,
        removed_duplicates: removed,
        fallbacks: synthesis.fallbacks,
    })
}

// ---------------------------------------------------------------------------
// On-disk format

fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

fn text_file(text: &str) -> String {
    format!("{text}\n")
}

fn strip_final_newline(text: &str) -> &str {
    text.strip_suffix("\r\n").or_else(|| text.strip_suffix('\n')).unwrap_or(text)
}

/// The canonical file contents of a scenario, in write order.
pub fn serialize_scenario(record: &ScenarioRecord) -> Vec<(&'static str, String)> {
    let mut files = vec![
        (METADATA_FILE, pretty_json(&record.metadata())),
        (GRAPH_FILE, record.expected_graph.to_json_pretty()),
        (TOOLS_FILE, manifest_to_json(&record.tool_manifest)),
        (EXPECTED_CALLS_FILE, pretty_json(&record.expected_tool_calls)),
        (GOLD_RESPONSE_FILE, text_file(&record.gold_response)),
    ];
    if let Some(q) = &record.query {
        files.push((QUERY_FILE, text_file(q)));
    }
    files
}

/// Writes `<root>/<name>/` and returns that directory.
pub fn write_scenario(record: &ScenarioRecord, root: &Path) -> Result<PathBuf, DatasetError> {
    record.validate()?;
    let dir = root.join(&record.name);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (file, contents) in serialize_scenario(record) {
        let path = dir.join(file);
        fs::write(&path, contents).map_err(io_err(&path))?;
    }
    Ok(dir)
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    serde_json::from_str(&read(path)?).map_err(|e| DatasetError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads and validates one scenario directory.
pub fn load_scenario(dir: &Path) -> Result<ScenarioRecord, DatasetError> {
    let metadata_path = dir.join(METADATA_FILE);
    let metadata: ScenarioMetadata = parse_json(&metadata_path)?;
    let dir_name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    if metadata.name != dir_name {
        return Err(DatasetError::Parse {
            path: metadata_path,
            message: format!("name {:?} does not match directory {dir_name:?}", metadata.name),
        });
    }
    let graph_path = dir.join(GRAPH_FILE);
    let expected_graph = TaskGraph::from_json(&read(&graph_path)?).map_err(|e| DatasetError::Parse {
        path: graph_path,
        message: e.to_string(),
    })?;
    let tools_path = dir.join(TOOLS_FILE);
    let tool_manifest =
        parse_manifest(&read(&tools_path)?, &tools_path.display().to_string()).map_err(|e| DatasetError::Parse {
            path: tools_path,
            message: e.to_string(),
        })?;
    let expected_tool_calls: Vec<String> = parse_json(&dir.join(EXPECTED_CALLS_FILE))?;
    let gold_response = strip_final_newline(&read(&dir.join(GOLD_RESPONSE_FILE))?).to_string();
    let query_path = dir.join(QUERY_FILE);
    let query = if query_path.exists() {
        Some(strip_final_newline(&read(&query_path)?).to_string())
    } else {
        None
    };
    let record = ScenarioRecord {
        name: metadata.name,
        category: metadata.category,
        complexity: metadata.complexity,
        expected_graph,
        tool_manifest,
        expected_tool_calls,
        gold_response,
        query,
    };
    let problems = record.problems();
    if !problems.is_empty() {
        return Err(DatasetError::Parse {
            path: metadata_path,
            message: problems.join("; "),
        });
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.message)
    }
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub records: Vec<ScenarioRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

impl LoadReport {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Loads every scenario directory under `root`, sorted by name. Broken
/// scenarios become diagnostics; loading carries on.
pub fn load_scenarios(root: &Path) -> Result<LoadReport, DatasetError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        if entry.file_type().map_err(io_err(&entry.path()))?.is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    let mut report = LoadReport::default();
    for dir in dirs {
        match load_scenario(&dir) {
            Ok(r) => report.records.push(r),
            Err(e) => report.diagnostics.push(diagnostic(&dir, e)),
        }
    }
    report.records.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(report)
}

fn diagnostic(dir: &Path, e: DatasetError) -> Diagnostic {
    match e {
        DatasetError::Io { path, source } => Diagnostic {
            path,
            message: source.to_string(),
        },
        DatasetError::Parse { path, message } => Diagnostic { path, message },
        other => Diagnostic {
            path: dir.to_path_buf(),
            message: other.to_string(),
        },
    }
}
