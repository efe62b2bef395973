//! Task graph execution.
//!
//! Each task is executed by prompting the backend with the task label, the
//! inter-task buffer (outputs of its direct predecessors, or of all ancestors
//! when indirect dependencies are enabled), and the tools selected for it.
//! Tool-call directives in the response are invoked against the catalog.
//!
//! Failure policy: a failed task marks every descendant skipped; independent
//! branches keep running.

pub mod prompts;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, PoisonError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::graph::{DependencyView, NaturalKey, TaskGraph};
use crate::orchestration::ModelBackend;
use crate::tools::{ToolCall, ToolCatalog, ToolDeclaration, DEFAULT_TOOL_K};
use prompts::BufferEntry;

pub const MAX_DEFAULT_CONCURRENCY: usize = 16;

pub const DEFAULT_FEEDBACK_PHRASES: [&str; 3] = [
    "Working on it…",
    "Making progress on your request…",
    "Almost there…",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    #[default]
    Sequential,
    Parallel,
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sequential => "sequential",
            Self::Parallel => "parallel",
        })
    }
}

impl FromStr for ExecutionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq" | "sequential" => Ok(Self::Sequential),
            "par" | "parallel" => Ok(Self::Parallel),
            other => Err(format!("unknown execution mode {other:?} (expected seq or par)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Completed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub label: String,
    pub status: TaskStatus,
    pub output: String,
    pub tool_calls: Vec<ToolCall>,
    /// Task ids whose outputs were in this task's inter-task buffer.
    pub buffer: Vec<String>,
    /// Tools offered to the backend for this task.
    pub offered_tools: Vec<String>,
    /// Intra-task record: the prompt sent and the raw response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TaskResult {
    fn skipped(task_id: &str, label: &str, blocked_by: &str) -> Self {
        Self {
            task_id: task_id.to_string(),
            label: label.to_string(),
            status: TaskStatus::Skipped,
            output: String::new(),
            tool_calls: Vec::new(),
            buffer: Vec::new(),
            offered_tools: Vec::new(),
            prompt: None,
            response: None,
            error: Some(format!("dependency {blocked_by} did not complete")),
        }
    }
}

mod micros {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }

    pub mod vec {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};
        use std::time::Duration;

        pub fn serialize<S: Serializer>(v: &[Duration], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|d| d.as_micros() as u64).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Duration>, D::Error> {
            Ok(Vec::<u64>::deserialize(d)?.into_iter().map(Duration::from_micros).collect())
        }
    }
}

/// Monotonic offsets from the start of the run, in microseconds on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTiming {
    #[serde(rename = "started_us", with = "micros")]
    pub started: Duration,
    #[serde(rename = "ended_us", with = "micros")]
    pub ended: Duration,
    #[serde(rename = "tool_calls_us", with = "micros::vec")]
    pub tool_calls: Vec<Duration>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub task_id: String,
    pub phrase: String,
    #[serde(rename = "at_us", with = "micros")]
    pub at: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TimingProfile {
    pub tasks: BTreeMap<String, TaskTiming>,
    pub feedback: Vec<FeedbackEvent>,
    #[serde(rename = "wall_time_us", with = "micros")]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Consolidation {
    Backend,
    Fallback { reason: String },
    /// No task completed, so there was nothing to consolidate.
    Empty,
}

/// The reproducible part of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceContent {
    pub query: String,
    pub mode: ExecutionMode,
    pub graph: TaskGraph,
    /// One entry per node, in topological order.
    pub results: Vec<TaskResult>,
    pub final_answer: String,
    pub consolidation: Consolidation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
}

/// A full run. `content` is stable across identical runs; `timing` is not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub content: TraceContent,
    pub timing: TimingProfile,
}

impl ExecutionTrace {
    pub fn result(&self, task_id: &str) -> Option<&TaskResult> {
        self.content.results.iter().find(|r| r.task_id == task_id)
    }

    pub fn final_answer(&self) -> &str {
        &self.content.final_answer
    }

    /// Tool names in execution-independent order: tasks in topological
    /// order, calls in directive order.
    pub fn tool_call_names(&self) -> Vec<String> {
        self.content
            .results
            .iter()
            .flat_map(|r| r.tool_calls.iter().map(|c| c.tool_name.clone()))
            .collect()
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serialization is infallible");
        s.push('\n');
        s
    }

    pub fn content_json(&self) -> String {
        serde_json::to_string_pretty(&self.content).expect("trace serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json_pretty())
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsolidationMode {
    #[default]
    Backend,
    Concatenate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSource {
    Canned(Vec<String>),
    Backend,
}

impl Default for FeedbackSource {
    fn default() -> Self {
        Self::Canned(DEFAULT_FEEDBACK_PHRASES.iter().map(|s| s.to_string()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionOptions {
    pub include_indirect_dependencies: bool,
    pub semantic_tool_filtering: bool,
    pub tool_k: usize,
    pub tool_min_sim: f64,
    /// Parallel mode only. `None` means one slot per root, capped at 16.
    pub max_concurrency: Option<usize>,
    pub consolidation: ConsolidationMode,
    pub feedback: Option<FeedbackSource>,
}

impl Default for ExecutionOptions {
    fn default() -> Self {
        Self {
            include_indirect_dependencies: false,
            semantic_tool_filtering: true,
            tool_k: DEFAULT_TOOL_K,
            tool_min_sim: 0.0,
            max_concurrency: None,
            consolidation: ConsolidationMode::Backend,
            feedback: None,
        }
    }
}

impl ExecutionOptions {
    pub fn effective_concurrency(&self, graph: &TaskGraph) -> usize {
        self.max_concurrency
            .unwrap_or_else(|| graph.roots().len().min(MAX_DEFAULT_CONCURRENCY))
            .max(1)
    }
}

pub type FeedbackSink = Arc<dyn Fn(&FeedbackEvent) + Send + Sync>;

/// Runs task graphs against a tool catalog and a model backend.
pub struct Executor<'a> {
    catalog: &'a ToolCatalog,
    backend: &'a dyn ModelBackend,
    options: ExecutionOptions,
    sink: Option<FeedbackSink>,
}

struct Outcome {
    result: TaskResult,
    timing: Option<TaskTiming>,
}

struct Run<'r> {
    query: &'r str,
    graph: &'r TaskGraph,
    view: DependencyView,
    topo_rank: HashMap<String, usize>,
    clock: Instant,
    feedback_turn: AtomicUsize,
    feedback: Mutex<Vec<FeedbackEvent>>,
}

impl<'a> Executor<'a> {
    pub fn new(catalog: &'a ToolCatalog, backend: &'a dyn ModelBackend, options: ExecutionOptions) -> Self {
        Self {
            catalog,
            backend,
            options,
            sink: None,
        }
    }

    /// Receives every feedback event as it is emitted, from any worker.
    pub fn with_feedback_sink(mut self, sink: FeedbackSink) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn options(&self) -> &ExecutionOptions {
        &self.options
    }

    pub fn execute(&self, query: &str, graph: &TaskGraph, mode: ExecutionMode) -> ExecutionTrace {
        let topo = graph.topological_order();
        let run = Run {
            query,
            graph,
            view: graph.dependency_view(),
            topo_rank: topo.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect(),
            clock: Instant::now(),
            feedback_turn: AtomicUsize::new(0),
            feedback: Mutex::new(Vec::new()),
        };
        let mut outcomes = match mode {
            ExecutionMode::Sequential => self.run_sequential(&run, &topo),
            ExecutionMode::Parallel => self.run_parallel(&run),
        };

        let mut results = Vec::with_capacity(topo.len());
        let mut timings = BTreeMap::new();
        for id in &topo {
            let outcome = outcomes.remove(id).expect("every node has an outcome");
            if let Some(t) = outcome.timing {
                timings.insert(id.clone(), t);
            }
            results.push(outcome.result);
        }
        let (final_answer, consolidation) = self.consolidate(query, &results);
        let mut feedback = run.feedback.into_inner().unwrap_or_else(PoisonError::into_inner);
        feedback.sort_by_key(|e| e.at);
        let wall_time = run.clock.elapsed();
        ExecutionTrace {
            content: TraceContent {
                query: query.to_string(),
                mode,
                graph: graph.clone(),
                results,
                final_answer,
                consolidation,
                config: None,
            },
            timing: TimingProfile {
                tasks: timings,
                feedback,
                wall_time,
            },
        }
    }

    pub fn execute_sequential(&self, query: &str, graph: &TaskGraph) -> ExecutionTrace {
        self.execute(query, graph, ExecutionMode::Sequential)
    }

    pub fn execute_parallel(&self, query: &str, graph: &TaskGraph) -> ExecutionTrace {
        self.execute(query, graph, ExecutionMode::Parallel)
    }

    fn run_sequential(&self, run: &Run<'_>, topo: &[String]) -> HashMap<String, Outcome> {
        let mut done: HashMap<String, Outcome> = HashMap::new();
        for id in topo {
            let label = run.graph.label(id).expect("topological order yields graph ids");
            let blocked = run.view.direct_predecessors[id]
                .iter()
                .find(|p| done[*p].result.status != TaskStatus::Completed);
            let outcome = match blocked {
                Some(p) => Outcome {
                    result: TaskResult::skipped(id, label, p),
                    timing: None,
                },
                None => {
                    let buffer = self.buffer_for(run, id, |t| &done[t].result);
                    self.run_task(run, id, buffer)
                }
            };
            done.insert(id.clone(), outcome);
        }
        done
    }

    fn run_parallel(&self, run: &Run<'_>) -> HashMap<String, Outcome> {
        struct Schedule<'g> {
            ready: BinaryHeap<Reverse<NaturalKey<'g>>>,
            waiting_on: HashMap<&'g str, usize>,
            done: HashMap<String, Outcome>,
        }

        let graph = run.graph;
        let total = graph.node_count();
        if total == 0 {
            return HashMap::new();
        }
        let successors = graph.successors();
        let mut waiting_on: HashMap<&str, usize> = graph.nodes().iter().map(|n| (n.id.as_str(), 0)).collect();
        for e in graph.edges() {
            *waiting_on.get_mut(e.to.as_str()).expect("validated endpoint") += 1;
        }
        let ready = waiting_on
            .iter()
            .filter(|(_, &n)| n == 0)
            .map(|(&id, _)| Reverse(NaturalKey(id)))
            .collect();
        let state = Mutex::new(Schedule {
            ready,
            waiting_on,
            done: HashMap::new(),
        });
        let wake = Condvar::new();
        let workers = self.options.effective_concurrency(graph).min(total);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let (id, buffer) = {
                        let mut st = state.lock().unwrap_or_else(PoisonError::into_inner);
                        let id = loop {
                            if st.done.len() == total {
                                return;
                            }
                            if let Some(Reverse(NaturalKey(id))) = st.ready.pop() {
                                break id;
                            }
                            st = wake.wait(st).unwrap_or_else(PoisonError::into_inner);
                        };
                        let buffer = self.buffer_for(run, id, |t| &st.done[t].result);
                        (id, buffer)
                    };

                    let outcome = self.run_task(run, id, buffer);

                    let mut st = state.lock().unwrap_or_else(PoisonError::into_inner);
                    let completed = outcome.result.status == TaskStatus::Completed;
                    st.done.insert(id.to_string(), outcome);
                    if completed {
                        for &next in &successors[id] {
                            let n = st.waiting_on.get_mut(next).expect("validated endpoint");
                            *n -= 1;
                            if *n == 0 && !st.done.contains_key(next) {
                                st.ready.push(Reverse(NaturalKey(next)));
                            }
                        }
                    } else {
                        for d in run.view.descendants(id) {
                            if let std::collections::hash_map::Entry::Vacant(slot) = st.done.entry(d) {
                                let label = graph.label(slot.key()).expect("descendant is a graph node");
                                let result = TaskResult::skipped(slot.key(), label, id);
                                slot.insert(Outcome { result, timing: None });
                            }
                        }
                    }
                    wake.notify_all();
                });
            }
        });
        state.into_inner().unwrap_or_else(PoisonError::into_inner).done
    }

    /// Buffer entries for `id`, in topological order. Every referenced task
    /// has completed by the time `id` is ready.
    fn buffer_for<'r>(&self, run: &Run<'_>, id: &str, result_of: impl Fn(&str) -> &'r TaskResult) -> Vec<BufferEntry> {
        let sources = if self.options.include_indirect_dependencies {
            &run.view.ancestors[id]
        } else {
            &run.view.direct_predecessors[id]
        };
        let mut ids: Vec<&String> = sources.iter().collect();
        ids.sort_by_key(|t| run.topo_rank[*t]);
        ids.into_iter()
            .map(|t| {
                let r = result_of(t);
                BufferEntry {
                    task_id: t.clone(),
                    label: r.label.clone(),
                    output: r.output.clone(),
                }
            })
            .collect()
    }

    fn emit_feedback(&self, run: &Run<'_>, id: &str, label: &str) {
        let Some(source) = &self.options.feedback else {
            return;
        };
        let canned = |list: &[String]| -> Option<String> {
            if list.is_empty() {
                return None;
            }
            let turn = run.feedback_turn.fetch_add(1, Ordering::SeqCst);
            Some(list[turn % list.len()].clone())
        };
        let phrase = match source {
            FeedbackSource::Canned(list) => canned(list),
            FeedbackSource::Backend => match self.backend.complete(&prompts::feedback_prompt(label)) {
                Ok(text) if !text.trim().is_empty() => Some(text.trim().to_string()),
                _ => canned(&FeedbackSource::default_phrases()),
            },
        };
        let Some(phrase) = phrase else {
            return;
        };
        let event = FeedbackEvent {
            task_id: id.to_string(),
            phrase,
            at: run.clock.elapsed(),
        };
        if let Some(sink) = &self.sink {
            sink(&event);
        }
        run.feedback.lock().unwrap_or_else(PoisonError::into_inner).push(event);
    }

    fn run_task(&self, run: &Run<'_>, id: &str, buffer: Vec<BufferEntry>) -> Outcome {
        let started = run.clock.elapsed();
        let label = run.graph.label(id).expect("task id is a graph node");
        self.emit_feedback(run, id, label);

        let mut result = TaskResult {
            task_id: id.to_string(),
            label: label.to_string(),
            status: TaskStatus::Failed,
            output: String::new(),
            tool_calls: Vec::new(),
            buffer: buffer.iter().map(|b| b.task_id.clone()).collect(),
            offered_tools: Vec::new(),
            prompt: None,
            response: None,
            error: None,
        };
        let mut call_times = Vec::new();
        if let Err(error) = self.attempt(run, label, &buffer, &mut result, &mut call_times) {
            result.error = Some(error);
        } else {
            result.status = TaskStatus::Completed;
        }
        Outcome {
            result,
            timing: Some(TaskTiming {
                started,
                ended: run.clock.elapsed(),
                tool_calls: call_times,
            }),
        }
    }

    fn attempt(
        &self,
        run: &Run<'_>,
        label: &str,
        buffer: &[BufferEntry],
        result: &mut TaskResult,
        call_times: &mut Vec<Duration>,
    ) -> Result<(), String> {
        let tools: Vec<&ToolDeclaration> = if self.options.semantic_tool_filtering {
            self.catalog
                .filter_tools_by_task(label, self.options.tool_k, self.options.tool_min_sim)
                .map_err(|e| format!("tool filtering failed: {e}"))?
                .into_iter()
                .map(|s| &s.tool.declaration)
                .collect()
        } else {
            self.catalog.tools().map(|t| &t.declaration).collect()
        };
        result.offered_tools = tools.iter().map(|t| t.name.clone()).collect();

        let prompt = prompts::task_prompt(run.query, label, buffer, &tools);
        let response = self.backend.complete(&prompt);
        result.prompt = Some(prompt);
        let response = response.map_err(|e| e.to_string())?;
        result.response = Some(response.clone());

        let parsed = prompts::parse_task_response(&response)?;
        let mut parts = Vec::new();
        if !parsed.text.is_empty() {
            parts.push(parsed.text);
        }
        for directive in parsed.calls {
            call_times.push(run.clock.elapsed());
            let call = self
                .catalog
                .invoke(&directive.tool, directive.arguments)
                .map_err(|e| e.to_string())?;
            parts.push(call.output.clone());
            result.tool_calls.push(call);
        }
        result.output = parts.join("\n");
        Ok(())
    }

    /// Final answer from the completed tasks, in topological order.
    pub fn consolidate(&self, query: &str, results: &[TaskResult]) -> (String, Consolidation) {
        let completed: Vec<(&str, &str)> = results
            .iter()
            .filter(|r| r.status == TaskStatus::Completed)
            .map(|r| (r.label.as_str(), r.output.as_str()))
            .collect();
        if completed.is_empty() {
            return (String::new(), Consolidation::Empty);
        }
        let fallback = |reason: String| (prompts::concatenate_results(&completed), Consolidation::Fallback { reason });
        match self.options.consolidation {
            ConsolidationMode::Concatenate => fallback("configured".into()),
            ConsolidationMode::Backend => match self.backend.complete(&prompts::consolidation_prompt(query, &completed)) {
                Ok(text) if !text.trim().is_empty() => (text.trim().to_string(), Consolidation::Backend),
                Ok(_) => fallback("backend returned an empty answer".into()),
                Err(e) => fallback(e.to_string()),
            },
        }
    }
}

impl FeedbackSource {
    fn default_phrases() -> Vec<String> {
        DEFAULT_FEEDBACK_PHRASES.iter().map(|s| s.to_string()).collect()
    }
}
