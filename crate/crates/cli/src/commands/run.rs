use std::path::PathBuf;
use std::sync::Arc;

use agentgraph::dataset::{QUERY_FILE, TOOLS_FILE};
use agentgraph::execution::{ExecutionTrace, FeedbackEvent};
use agentgraph::tools::ToolError;
use agentgraph::{Executor, Orchestrator, ToolCatalog};

use super::{backend, provider, read_text};
use crate::{CliError, RunArgs, RunConfig};

pub const DEFAULT_TRACE_PATH: &str = "trace.json";

fn manifest_path(args: &RunArgs, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    args.tools
        .clone()
        .or_else(|| cfg.tools.clone())
        .or_else(|| args.scenario.as_ref().map(|d| d.join(TOOLS_FILE)))
        .ok_or_else(|| CliError::Config("no tool manifest (use --tools, `tools` in the config or --scenario)".into()))
}

fn query(args: &RunArgs) -> Result<String, CliError> {
    match (&args.query, &args.scenario) {
        (Some(q), _) => Ok(q.clone()),
        (None, Some(dir)) => Ok(read_text(&dir.join(QUERY_FILE))?.trim().to_string()),
        (None, None) => Err(CliError::Config("give --query or --scenario".into())),
    }
}

pub fn print_profile(trace: &ExecutionTrace) {
    eprintln!("wall time: {:.3} ms", trace.timing.wall_time.as_secs_f64() * 1e3);
    for (id, t) in &trace.timing.tasks {
        eprintln!(
            "  {id}: start {:.3} ms, end {:.3} ms, {} tool call(s)",
            t.started.as_secs_f64() * 1e3,
            t.ended.as_secs_f64() * 1e3,
            t.tool_calls.len()
        );
    }
}

/// Orchestrates, executes, prints the answer and writes the trace.
pub fn cmd_run(args: &RunArgs, cfg: &RunConfig) -> Result<ExecutionTrace, CliError> {
    let query = query(args)?;
    let manifest = manifest_path(args, cfg)?;
    std::fs::metadata(&manifest).map_err(|e| CliError::io(&manifest, e))?;
    let backend = backend(cfg.backend_config()?)?;
    let catalog = ToolCatalog::load_manifest(&manifest, provider(cfg)?).map_err(|e| match e {
        ToolError::Io { source, .. } => CliError::io(&manifest, source),
        other => CliError::Config(other.to_string()),
    })?;

    let decomposition = Orchestrator::new(backend.clone())
        .with_max_repairs(cfg.max_repairs)
        .produce_task_graph(&query, cfg.strategy)
        .map_err(|e| CliError::Orchestration(e.to_string()))?;

    let mut executor = Executor::new(&catalog, backend.as_ref(), cfg.execution_options());
    if cfg.feedback != crate::FeedbackChoice::Off {
        executor = executor.with_feedback_sink(Arc::new(|e: &FeedbackEvent| {
            eprintln!("[{}] {}", e.task_id, e.phrase);
        }));
    }
    let mut trace = executor.execute(&query, &decomposition.graph, cfg.mode);
    trace.content.config = Some(cfg.to_value());

    println!("{}", trace.final_answer());
    if cfg.profile {
        print_profile(&trace);
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_TRACE_PATH));
    super::write_text(&out, &trace.to_json_pretty())?;
    Ok(trace)
}
