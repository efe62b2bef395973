use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use agentgraph::dataset::load_scenario;
use agentgraph::evaluation::{evaluate_scenario, EvalConfig, TokenF1Judge};
use agentgraph::execution::TaskStatus;
use agentgraph::{
    DecompositionStrategy, ExecutionMode, ExecutionOptions, ExecutionTrace, Executor, HashEmbedder, Orchestrator,
    ScriptedBackend, TaskEdge, TaskGraph, TaskNode, ToolCatalog,
};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(name: &str, mode: ExecutionMode) -> (agentgraph::dataset::ScenarioRecord, ExecutionTrace) {
    let record = load_scenario(&fixtures().join("scenarios").join(name)).unwrap();
    let backend = ScriptedBackend::from_file(&fixtures().join("rules").join(format!("{name}.json"))).unwrap();
    let orchestrator = Orchestrator::new(backend);
    let query = record.query.clone().unwrap();
    let graph = orchestrator.produce_task_graph(&query, DecompositionStrategy::Default).unwrap().graph;
    let catalog = ToolCatalog::from_declarations(record.tool_manifest.clone(), Arc::new(HashEmbedder::default())).unwrap();
    let trace = Executor::new(&catalog, orchestrator.backend(), ExecutionOptions::default()).execute(&query, &graph, mode);
    (record, trace)
}

#[test]
fn scripted_pipeline_scores_a_faithful_prediction() {
    let (record, trace) = run("seq_make_tea", ExecutionMode::Sequential);
    assert!(trace.content.results.iter().all(|r| r.status == TaskStatus::Completed));
    assert_eq!(trace.tool_call_names(), ["check_kettle_water_temperature", "set_a_countdown_timer"]);

    let report = evaluate_scenario(&record, &trace, &HashEmbedder::default(), &EvalConfig::default(), &TokenF1Judge);
    assert!(report.errors.is_empty(), "{:?}", report.errors);
    assert_eq!(report.node.as_ref().unwrap().scores.f1, 1.0);
    assert_eq!(report.edge.as_ref().unwrap().scores.f1, 1.0);
    assert_eq!(report.ged, Some(0));
    assert_eq!(report.ssi, Some(1.0));
    assert_eq!(report.expected_complexity, 9);
    let answer = report.answer_score.unwrap();
    assert!(answer > 0.0 && answer < 1.0);
}

#[test]
fn trace_survives_a_json_round_trip() {
    let (_, trace) = run("async_breakfast", ExecutionMode::Parallel);
    let text = trace.to_json_pretty();
    let back = ExecutionTrace::from_json(&text).unwrap();
    assert_eq!(back.content, trace.content);
    assert_eq!(back.to_json_pretty(), text);
}

#[test]
fn modes_agree_on_content() {
    for name in ["async_morning_hike", "par_trip_research"] {
        let (_, seq) = run(name, ExecutionMode::Sequential);
        let (_, par) = run(name, ExecutionMode::Parallel);
        assert_eq!(seq.content.results, par.content.results, "{name}");
        assert_eq!(seq.final_answer(), par.final_answer(), "{name}");
    }
}

#[test]
fn failed_task_skips_its_dependents() {
    let backend = ScriptedBackend::new()
        .when_contains("Task Results:", "partial")
        .when_contains("Task: fetch\n", "fetched")
        .when_contains("Task: parse\n", "<tool_calls>[{\"tool\": \"no_such_tool\"}]</tool_calls>")
        .when_contains("Task: store\n", "stored");
    let graph = TaskGraph::new(
        vec![TaskNode::new("1", "fetch"), TaskNode::new("2", "parse"), TaskNode::new("3", "store")],
        vec![TaskEdge::new("1", "2"), TaskEdge::new("2", "3")],
    )
    .unwrap();
    let catalog = ToolCatalog::from_declarations(vec![], Arc::new(HashEmbedder::default())).unwrap();
    for mode in [ExecutionMode::Sequential, ExecutionMode::Parallel] {
        let trace = Executor::new(&catalog, &backend, ExecutionOptions::default()).execute("q", &graph, mode);
        let status: Vec<TaskStatus> = trace.content.results.iter().map(|r| r.status).collect();
        assert_eq!(status, [TaskStatus::Completed, TaskStatus::Failed, TaskStatus::Skipped], "{mode:?}");
        assert!(trace.result("2").unwrap().error.as_ref().unwrap().contains("no_such_tool"));
    }
}

#[test]
fn feedback_events_reach_the_sink() {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let sink_seen = Arc::clone(&seen);
    let record = load_scenario(&fixtures().join("scenarios/seq_make_tea")).unwrap();
    let backend = ScriptedBackend::from_file(&fixtures().join("rules/seq_make_tea.json")).unwrap();
    let graph = record.expected_graph.clone();
    let catalog = ToolCatalog::from_declarations(record.tool_manifest.clone(), Arc::new(HashEmbedder::default())).unwrap();
    let options = ExecutionOptions {
        feedback: Some(agentgraph::execution::FeedbackSource::default()),
        ..Default::default()
    };
    let trace = Executor::new(&catalog, &backend, options)
        .with_feedback_sink(Arc::new(move |e| sink_seen.lock().unwrap().push(e.task_id.clone())))
        .execute("tea", &graph, ExecutionMode::Parallel);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), graph.node_count());
    assert_eq!(trace.timing.feedback.len(), graph.node_count());
}
