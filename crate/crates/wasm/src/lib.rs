//! Browser bindings. Every entry point takes and returns JSON text.

use std::collections::HashMap;

use agentgraph::evaluation::{
    graph_edit_distance_from, match_edges, match_nodes, node_label_similarity_from, path_length_similarity,
    ssi_from_components, MatchStrategy, PathSimilarityConfig, Prf1, SimilarityMatrix, DEFAULT_EXACT_LIMIT,
};
use agentgraph::{HashEmbedder, TaskGraph};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub node: Prf1,
    pub edge: Prf1,
    pub node_label_similarity: f64,
    pub ssi: f64,
    pub path_length_similarity: f64,
    pub ged: u32,
    pub ged_exact: bool,
    pub matches: Vec<(String, String, f64)>,
}

fn graph(text: &str, which: &str) -> Result<TaskGraph, String> {
    TaskGraph::from_json(text).map_err(|e| format!("{which} graph: {e}"))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable value")
}

pub fn compare(expected: &str, actual: &str, theta: f64, alpha: f64) -> Result<Comparison, String> {
    let (e, a) = (graph(expected, "expected")?, graph(actual, "actual")?);
    let sim = SimilarityMatrix::compute(&e, &a, &HashEmbedder::default()).map_err(|e| e.to_string())?;
    let nodes = match_nodes(&sim, theta, MatchStrategy::Greedy);
    let edges = match_edges(&e, &a, &nodes);
    let nls = node_label_similarity_from(&sim).map_err(|e| e.to_string())?;
    let cfg = PathSimilarityConfig::new(alpha).map_err(|e| e.to_string())?;
    let ged = graph_edit_distance_from(&e, &a, &sim, theta, DEFAULT_EXACT_LIMIT);
    Ok(Comparison {
        node: nodes.prf1(),
        edge: edges.prf1(),
        node_label_similarity: nls,
        ssi: ssi_from_components(nls, edges.prf1().f1),
        path_length_similarity: path_length_similarity(&e, &a, &nodes, &cfg),
        ged: ged.cost,
        ged_exact: ged.exact,
        matches: nodes.pairs.iter().map(|p| (p.expected.clone(), p.actual.clone(), p.similarity)).collect(),
    })
}

/// `weights` maps node id to duration; an empty string means unit weights.
pub fn heaviest_path(graph_json: &str, weights: &str) -> Result<agentgraph::graph::CriticalPath, String> {
    let g = graph(graph_json, "task")?;
    let w: Option<HashMap<String, f64>> = if weights.trim().is_empty() {
        None
    } else {
        Some(serde_json::from_str(weights).map_err(|e| format!("weights: {e}"))?)
    };
    g.critical_path(w.as_ref()).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Heatmap {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn label_similarity(expected: &str, actual: &str) -> Result<Heatmap, String> {
    let (e, a) = (graph(expected, "expected")?, graph(actual, "actual")?);
    let sim = SimilarityMatrix::compute(&e, &a, &HashEmbedder::default()).map_err(|e| e.to_string())?;
    let label = |g: &TaskGraph, id: &str| format!("{id}: {}", g.label(id).unwrap_or_default());
    Ok(Heatmap {
        rows: sim.expected_ids.iter().map(|id| label(&e, id)).collect(),
        cols: sim.actual_ids.iter().map(|id| label(&a, id)).collect(),
        values: sim.values,
    })
}

#[wasm_bindgen(js_name = compareGraphs)]
pub fn compare_graphs(expected: &str, actual: &str, theta: f64, alpha: f64) -> Result<String, JsError> {
    compare(expected, actual, theta, alpha).map(|c| to_json(&c)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = criticalPath)]
pub fn critical_path(graph_json: &str, weights: &str) -> Result<String, JsError> {
    heaviest_path(graph_json, weights).map(|c| to_json(&c)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = similarityHeatmap)]
pub fn similarity_heatmap(expected: &str, actual: &str) -> Result<String, JsError> {
    label_similarity(expected, actual).map(|h| to_json(&h)).map_err(|e| JsError::new(&e))
}
