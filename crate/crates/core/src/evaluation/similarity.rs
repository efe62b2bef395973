//! Label- and structure-based graph similarity scores.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::matching::{match_edges, match_nodes_greedy, MatchResult, SimilarityMatrix};
use super::EvalError;
use crate::embedding::EmbeddingProvider;
use crate::graph::TaskGraph;

pub const DEFAULT_THETA: f64 = 0.75;
pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSimilarityConfig {
    pub alpha: f64,
}

impl Default for PathSimilarityConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA }
    }
}

impl PathSimilarityConfig {
    pub fn new(alpha: f64) -> Result<Self, EvalError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(EvalError::InvalidConfig(format!("alpha must be a positive finite number, got {alpha}")));
        }
        Ok(Self { alpha })
    }
}

/// Mean over expected nodes of the best (non-negative) cosine to any actual
/// node.
pub fn node_label_similarity_from(sim: &SimilarityMatrix) -> Result<f64, EvalError> {
    if sim.rows() == 0 {
        return Err(EvalError::EmptyExpectedGraph);
    }
    let total: f64 = sim
        .values
        .iter()
        .map(|row| row.iter().copied().fold(0.0_f64, f64::max))
        .sum();
    Ok(total / sim.rows() as f64)
}

pub fn node_label_similarity(
    expected: &TaskGraph,
    actual: &TaskGraph,
    provider: &dyn EmbeddingProvider,
) -> Result<f64, EvalError> {
    if expected.is_empty() {
        return Err(EvalError::EmptyExpectedGraph);
    }
    node_label_similarity_from(&SimilarityMatrix::compute(expected, actual, provider)?)
}

pub fn ssi_from_components(node_label_similarity: f64, edge_f1: f64) -> f64 {
    (node_label_similarity + edge_f1) / 2.0
}

pub fn ssi(
    expected: &TaskGraph,
    actual: &TaskGraph,
    provider: &dyn EmbeddingProvider,
    theta: f64,
) -> Result<f64, EvalError> {
    if expected.is_empty() {
        return Err(EvalError::EmptyExpectedGraph);
    }
    let sim = SimilarityMatrix::compute(expected, actual, provider)?;
    let nls = node_label_similarity_from(&sim)?;
    let nodes = match_nodes_greedy(&sim, theta);
    let edge_f1 = match_edges(expected, actual, &nodes).prf1().f1;
    Ok(ssi_from_components(nls, edge_f1))
}

/// Unweighted shortest directed path lengths from `source`.
pub(crate) fn distances_from<'a>(succ: &HashMap<&'a str, Vec<&'a str>>, source: &'a str) -> HashMap<&'a str, usize> {
    let mut dist = HashMap::from([(source, 0)]);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u];
        for &v in succ.get(u).map(Vec::as_slice).unwrap_or_default() {
            if !dist.contains_key(v) {
                dist.insert(v, d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Agreement of shortest-path lengths between matched node pairs, averaged
/// over all ordered pairs of matched nodes (including a node with itself).
pub fn path_length_similarity(
    expected: &TaskGraph,
    actual: &TaskGraph,
    node_match: &MatchResult,
    cfg: &PathSimilarityConfig,
) -> f64 {
    let m = node_match.pairs.len();
    if m == 0 {
        return 0.0;
    }
    let succ_e = expected.successors();
    let succ_a = actual.successors();
    let mut total = 0.0;
    for pi in &node_match.pairs {
        let de = distances_from(&succ_e, pi.expected.as_str());
        let da = distances_from(&succ_a, pi.actual.as_str());
        for pj in &node_match.pairs {
            total += match (de.get(pj.expected.as_str()), da.get(pj.actual.as_str())) {
                (None, None) => 1.0,
                (Some(&d1), Some(&d2)) => (-cfg.alpha * d1.abs_diff(d2) as f64).exp(),
                _ => 0.0,
            };
        }
    }
    total / (m * m) as f64
}
