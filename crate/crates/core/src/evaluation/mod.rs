//! Scoring a predicted task graph and trace against a gold scenario.

mod answer;
mod ged;
mod matching;
mod report;
mod similarity;
mod stats;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use answer::{score_answer, token_f1, BackendJudge, Judge, JudgeError, TokenF1Judge};
pub use ged::{graph_edit_distance, graph_edit_distance_from, EditProblem, GedResult, DEFAULT_EXACT_LIMIT};
pub use matching::{
    match_edges, match_nodes, match_nodes_greedy, match_nodes_optimal, match_tools, prf1, total_similarity,
    MatchResult, MatchStrategy, MatchedPair, Prf1, SimilarityMatrix,
};
pub use report::{
    analyze, read_metric_csv, AnalysisReport, CategoryAnalysis, MetricCorrelation, MetricRow, MetricTable,
    RegressionSummary, TableError, ANSWER_COLUMN, DEFAULT_FEATURES, METRIC_COLUMNS,
};
pub use similarity::{
    node_label_similarity, node_label_similarity_from, path_length_similarity, ssi, ssi_from_components,
    PathSimilarityConfig, DEFAULT_ALPHA, DEFAULT_THETA,
};
pub use stats::{ols_fit, pearson_r, Correlation, OlsFit, StatsError};

use crate::dataset::ScenarioRecord;
use crate::embedding::{EmbeddingError, EmbeddingProvider};
use crate::execution::ExecutionTrace;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("expected graph has no nodes")]
    EmptyExpectedGraph,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub theta: f64,
    pub alpha: f64,
    pub exact_ged_limit: usize,
    pub matching: MatchStrategy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            alpha: DEFAULT_ALPHA,
            exact_ged_limit: DEFAULT_EXACT_LIMIT,
            matching: MatchStrategy::Greedy,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        PathSimilarityConfig::new(self.alpha)?;
        if !(-1.0..=1.0).contains(&self.theta) {
            return Err(EvalError::InvalidConfig(format!("theta must lie in [-1, 1], got {}", self.theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl From<&MatchResult> for Counts {
    fn from(m: &MatchResult) -> Self {
        Self {
            tp: m.true_positives,
            fp: m.false_positives,
            fn_: m.false_negatives,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBlock {
    #[serde(flatten)]
    pub scores: Prf1,
    #[serde(flatten)]
    pub counts: Counts,
}

impl From<&MatchResult> for ScoreBlock {
    fn from(m: &MatchResult) -> Self {
        Self {
            scores: m.prf1(),
            counts: m.into(),
        }
    }
}

/// Every metric for one scenario. Metrics that could not be computed are
/// `None` and the reason is kept in `errors` under the field name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario: String,
    pub category: String,
    pub node: Option<ScoreBlock>,
    pub edge: Option<ScoreBlock>,
    pub tool: ScoreBlock,
    pub node_label_similarity: Option<f64>,
    pub ssi: Option<f64>,
    pub path_length_similarity: Option<f64>,
    pub alpha: f64,
    pub theta: f64,
    pub ged: Option<u32>,
    pub ged_exact: Option<bool>,
    pub expected_complexity: usize,
    pub actual_complexity: usize,
    pub answer_score: Option<f64>,
    pub embedding_model: String,
    pub judge: String,
    pub node_matches: Vec<MatchedPair>,
    pub errors: BTreeMap<String, String>,
}

pub const CSV_COLUMNS: [&str; 22] = [
    "scenario",
    "category",
    "node_precision",
    "node_recall",
    "node_f1",
    "edge_precision",
    "edge_recall",
    "edge_f1",
    "tool_precision",
    "tool_recall",
    "tool_f1",
    "node_label_similarity",
    "ssi",
    "path_length_similarity",
    "ged",
    "ged_exact",
    "expected_complexity",
    "actual_complexity",
    "answer_score",
    "theta",
    "alpha",
    "embedding_model",
];

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricReport {
    pub fn csv_row(&self) -> Vec<String> {
        let prf = |b: Option<&ScoreBlock>| {
            [
                cell(b.map(|b| b.scores.precision)),
                cell(b.map(|b| b.scores.recall)),
                cell(b.map(|b| b.scores.f1)),
            ]
        };
        let mut row = vec![self.scenario.clone(), self.category.clone()];
        row.extend(prf(self.node.as_ref()));
        row.extend(prf(self.edge.as_ref()));
        row.extend(prf(Some(&self.tool)));
        row.extend([
            cell(self.node_label_similarity),
            cell(self.ssi),
            cell(self.path_length_similarity),
            cell(self.ged),
            cell(self.ged_exact),
            self.expected_complexity.to_string(),
            self.actual_complexity.to_string(),
            cell(self.answer_score),
            self.theta.to_string(),
            self.alpha.to_string(),
            self.embedding_model.clone(),
        ]);
        row
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn write_csv<W: Write>(out: W, reports: &[MetricReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn evaluate_scenario(
    record: &ScenarioRecord,
    trace: &ExecutionTrace,
    provider: &dyn EmbeddingProvider,
    cfg: &EvalConfig,
    judge: &dyn Judge,
) -> MetricReport {
    let expected = &record.expected_graph;
    let actual = &trace.content.graph;
    let mut errors = BTreeMap::new();
    let mut report = MetricReport {
        scenario: record.name.clone(),
        category: record.category.to_string(),
        node: None,
        edge: None,
        tool: (&match_tools(&record.expected_tool_calls, &trace.tool_call_names())).into(),
        node_label_similarity: None,
        ssi: None,
        path_length_similarity: None,
        alpha: cfg.alpha,
        theta: cfg.theta,
        ged: None,
        ged_exact: None,
        expected_complexity: expected.complexity_score(),
        actual_complexity: actual.complexity_score(),
        answer_score: None,
        embedding_model: provider.model_id().to_string(),
        judge: judge.judge_id(),
        node_matches: Vec::new(),
        errors: BTreeMap::new(),
    };

    match score_answer(&record.gold_response, trace.final_answer(), judge) {
        Ok(s) => report.answer_score = Some(s),
        Err(e) => {
            errors.insert("answer_score".to_string(), e.to_string());
        }
    }

    match SimilarityMatrix::compute(expected, actual, provider) {
        Ok(sim) => {
            let nodes = match_nodes(&sim, cfg.theta, cfg.matching);
            let edges = match_edges(expected, actual, &nodes);
            let edge_f1 = edges.prf1().f1;
            match node_label_similarity_from(&sim) {
                Ok(nls) => {
                    report.node_label_similarity = Some(nls);
                    report.ssi = Some(ssi_from_components(nls, edge_f1));
                }
                Err(e) => {
                    errors.insert("node_label_similarity".to_string(), e.to_string());
                    errors.insert("ssi".to_string(), e.to_string());
                }
            }
            report.path_length_similarity = Some(path_length_similarity(
                expected,
                actual,
                &nodes,
                &PathSimilarityConfig { alpha: cfg.alpha },
            ));
            let ged = graph_edit_distance_from(expected, actual, &sim, cfg.theta, cfg.exact_ged_limit);
            report.ged = Some(ged.cost);
            report.ged_exact = Some(ged.exact);
            report.node = Some((&nodes).into());
            report.edge = Some((&edges).into());
            report.node_matches = nodes.pairs;
        }
        Err(e) => {
            for field in ["node", "edge", "node_label_similarity", "ssi", "path_length_similarity", "ged"] {
                errors.insert(field.to_string(), e.to_string());
            }
        }
    }
    report.errors = errors;
    report
}
