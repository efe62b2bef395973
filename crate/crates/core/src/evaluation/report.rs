//! Batch analysis of metric CSV files: per-category correlation of every
//! metric with the answer score and a least-squares fit over selected
//! features.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::stats::{ols_fit, pearson_r, Correlation};

pub const ANSWER_COLUMN: &str = "answer_score";

pub const METRIC_COLUMNS: [&str; 15] = [
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
    "expected_complexity",
    "actual_complexity",
];

/// SSI is left out because it is the mean of two other features.
pub const DEFAULT_FEATURES: [&str; 6] = [
    "node_label_similarity",
    "edge_f1",
    "node_f1",
    "tool_f1",
    "path_length_similarity",
    "expected_complexity",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub scenario: String,
    pub category: String,
    pub values: BTreeMap<String, Option<f64>>,
}

impl MetricRow {
    pub fn get(&self, column: &str) -> Option<f64> {
        self.values.get(column).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("row {row}, column {column}: {value:?} is not a number")]
    BadNumber { row: usize, column: String, value: String },
}

/// Reads a metric CSV. Blank cells become missing values; columns other than
/// scenario, category and the numeric metrics are ignored.
pub fn read_metric_csv<R: Read>(input: R) -> Result<MetricTable, TableError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TableError::MissingColumn(name.to_string()))
    };
    let scenario_at = position("scenario")?;
    let category_at = position("category")?;
    let answer_at = position(ANSWER_COLUMN)?;
    let numeric: Vec<(String, usize)> = METRIC_COLUMNS
        .iter()
        .filter_map(|c| headers.iter().position(|h| h == *c).map(|i| (c.to_string(), i)))
        .chain([(ANSWER_COLUMN.to_string(), answer_at)])
        .collect();
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record?;
        let mut values = BTreeMap::new();
        for (name, at) in &numeric {
            let raw = record.get(*at).unwrap_or("").trim();
            let value = if raw.is_empty() {
                None
            } else {
                Some(raw.parse::<f64>().map_err(|_| TableError::BadNumber {
                    row: n + 1,
                    column: name.clone(),
                    value: raw.to_string(),
                })?)
            };
            values.insert(name.clone(), value);
        }
        rows.push(MetricRow {
            scenario: record.get(scenario_at).unwrap_or("").to_string(),
            category: record.get(category_at).unwrap_or("").to_string(),
            values,
        });
    }
    Ok(MetricTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCorrelation {
    pub metric: String,
    pub correlation: Option<Correlation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub r_squared: f64,
    pub intercept: f64,
    pub coefficients: BTreeMap<String, f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAnalysis {
    pub category: String,
    pub rows: usize,
    pub correlations: Vec<MetricCorrelation>,
    pub regression: Option<RegressionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub target: String,
    pub features: Vec<String>,
    pub categories: Vec<CategoryAnalysis>,
}

fn analyze_group(category: &str, rows: &[&MetricRow], features: &[String]) -> CategoryAnalysis {
    let correlations = METRIC_COLUMNS
        .iter()
        .map(|metric| {
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|r| Some((r.get(metric)?, r.get(ANSWER_COLUMN)?)))
                .unzip();
            match pearson_r(&x, &y) {
                Ok(c) => MetricCorrelation {
                    metric: metric.to_string(),
                    correlation: Some(c),
                    note: None,
                },
                Err(e) => MetricCorrelation {
                    metric: metric.to_string(),
                    correlation: None,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect();

    let complete: Vec<(Vec<f64>, f64)> = rows
        .iter()
        .filter_map(|r| {
            let x = features.iter().map(|f| r.get(f)).collect::<Option<Vec<f64>>>()?;
            Some((x, r.get(ANSWER_COLUMN)?))
        })
        .collect();
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = complete.into_iter().unzip();
    let (regression, regression_note) = match ols_fit(&x, &y) {
        Ok(fit) => (
            Some(RegressionSummary {
                r_squared: fit.r_squared,
                intercept: fit.intercept,
                coefficients: features.iter().cloned().zip(fit.coefficients).collect(),
                n: y.len(),
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };
    CategoryAnalysis {
        category: category.to_string(),
        rows: rows.len(),
        correlations,
        regression,
        regression_note,
    }
}

/// One analysis per category (sorted by name) followed by one over all rows.
pub fn analyze(table: &MetricTable, features: &[String]) -> AnalysisReport {
    let mut by_category: BTreeMap<&str, Vec<&MetricRow>> = BTreeMap::new();
    for row in &table.rows {
        by_category.entry(row.category.as_str()).or_default().push(row);
    }
    let mut categories: Vec<CategoryAnalysis> = by_category
        .iter()
        .map(|(c, rows)| analyze_group(c, rows, features))
        .collect();
    let all: Vec<&MetricRow> = table.rows.iter().collect();
    categories.push(analyze_group("all", &all, features));
    AnalysisReport {
        target: ANSWER_COLUMN.to_string(),
        features: features.to_vec(),
        categories,
    }
}

impl AnalysisReport {
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("analysis serializes");
        s.push('\n');
        s
    }

    /// Plain-text table: one block per category, blank cells for metrics
    /// whose correlation is undefined.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        for c in &self.categories {
            let _ = writeln!(out, "category: {} ({} rows)", c.category, c.rows);
            let _ = writeln!(out, "  {:<24} {:>9} {:>11}", "metric", "r", "p");
            for m in &c.correlations {
                let (r, p) = match &m.correlation {
                    Some(k) => (format!("{:.4}", k.r), format!("{:.3e}", k.p_value)),
                    None => (String::new(), String::new()),
                };
                let _ = writeln!(out, "  {:<24} {:>9} {:>11}", m.metric, r, p);
            }
            match &c.regression {
                Some(fit) => {
                    let _ = writeln!(out, "  OLS R^2 = {:.4} (n = {})", fit.r_squared, fit.n);
                }
                None => {
                    let _ = writeln!(out, "  OLS R^2 = ");
                }
            }
            out.push('\n');
        }
        out
    }
}
