use std::path::PathBuf;

use agentgraph::evaluation::{analyze, read_metric_csv, AnalysisReport, TableError, DEFAULT_FEATURES, METRIC_COLUMNS};

use super::write_text;
use crate::{CliError, ReportArgs, RunConfig};

pub const ANALYSIS_FILE: &str = "analysis.json";

/// Correlations and regression per category, printed and written as JSON.
pub fn cmd_report(args: &ReportArgs, cfg: &RunConfig) -> Result<AnalysisReport, CliError> {
    let features: Vec<String> = match &args.features {
        Some(f) => f.iter().map(|s| s.trim().to_string()).collect(),
        None => DEFAULT_FEATURES.iter().map(|s| s.to_string()).collect(),
    };
    if let Some(bad) = features.iter().find(|f| !METRIC_COLUMNS.contains(&f.as_str())) {
        return Err(CliError::Config(format!(
            "unknown feature {bad:?}; choose from {}",
            METRIC_COLUMNS.join(", ")
        )));
    }
    let file = std::fs::File::open(&args.csv).map_err(|e| CliError::io(&args.csv, e))?;
    let table = read_metric_csv(file).map_err(|e| match e {
        TableError::Csv(e) => CliError::io(&args.csv, std::io::Error::new(std::io::ErrorKind::InvalidData, e)),
        other => CliError::io(&args.csv, std::io::Error::new(std::io::ErrorKind::InvalidData, other.to_string())),
    })?;
    let report = analyze(&table, &features);
    print!("{}", report.render_table());
    let out = cfg.out.clone().unwrap_or_else(|| {
        args.csv
            .parent()
            .map(|p| p.join(ANALYSIS_FILE))
            .unwrap_or_else(|| PathBuf::from(ANALYSIS_FILE))
    });
    write_text(&out, &report.to_json_pretty())?;
    Ok(report)
}
