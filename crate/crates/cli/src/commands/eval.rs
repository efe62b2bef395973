use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use agentgraph::dataset::load_scenarios;
use agentgraph::evaluation::{evaluate_scenario, write_csv, BackendJudge, Judge, MetricReport, TokenF1Judge};
use agentgraph::ExecutionTrace;
use rayon::prelude::*;

use super::{backend, provider, write_text};
use crate::{CliError, EvalArgs, RunConfig};

pub const DEFAULT_EVAL_DIR: &str = "eval";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug)]
pub struct EvalOutcome {
    pub reports: Vec<MetricReport>,
    pub unpaired_scenarios: Vec<String>,
    pub unpaired_traces: Vec<String>,
    pub out_dir: PathBuf,
}

fn trace_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

fn judge(name: &str, cfg: &RunConfig) -> Result<Box<dyn Judge + Send + Sync>, CliError> {
    match name {
        "token-f1" => Ok(Box::new(TokenF1Judge)),
        "backend" => Ok(Box::new(BackendJudge::new(backend(cfg.backend_config()?)?))),
        other => Err(CliError::Config(format!("judge: expected token-f1 or backend, got {other:?}"))),
    }
}

/// Pairs traces with scenarios by name, scores every pair and writes one
/// report per scenario plus an aggregate CSV.
pub fn cmd_eval(args: &EvalArgs, cfg: &RunConfig) -> Result<EvalOutcome, CliError> {
    let eval_cfg = cfg.eval_config();
    let judge = judge(&args.judge, cfg)?;
    let provider = provider(cfg)?;
    let loaded = load_scenarios(&args.scenarios).map_err(|e| match e {
        agentgraph::dataset::DatasetError::Io { path, source } => CliError::Io { path, source },
        other => CliError::Config(other.to_string()),
    })?;
    for d in &loaded.diagnostics {
        eprintln!("warning: skipping scenario {d}");
    }
    let mut traces = trace_files(&args.traces)?;

    let mut pairs = Vec::new();
    let mut unpaired_scenarios = Vec::new();
    for record in &loaded.records {
        match traces.remove(&record.name) {
            Some(path) => pairs.push((record, path)),
            None => unpaired_scenarios.push(record.name.clone()),
        }
    }
    let unpaired_traces: Vec<String> = traces.into_keys().collect();
    for name in &unpaired_scenarios {
        eprintln!("warning: scenario {name} has no trace");
    }
    for name in &unpaired_traces {
        eprintln!("warning: trace {name} has no scenario");
    }

    let results: Vec<Result<MetricReport, String>> = pairs
        .par_iter()
        .map(|(record, path)| {
            let trace = ExecutionTrace::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
            Ok(evaluate_scenario(record, &trace, provider.as_ref(), &eval_cfg, judge.as_ref()))
        })
        .collect();
    let mut reports = Vec::new();
    for r in results {
        match r {
            Ok(report) => reports.push(report),
            Err(e) => eprintln!("warning: {e}"),
        }
    }
    if reports.is_empty() {
        return Err(CliError::NoEvalPair(format!(
            "no scenario/trace pair could be evaluated ({} scenario(s) in {}, traces in {})",
            loaded.records.len(),
            args.scenarios.display(),
            args.traces.display()
        )));
    }

    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_EVAL_DIR));
    for report in &reports {
        write_text(&out_dir.join(format!("{}.report.json", report.scenario)), &report.to_json_pretty())?;
    }
    let mut csv = Vec::new();
    write_csv(&mut csv, &reports).map_err(|e| CliError::Config(e.to_string()))?;
    write_text(&out_dir.join(METRICS_FILE), &String::from_utf8(csv).expect("csv is utf-8"))?;
    println!("evaluated {} scenario(s); wrote {}", reports.len(), out_dir.display());
    Ok(EvalOutcome {
        reports,
        unpaired_scenarios,
        unpaired_traces,
        out_dir,
    })
}
