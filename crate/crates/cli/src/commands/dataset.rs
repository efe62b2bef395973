use std::path::{Path, PathBuf};

use agentgraph::dataset::{build_scenario, load_scenarios, write_scenario, BuildOutcome, DatasetError, LoadReport, SourceDataset};
use rayon::prelude::*;

use super::{backend, provider, read_text};
use crate::{CliError, RunConfig};

fn dataset_error(e: DatasetError) -> CliError {
    match e {
        DatasetError::Io { path, source } => CliError::Io { path, source },
        other => {
            eprintln!("{other}");
            CliError::Diagnostics(1)
        }
    }
}

/// Builds one scenario directory per source scenario under `--out`.
pub fn cmd_build(input: &Path, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Config("dataset build needs --out".into()))?;
    let source = SourceDataset::from_json(&read_text(input)?, input).map_err(dataset_error)?;
    let provider = provider(cfg)?;
    let backend = cfg.backend.as_ref().map(backend).transpose()?;

    let built: Vec<Result<BuildOutcome, DatasetError>> = source
        .scenarios
        .par_iter()
        .map(|s| build_scenario(s, provider.as_ref(), backend.as_deref()))
        .collect();
    let mut failures = 0;
    let mut written = Vec::new();
    for outcome in built {
        match outcome {
            Ok(o) => {
                for d in &o.removed_duplicates {
                    eprintln!("{}: dropped near-duplicate tool {d:?}", o.record.name);
                }
                for f in &o.fallbacks {
                    eprintln!("{}: tool {} uses offline behavior ({})", o.record.name, f.tool, f.reason);
                }
                written.push(write_scenario(&o.record, &out).map_err(dataset_error)?);
            }
            Err(DatasetError::Io { path, source }) => return Err(CliError::Io { path, source }),
            Err(e) => {
                eprintln!("{e}");
                failures += 1;
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Diagnostics(failures));
    }
    println!("built {} scenario(s) in {}", written.len(), out.display());
    Ok(written)
}

/// Loads every scenario under `root`; any diagnostic fails the command.
pub fn cmd_validate(root: &Path) -> Result<LoadReport, CliError> {
    let report = load_scenarios(root).map_err(dataset_error)?;
    for d in &report.diagnostics {
        eprintln!("{d}");
    }
    if !report.is_clean() {
        return Err(CliError::Diagnostics(report.diagnostics.len()));
    }
    println!("{} scenario(s) valid", report.records.len());
    Ok(report)
}
