pub mod dataset;
pub mod eval;
pub mod report;
pub mod run;

use std::path::Path;
use std::sync::Arc;

use agentgraph::embedding::EmbeddingProvider;
use agentgraph::orchestration::{BackendConfig, BackendKind};
use agentgraph::ModelBackend;

use crate::{CliError, RunConfig};

pub(crate) fn provider(cfg: &RunConfig) -> Result<Arc<dyn EmbeddingProvider>, CliError> {
    cfg.embedding
        .build()
        .map(Arc::from)
        .map_err(|e| CliError::Config(format!("embedding provider: {e}")))
}

pub(crate) fn backend(cfg: &BackendConfig) -> Result<Arc<dyn ModelBackend>, CliError> {
    if cfg.kind == BackendKind::Scripted {
        if let Some(rules) = &cfg.rules {
            std::fs::metadata(rules).map_err(|e| CliError::io(rules, e))?;
        }
    }
    cfg.build().map_err(|e| CliError::Config(format!("backend: {e}")))
}

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
