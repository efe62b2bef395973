use std::path::{Path, PathBuf};
use std::str::FromStr;

use agentgraph::embedding::EmbeddingConfig;
use agentgraph::evaluation::{EvalConfig, MatchStrategy, DEFAULT_ALPHA, DEFAULT_EXACT_LIMIT, DEFAULT_THETA};
use agentgraph::execution::{ExecutionOptions, FeedbackSource};
use agentgraph::orchestration::{BackendConfig, BackendKind, DEFAULT_MAX_REPAIRS};
use agentgraph::tools::DEFAULT_TOOL_K;
use agentgraph::{DecompositionStrategy, ExecutionMode};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackChoice {
    #[default]
    Off,
    Canned,
    Backend,
}

impl FromStr for FeedbackChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Self::Off),
            "canned" => Ok(Self::Canned),
            "backend" => Ok(Self::Backend),
            other => Err(format!("unknown feedback source {other:?} (expected off, canned or backend)")),
        }
    }
}

/// The TOML configuration file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<BackendConfig>,
    pub embedding: Option<EmbeddingConfig>,
    pub strategy: Option<String>,
    pub mode: Option<String>,
    pub max_concurrency: Option<usize>,
    pub indirect_deps: Option<bool>,
    pub semantic_filtering: Option<bool>,
    pub feedback: Option<FeedbackChoice>,
    pub profile: Option<bool>,
    pub tool_k: Option<usize>,
    pub tool_min_sim: Option<f64>,
    pub max_repairs: Option<usize>,
    pub theta: Option<f64>,
    pub alpha: Option<f64>,
    pub matching: Option<MatchStrategy>,
    pub exact_ged_limit: Option<usize>,
    pub tools: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn parse_bool_flag(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(format!("expected true or false, got {other:?}")),
    }
}

/// Flags shared by the commands. Each one overrides the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct CommonFlags {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `scripted:<rules.json>` or `http`.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// coarse, fine, critical-path or default.
    #[arg(long, global = true)]
    pub strategy: Option<String>,
    /// seq or par.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Worker cap for parallel mode.
    #[arg(long, global = true)]
    pub max_concurrency: Option<usize>,
    /// Put every ancestor's result in a task's buffer, not only direct
    /// predecessors.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", value_parser = parse_bool_flag)]
    pub indirect_deps: Option<bool>,
    /// off, canned or backend.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "canned")]
    pub feedback: Option<String>,
    /// Print per-task timings to stderr.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", value_parser = parse_bool_flag)]
    pub profile: Option<bool>,
    /// Tools offered per task.
    #[arg(long, global = true)]
    pub tool_k: Option<usize>,
    /// Minimum task-tool similarity.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tool_min_sim: Option<f64>,
    /// Node match threshold.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Path length decay.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// greedy or optimal node matching.
    #[arg(long, global = true)]
    pub matching: Option<String>,
    /// Output path.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

/// Fully resolved settings: flag, then file, then built-in default.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub backend: Option<BackendConfig>,
    pub embedding: EmbeddingConfig,
    pub strategy: DecompositionStrategy,
    pub mode: ExecutionMode,
    pub max_concurrency: Option<usize>,
    pub indirect_deps: bool,
    pub semantic_filtering: bool,
    pub feedback: FeedbackChoice,
    pub profile: bool,
    pub tool_k: usize,
    pub tool_min_sim: f64,
    pub max_repairs: usize,
    pub theta: f64,
    pub alpha: f64,
    pub matching: MatchStrategy,
    pub exact_ged_limit: usize,
    pub tools: Option<PathBuf>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn parse_with<T: FromStr<Err = String>>(what: &str, s: &str) -> Result<T, CliError> {
    s.parse().map_err(|e: String| CliError::Config(format!("{what}: {e}")))
}

fn parse_backend_spec(spec: &str, base: BackendConfig) -> Result<BackendConfig, CliError> {
    if spec == "http" {
        return Ok(BackendConfig {
            kind: BackendKind::Http,
            ..base
        });
    }
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok(BackendConfig {
            kind: BackendKind::Scripted,
            rules: Some(PathBuf::from(path)),
            ..base
        });
    }
    Err(CliError::Config(format!(
        "--backend: expected scripted:<rules.json> or http, got {spec:?}"
    )))
}

impl RunConfig {
    pub fn resolve(flags: &CommonFlags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let backend = match &flags.backend {
            Some(spec) => Some(parse_backend_spec(spec, file.backend.clone().unwrap_or_default())?),
            None => file.backend.clone(),
        };
        let strategy = match flags.strategy.as_deref().or(file.strategy.as_deref()) {
            Some(s) => parse_with("strategy", s)?,
            None => DecompositionStrategy::Default,
        };
        let mode = match flags.mode.as_deref().or(file.mode.as_deref()) {
            Some(s) => parse_with("mode", s)?,
            None => ExecutionMode::Parallel,
        };
        let feedback = match &flags.feedback {
            Some(s) => parse_with("feedback", s)?,
            None => file.feedback.unwrap_or_default(),
        };
        let matching = match flags.matching.as_deref() {
            Some("greedy") => MatchStrategy::Greedy,
            Some("optimal") => MatchStrategy::Optimal,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "matching: expected greedy or optimal, got {other:?}"
                )))
            }
            None => file.matching.unwrap_or_default(),
        };
        let cfg = RunConfig {
            backend,
            embedding: file.embedding.clone().unwrap_or_default(),
            strategy,
            mode,
            max_concurrency: flags.max_concurrency.or(file.max_concurrency),
            indirect_deps: flags.indirect_deps.or(file.indirect_deps).unwrap_or(false),
            semantic_filtering: file.semantic_filtering.unwrap_or(true),
            feedback,
            profile: flags.profile.or(file.profile).unwrap_or(false),
            tool_k: flags.tool_k.or(file.tool_k).unwrap_or(DEFAULT_TOOL_K),
            tool_min_sim: flags.tool_min_sim.or(file.tool_min_sim).unwrap_or(0.0),
            max_repairs: file.max_repairs.unwrap_or(DEFAULT_MAX_REPAIRS),
            theta: flags.theta.or(file.theta).unwrap_or(DEFAULT_THETA),
            alpha: flags.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA),
            matching,
            exact_ged_limit: file.exact_ged_limit.unwrap_or(DEFAULT_EXACT_LIMIT),
            tools: file.tools,
            out: flags.out.clone().or(file.out),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.max_concurrency == Some(0) {
            return bad("max_concurrency must be at least 1".into());
        }
        if self.tool_k == 0 {
            return bad("tool_k must be at least 1".into());
        }
        if !(-1.0..=1.0).contains(&self.tool_min_sim) {
            return bad(format!("tool_min_sim must lie in [-1, 1], got {}", self.tool_min_sim));
        }
        if self.max_repairs > 10 {
            return bad(format!("max_repairs must be at most 10, got {}", self.max_repairs));
        }
        if self.backend.as_ref().is_some_and(|b| b.timeout_secs == 0) {
            return bad("backend timeout_secs must be positive".into());
        }
        self.eval_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn execution_options(&self) -> ExecutionOptions {
        ExecutionOptions {
            include_indirect_dependencies: self.indirect_deps,
            semantic_tool_filtering: self.semantic_filtering,
            tool_k: self.tool_k,
            tool_min_sim: self.tool_min_sim,
            max_concurrency: self.max_concurrency,
            feedback: match self.feedback {
                FeedbackChoice::Off => None,
                FeedbackChoice::Canned => Some(FeedbackSource::default()),
                FeedbackChoice::Backend => Some(FeedbackSource::Backend),
            },
            ..ExecutionOptions::default()
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            theta: self.theta,
            alpha: self.alpha,
            exact_ged_limit: self.exact_ged_limit,
            matching: self.matching,
        }
    }

    pub fn backend_config(&self) -> Result<&BackendConfig, CliError> {
        self.backend
            .as_ref()
            .ok_or_else(|| CliError::Config("no backend configured (use --backend or a [backend] table)".into()))
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
