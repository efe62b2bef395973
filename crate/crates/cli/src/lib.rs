//! Command-line front end: run queries, evaluate traces, analyze metric
//! tables and build scenario datasets.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{CommonFlags, FeedbackChoice, FileConfig, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ORCHESTRATION: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_NO_EVAL_PAIR: i32 = 5;
pub const EXIT_DIAGNOSTICS: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("orchestration failed: {0}")]
    Orchestration(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    NoEvalPair(String),
    #[error("{0} validation diagnostic(s)")]
    Diagnostics(usize),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Orchestration(_) => EXIT_ORCHESTRATION,
            Self::Config(_) => EXIT_CONFIG,
            Self::Io { .. } => EXIT_IO,
            Self::NoEvalPair(_) => EXIT_NO_EVAL_PAIR,
            Self::Diagnostics(_) => EXIT_DIAGNOSTICS,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "agentgraph", version, about = "Task-graph agents: run, evaluate, analyze")]
pub struct Cli {
    #[command(flatten)]
    pub flags: CommonFlags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose a query, execute the task graph and write a trace.
    Run(RunArgs),
    /// Score traces against scenarios and write reports plus metrics.csv.
    Eval(EvalArgs),
    /// Correlate metrics with answer scores per category.
    Report(ReportArgs),
    /// Build or validate scenario directories.
    #[command(subcommand)]
    Dataset(DatasetCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// The user query.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    pub query: Option<String>,
    /// Scenario directory supplying query.txt and tools.json.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Tool manifest (JSON).
    #[arg(long)]
    pub tools: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Directory of `<scenario>.json` traces.
    #[arg(long)]
    pub traces: PathBuf,
    /// token-f1 or backend.
    #[arg(long, default_value = "token-f1")]
    pub judge: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// Regression features, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Turn a source file into scenario directories under --out.
    Build {
        #[arg(long)]
        input: PathBuf,
    },
    /// Load every scenario under --root and report problems.
    Validate {
        #[arg(long)]
        root: PathBuf,
    },
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    match cli.command {
        Command::Run(args) => commands::run::cmd_run(&args, &cfg).map(|_| ()),
        Command::Eval(args) => commands::eval::cmd_eval(&args, &cfg).map(|_| ()),
        Command::Report(args) => commands::report::cmd_report(&args, &cfg).map(|_| ()),
        Command::Dataset(DatasetCommand::Build { input }) => commands::dataset::cmd_build(&input, &cfg).map(|_| ()),
        Command::Dataset(DatasetCommand::Validate { root }) => commands::dataset::cmd_validate(&root).map(|_| ()),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
