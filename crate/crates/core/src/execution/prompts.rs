//! Prompts sent to the backend during execution, and the tool-call directive
//! format the backend answers with.
//!
//! A task response may contain one or more blocks of the form
//!
//! ```text
//! <tool_calls>
//! [{"tool": "weather", "arguments": {"city": "Paris"}}]
//! </tool_calls>
//! ```
//!
//! Everything outside the blocks is the task's textual result.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;

use crate::tools::ToolDeclaration;

pub const OPEN_TAG: &str = "<tool_calls>";
pub const CLOSE_TAG: &str = "</tool_calls>";

#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    pub task_id: String,
    pub label: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolDirective {
    pub tool: String,
    #[serde(default)]
    pub arguments: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub text: String,
    pub calls: Vec<ToolDirective>,
}

pub fn task_prompt(query: &str, label: &str, buffer: &[BufferEntry], tools: &[&ToolDeclaration]) -> String {
    let mut p = String::new();
    p.push_str("You are an agent executing one task from a task graph built for the user's query.\n\n");
    p.push_str(&format!("User Query: {query}\nTask: {label}\n\n"));
    p.push_str("Results of the tasks this task depends on:\n");
    if buffer.is_empty() {
        p.push_str("None.\n");
    }
    for entry in buffer {
        p.push_str(&format!("- [{}] {}: {}\n", entry.task_id, entry.label, entry.output));
    }
    p.push_str("\nAvailable tools:\n");
    if tools.is_empty() {
        p.push_str("None.\n");
    }
    for tool in tools {
        p.push_str(&format!("- {}: {}\n", tool.signature(), tool.description));
    }
    p.push_str(&format!(
        "\nTo call tools, include a block of the form\n{OPEN_TAG}\n[{{\"tool\": \"tool_name\", \"arguments\": {{\"param\": \"value\"}}}}]\n{CLOSE_TAG}\n\
         Any text outside the block is recorded as the task result.\n"
    ));
    p
}

/// Consolidation prompt; `results` are `(label, output)` in topological order.
pub fn consolidation_prompt(query: &str, results: &[(&str, &str)]) -> String {
    format!(
        "You are an assistant operating within an LLM-based Agentic Architecture.\n\
         Your task is to generate a final response to the user's query\n\
         by considering the results of multiple tasks.\n\
         These tasks were generated from the user's query\n\
         using a task graph. Ensure the final response\n\
         addresses all aspects of the user's query.\n\n\
         User Query: {query}\n\n\
         Task Results: {}\n\n\
         Generate a concise final response in 50 words or less.\n",
        format_results(results)
    )
}

pub fn feedback_prompt(task_label: &str) -> String {
    format!(
        "You are responsible for generating a short feedback phrase\n\
         for a task that is being processed.\n\
         The feedback should be friendly and let the user\n\
         know their task is in progress.\n\n\
         Task: {task_label}\n\n\
         Generate a new feedback phrase:\n"
    )
}

fn format_results(results: &[(&str, &str)]) -> String {
    results
        .iter()
        .map(|(label, output)| format!("\n- {label}: {output}"))
        .collect()
}

/// Label-prefixed concatenation used when the backend cannot consolidate.
pub fn concatenate_results(results: &[(&str, &str)]) -> String {
    results
        .iter()
        .map(|(label, output)| format!("{label}: {output}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn parse_task_response(response: &str) -> Result<ParsedResponse, String> {
    let mut text = String::new();
    let mut calls = Vec::new();
    let mut rest = response;
    while let Some(open) = rest.find(OPEN_TAG) {
        text.push_str(&rest[..open]);
        let after = &rest[open + OPEN_TAG.len()..];
        let close = after
            .find(CLOSE_TAG)
            .ok_or_else(|| format!("unterminated {OPEN_TAG} block"))?;
        let block: Vec<ToolDirective> = serde_json::from_str(after[..close].trim())
            .map_err(|e| format!("malformed tool call block: {e}"))?;
        calls.extend(block);
        rest = &after[close + CLOSE_TAG.len()..];
    }
    if rest.contains(CLOSE_TAG) {
        return Err(format!("{CLOSE_TAG} without opening tag"));
    }
    text.push_str(rest);
    let text = text.trim().to_string();
    if text.is_empty() && calls.is_empty() {
        return Err("empty response".into());
    }
    Ok(ParsedResponse { text, calls })
}
