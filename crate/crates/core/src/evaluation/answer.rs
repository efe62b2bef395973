//! Scoring a final answer against a gold response.

use std::collections::HashMap;

use thiserror::Error;

use crate::embedding::tokenize;
use crate::orchestration::{extract_json_object, ModelBackend};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JudgeError {
    #[error("gold response is empty")]
    EmptyGold,
    #[error("judge backend failed: {0}")]
    Backend(String),
    #[error("judge reply has no usable score: {0}")]
    BadReply(String),
}

pub trait Judge: Send + Sync {
    fn score(&self, gold: &str, actual: &str) -> Result<f64, JudgeError>;

    fn judge_id(&self) -> String;
}

/// Token-level F1 after lowercasing and punctuation stripping.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenF1Judge;

impl Judge for TokenF1Judge {
    fn score(&self, gold: &str, actual: &str) -> Result<f64, JudgeError> {
        token_f1(gold, actual)
    }

    fn judge_id(&self) -> String {
        "token-f1".into()
    }
}

pub fn token_f1(gold: &str, actual: &str) -> Result<f64, JudgeError> {
    let gold = tokenize(gold);
    if gold.is_empty() {
        return Err(JudgeError::EmptyGold);
    }
    let actual = tokenize(actual);
    if actual.is_empty() {
        return Ok(0.0);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut shared = 0usize;
    for t in &actual {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                shared += 1;
            }
        }
    }
    if shared == 0 {
        return Ok(0.0);
    }
    let precision = shared as f64 / actual.len() as f64;
    let recall = shared as f64 / gold.len() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

pub fn score_answer(gold: &str, actual: &str, judge: &dyn Judge) -> Result<f64, JudgeError> {
    if gold.trim().is_empty() {
        return Err(JudgeError::EmptyGold);
    }
    judge.score(gold, actual)
}

/// Asks a model backend to grade the answer. The reply must contain a JSON
/// object `{"score": <number in [0, 1]>}`.
pub struct BackendJudge<B> {
    backend: B,
}

impl<B: ModelBackend> BackendJudge<B> {
    pub fn new(backend: B) -> Self {
        Self { backend }
    }

    pub fn prompt(gold: &str, actual: &str) -> String {
        format!(
            "Rate how well the candidate answer matches the reference answer.\n\n\
             Reference: {gold}\n\
             Candidate: {actual}\n\n\
             Reply with a JSON object {{\"score\": x}} where x is between 0 and 1.\n"
        )
    }
}

impl<B: ModelBackend> Judge for BackendJudge<B> {
    fn score(&self, gold: &str, actual: &str) -> Result<f64, JudgeError> {
        let reply = self
            .backend
            .complete(&Self::prompt(gold, actual))
            .map_err(|e| JudgeError::Backend(e.to_string()))?;
        let object = extract_json_object(&reply).ok_or_else(|| JudgeError::BadReply(reply.clone()))?;
        let value: serde_json::Value =
            serde_json::from_str(object).map_err(|e| JudgeError::BadReply(e.to_string()))?;
        match value.get("score").and_then(serde_json::Value::as_f64) {
            Some(s) if (0.0..=1.0).contains(&s) => Ok(s),
            _ => Err(JudgeError::BadReply(reply)),
        }
    }

    fn judge_id(&self) -> String {
        format!("backend:{}", self.backend.backend_id())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestration::ScriptedBackend;

    #[test]
    fn token_f1_examples() {
        assert_eq!(token_f1("Sunrise at 06:42", "sunrise AT 06:42!").unwrap(), 1.0);
        assert_eq!(token_f1("boil water", "book flight").unwrap(), 0.0);
        assert_eq!(token_f1("boil water", "").unwrap(), 0.0);
        assert_eq!(token_f1("  ", "x"), Err(JudgeError::EmptyGold));
    }

    #[test]
    fn token_f1_partial_overlap() {
        // gold tokens: sunrise at 06 42; actual: the sunrise is at 06 42.
        // shared 4, precision 4/6, recall 4/4.
        let p = 4.0 / 6.0;
        let oracle = 2.0 * p * 1.0 / (p + 1.0);
        let got = token_f1("sunrise at 06:42", "the sunrise is at 06:42").unwrap();
        assert!((got - oracle).abs() < 1e-15);
        assert!((got - 0.8).abs() < 1e-12);
    }

    #[test]
    fn repeated_tokens_count_once_per_occurrence() {
        // gold: a a b, actual: a a a. shared 2, precision 2/3, recall 2/3.
        let got = token_f1("a a b", "a a a").unwrap();
        assert!((got - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn backend_judge_parses_score() {
        let judge = BackendJudge::new(ScriptedBackend::new().when_contains("Reference: x", "{\"score\": 0.25}"));
        assert_eq!(judge.score("x", "y").unwrap(), 0.25);
        let bad = BackendJudge::new(ScriptedBackend::new().with_fallback("{\"score\": 7}"));
        assert!(matches!(bad.score("x", "y"), Err(JudgeError::BadReply(_))));
        let silent = BackendJudge::new(ScriptedBackend::new());
        assert!(matches!(silent.score("x", "y"), Err(JudgeError::Backend(_))));
    }
}
