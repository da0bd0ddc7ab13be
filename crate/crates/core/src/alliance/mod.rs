//! Multi-agent deliberation: backends, prompts, teaming and the round loop.

mod backend;
mod orchestrator;
mod parse;
pub mod prompts;
mod teaming;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    scripted_pool, total_calls, AgentBackend, AgentRequest, AgentScript, Capability, ChatBackend,
    ChatEndpoint, ScriptEntry, ScriptedBackend,
};
pub use orchestrator::{
    check_consensus, column_sums, prune_index, run_question, AgentRound, ConsensusMode,
    Deliberation, DeliberationConfig, DeliberationTrace, QuestionContext, RoundRecord, RoundTiming,
    StopMode,
};
pub use parse::{parse_answer, parse_ratings, ParsedRatings, DEFAULT_RATING};
pub use teaming::{team_agents, teaming_scores, top_m, QuestionTally, TeamingReport, TeamingSample};

use crate::selection::SelectionError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("question {0}: {1}")]
    InvalidQuestion(String, String),
    #[error("empty agent pool")]
    EmptyPool,
    #[error("cannot select {m} agents from a library of {n}")]
    TeamTooLarge { m: usize, n: usize },
    #[error("teaming needs at least one sample")]
    NoSamples,
    #[error("question {question}: selection failed: {source}")]
    Selection {
        question: String,
        #[source]
        source: SelectionError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub options: Vec<String>,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtitles: Option<String>,
}

/// `A`, `B`, ... `Z`, then `AA`, `AB`, ...
pub fn option_label(i: usize) -> String {
    let letter = |k: usize| (b'A' + k as u8) as char;
    if i < 26 {
        letter(i).to_string()
    } else {
        format!("{}{}", letter(i / 26 - 1), letter(i % 26))
    }
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        options: Vec<String>,
    ) -> Result<Self, AgentError> {
        let labels = (0..options.len()).map(option_label).collect();
        let q = Self {
            id: id.into(),
            text: text.into(),
            options,
            labels,
            subtitles: None,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_subtitles(mut self, subtitles: Option<String>) -> Self {
        self.subtitles = subtitles.filter(|s| !s.trim().is_empty());
        self
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidQuestion(self.id.clone(), m.to_string()));
        if self.options.len() < 2 {
            return bad("needs at least two options");
        }
        if self.labels.len() != self.options.len() {
            return bad("label count differs from option count");
        }
        let mut seen = self.labels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.labels.len() {
            return bad("duplicate option labels");
        }
        Ok(())
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn options_block(&self) -> String {
        self.labels
            .iter()
            .zip(&self.options)
            .map(|(l, o)| format!("{l}) {o}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn subtitles_block(&self) -> String {
        match &self.subtitles {
            Some(s) => format!("Subtitles: {s}\n"),
            None => String::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_validation() {
        let q = Question::new("q", "?", vec!["x".into(), "y".into(), "z".into()]).unwrap();
        assert_eq!(q.labels, ["A", "B", "C"]);
        assert_eq!(q.options_block(), "A) x\nB) y\nC) z");
        assert!(Question::new("q", "?", vec!["x".into()]).is_err());
        let mut dup = q.clone();
        dup.labels[2] = "A".into();
        assert!(dup.validate().is_err());
        assert_eq!(option_label(27), "AB");
    }
}
