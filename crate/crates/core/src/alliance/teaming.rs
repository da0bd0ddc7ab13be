//! Unsupervised agent teaming by agreement with the crowd.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::backend::AgentBackend;
use super::orchestrator::{explore_once, DeliberationConfig, QuestionContext};
use super::{AgentError, Question};
use crate::exec::Exec;
use crate::ingest::VideoSource;
use crate::partition::Partition;
use crate::selection::SimilarityPort;

pub struct TeamingSample {
    pub question: Question,
    pub video: VideoSource,
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTally {
    pub question_id: String,
    /// Share of answering agents per option; failed agents are left out.
    pub frequencies: Vec<f64>,
    /// Option index chosen by each agent, `None` on failure.
    pub choices: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamingReport {
    pub agents: Vec<String>,
    pub questions: Vec<QuestionTally>,
    pub scores: Vec<f64>,
    pub selected: Vec<String>,
}

impl TeamingReport {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// The selected agents from `library`, in rank order.
    pub fn pool<T: AsRef<str>>(&self, ids: &[T]) -> Vec<usize> {
        self.selected
            .iter()
            .filter_map(|s| ids.iter().position(|i| i.as_ref() == s))
            .collect()
    }
}

/// Per-question frequencies and per-agent scores `(1/K) Σ_q f_{q, r_q}`.
/// `choices[q][i]` is agent `i`'s option on question `q`.
pub fn teaming_scores(choices: &[Vec<Option<usize>>], option_counts: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let agents = choices.first().map_or(0, Vec::len);
    let k = choices.len().max(1) as f64;
    let mut scores = vec![0.0; agents];
    let mut freqs = Vec::with_capacity(choices.len());
    for (row, &c) in choices.iter().zip(option_counts) {
        let answered = row.iter().flatten().count();
        let mut f = vec![0.0; c];
        for &r in row.iter().flatten() {
            f[r] += 1.0;
        }
        if answered > 0 {
            f.iter_mut().for_each(|v| *v /= answered as f64);
        }
        for (i, r) in row.iter().enumerate() {
            if let Some(r) = r {
                scores[i] += f[*r];
            }
        }
        freqs.push(f);
    }
    scores.iter_mut().for_each(|s| *s /= k);
    (freqs, scores)
}

/// Indices of the `m` best scores, ties in library order.
pub fn top_m(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(m);
    order
}

/// Run every library agent once on every sample and keep the `m` that
/// agree most with the others.
pub fn team_agents(
    library: &[Arc<dyn AgentBackend>],
    samples: &[TeamingSample],
    similarity: &dyn SimilarityPort,
    m: usize,
    max_blocks: usize,
    cfg: &DeliberationConfig,
    exec: Exec,
) -> Result<TeamingReport, AgentError> {
    if samples.is_empty() {
        return Err(AgentError::NoSamples);
    }
    if m > library.len() || library.is_empty() {
        return Err(AgentError::TeamTooLarge {
            m,
            n: library.len(),
        });
    }
    let mut choices = Vec::with_capacity(samples.len());
    for s in samples {
        s.question.validate()?;
        let ctx = QuestionContext::new(&s.video, &s.partition, max_blocks, similarity);
        let rounds = exec.map(library, |agent| explore_once(&ctx, &s.question, agent.as_ref(), cfg));
        let mut row = Vec::with_capacity(library.len());
        for (agent, r) in library.iter().zip(rounds) {
            let choice = r?.answer.and_then(|a| s.question.label_index(&a));
            if choice.is_none() {
                log::warn!("teaming: agent {} failed on {}", agent.id(), s.question.id);
            }
            row.push(choice);
        }
        choices.push(row);
    }
    let counts: Vec<usize> = samples.iter().map(|s| s.question.options.len()).collect();
    let (freqs, scores) = teaming_scores(&choices, &counts);
    let agents: Vec<String> = library.iter().map(|a| a.id().to_string()).collect();
    let selected = top_m(&scores, m).into_iter().map(|i| agents[i].clone()).collect();
    Ok(TeamingReport {
        questions: samples
            .iter()
            .zip(freqs)
            .zip(choices)
            .map(|((s, frequencies), choices)| QuestionTally {
                question_id: s.question.id.clone(),
                frequencies,
                choices,
            })
            .collect(),
        agents,
        scores,
        selected,
    })
}
