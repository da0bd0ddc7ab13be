//! The perception-action round loop for one question.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::backend::{AgentBackend, AgentRequest, Capability};
use super::parse::{parse_answer, parse_ratings};
use super::prompts::{self, render};
use super::{AgentError, Question};
use crate::exec::Exec;
use crate::ingest::{decode_indices, FrameRecord, VideoSource};
use crate::partition::Partition;
use crate::rng;
use crate::selection::{
    allocate_frames, block_members, sample_p1, sample_p2, score_blocks, ActionMode, PreviewMode,
    SelectionError, SimilarityPort, DEFAULT_RHO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsensusMode {
    #[default]
    Full,
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StopMode {
    /// Prune the lowest-rated agent each round until consensus.
    #[default]
    Prune,
    /// As `Prune`, but stop after `max_rounds` and take the majority answer.
    FixedRounds { max_rounds: u32 },
    /// Never prune; answer with the highest summed score.
    NoPruneSum,
    /// Never prune; answer with the most frequent answer.
    NoPruneMaj,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeliberationConfig {
    pub n1: usize,
    pub n2: usize,
    pub rho: f64,
    pub frames_per_block: usize,
    pub preview: PreviewMode,
    pub action: ActionMode,
    pub consensus: ConsensusMode,
    pub stop: StopMode,
    pub seed: u64,
}

impl Default for DeliberationConfig {
    fn default() -> Self {
        Self {
            n1: 4,
            n2: 16,
            rho: DEFAULT_RHO,
            frames_per_block: 4,
            preview: PreviewMode::default(),
            action: ActionMode::default(),
            consensus: ConsensusMode::default(),
            stop: StopMode::default(),
            seed: 0,
        }
    }
}

/// The video side of a question: frames, event partition, and the
/// equal-length partition used by the uniform-block sampling mode.
pub struct QuestionContext<'a> {
    pub video: &'a VideoSource,
    pub partition: &'a Partition,
    pub uniform: Partition,
    pub similarity: &'a dyn SimilarityPort,
}

impl<'a> QuestionContext<'a> {
    pub fn new(
        video: &'a VideoSource,
        partition: &'a Partition,
        max_blocks: usize,
        similarity: &'a dyn SimilarityPort,
    ) -> Self {
        Self {
            video,
            partition,
            uniform: Partition::uniform(video.duration(), max_blocks.max(1))
                .unwrap_or_else(|_| partition.clone()),
            similarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRound {
    pub agent: String,
    pub clue: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preview_frames: Option<Vec<usize>>,
    pub block_scores: Vec<f64>,
    pub allocation: Vec<usize>,
    pub action_frames: Vec<usize>,
    pub completion: String,
    pub retried: bool,
    pub answer: Option<String>,
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub agents: Vec<AgentRound>,
    pub consensus: Option<String>,
    /// `ratings[rater][ratee]`, in pool order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratings: Option<Vec<Vec<u8>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column_sums: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruned: Option<String>,
}

impl RoundRecord {
    pub fn answers(&self) -> Vec<Option<String>> {
        self.agents.iter().map(|a| a.answer.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliberationTrace {
    pub question_id: String,
    pub video_id: String,
    pub boundaries: Vec<f64>,
    pub pool: Vec<String>,
    pub rounds: Vec<RoundRecord>,
    pub final_answer: Option<String>,
    pub stop: String,
    pub explanation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DeliberationTrace {
    pub fn prunings(&self) -> usize {
        self.rounds.iter().filter(|r| r.pruned.is_some()).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RoundTiming {
    /// Summed block scoring time across agents.
    pub scoring_seconds: f64,
    /// Wall time of the whole round.
    pub round_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Deliberation {
    pub trace: DeliberationTrace,
    pub rounds: Vec<RoundTiming>,
}

pub fn check_consensus(answers: &[Option<String>], mode: ConsensusMode) -> Option<String> {
    let first = answers.first()?.as_ref()?;
    match mode {
        ConsensusMode::Full => answers
            .iter()
            .all(|a| a.as_ref() == Some(first))
            .then(|| first.clone()),
        ConsensusMode::Majority => {
            let (label, count) = tally(answers).into_iter().next()?;
            (2 * count > answers.len()).then_some(label)
        }
    }
}

/// Valid answers with counts, most frequent first, then first appearance.
fn tally(answers: &[Option<String>]) -> Vec<(String, usize)> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for a in answers.iter().flatten() {
        match counts.iter_mut().find(|(l, _)| l == a) {
            Some((_, c)) => *c += 1,
            None => counts.push((a.clone(), 1)),
        }
    }
    counts.sort_by_key(|x| std::cmp::Reverse(x.1));
    counts
}

pub fn column_sums(ratings: &[Vec<u8>]) -> Vec<u32> {
    let n = ratings.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| ratings.iter().map(|row| row[i] as u32).sum())
        .collect()
}

/// Agent to remove: the first failed one, else the lowest column sum with
/// ties going to the lowest index.
pub fn prune_index(sums: &[u32], failed: &[bool]) -> usize {
    if let Some(i) = failed.iter().position(|&f| f) {
        return i;
    }
    let mut best = 0;
    for (i, &s) in sums.iter().enumerate() {
        if s < sums[best] {
            best = i;
        }
    }
    best
}

/// Summed score of each answer's supporters, best first (ties: earliest supporter).
fn answer_scores(answers: &[Option<String>], sums: &[u32]) -> Vec<(String, u32)> {
    let mut out: Vec<(String, u32, usize)> = Vec::new();
    for (i, a) in answers.iter().enumerate() {
        let Some(a) = a else { continue };
        match out.iter_mut().find(|(l, _, _)| l == a) {
            Some(e) => e.1 += sums[i],
            None => out.push((a.clone(), sums[i], i)),
        }
    }
    out.sort_by(|x, y| y.1.cmp(&x.1).then(x.2.cmp(&y.2)));
    out.into_iter().map(|(l, s, _)| (l, s)).collect()
}

/// Most frequent answer; ties go to the higher summed score.
fn majority_answer(answers: &[Option<String>], sums: &[u32]) -> Option<String> {
    let counts = tally(answers);
    let top = counts.first()?.1;
    answer_scores(answers, sums)
        .into_iter()
        .find(|(l, _)| counts.iter().any(|(c, n)| c == l && *n == top))
        .map(|(l, _)| l)
}

fn responses_block(agents: &[AgentRound]) -> String {
    agents
        .iter()
        .enumerate()
        .map(|(i, a)| match &a.answer {
            Some(ans) => format!("Agent {}: answer {ans}. Reason: {}", i + 1, a.reason.trim()),
            None => format!("Agent {}: no valid answer.", i + 1),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

struct Explorer<'a> {
    ctx: &'a QuestionContext<'a>,
    question: &'a Question,
    cfg: &'a DeliberationConfig,
}

struct Explored {
    record: AgentRound,
    scoring_seconds: f64,
}

impl Explorer<'_> {
    fn seed(&self, agent: &dyn AgentBackend, round: u32) -> u64 {
        rng::derive(&[
            self.cfg.seed,
            rng::hash_str(&self.question.id),
            rng::hash_str(agent.id()),
            round as u64,
        ])
    }

    fn call(
        &self,
        agent: &dyn AgentBackend,
        capability: Capability,
        round: u32,
        prompt: String,
        frames: &[FrameRecord],
    ) -> Result<String, String> {
        let req = AgentRequest {
            question_id: &self.question.id,
            capability,
            round,
            retry: false,
            prompt,
            frames,
        };
        agent.complete(&req).map_err(|e| e.to_string())
    }

    fn decode(&self, indices: &[usize]) -> Result<Vec<FrameRecord>, AgentError> {
        decode_indices(self.ctx.video, indices, Exec::Sequential).map_err(|e| {
            AgentError::Selection {
                question: self.question.id.clone(),
                source: SelectionError::Ingest(e),
            }
        })
    }

    /// Steps 1.1 (round 1 only), 1.2 and 2.1 for one agent.
    fn explore(
        &self,
        agent: &dyn AgentBackend,
        round: u32,
        prior_clue: Option<&str>,
        with_reason: bool,
    ) -> Result<Explored, AgentError> {
        let q = self.question;
        let seed = self.seed(agent, round);
        let sel_err = |source| AgentError::Selection {
            question: q.id.clone(),
            source,
        };
        let video = self.ctx.video;
        let options = q.options_block();
        let subtitles = q.subtitles_block();
        let mut preview_frames = None;
        let clue = match prior_clue {
            Some(c) => c.to_string(),
            None => {
                let members = block_members(video.timestamps(), self.ctx.partition);
                let picks = sample_p1(
                    video.frame_count(),
                    self.cfg.n1.min(video.frame_count()),
                    self.cfg.preview,
                    &members,
                    seed,
                )
                .map_err(sel_err)?;
                let frames = self.decode(&picks)?;
                let n = frames.len().to_string();
                let prompt = render(
                    prompts::CLUE,
                    &[
                        ("frame_count", &n),
                        ("subtitles", &subtitles),
                        ("question", &q.text),
                        ("options", &options),
                    ],
                );
                preview_frames = Some(picks);
                match self.call(agent, Capability::Clue, round, prompt, &frames) {
                    Ok(c) if !c.trim().is_empty() => c.trim().to_string(),
                    other => {
                        log::warn!(
                            "{}: agent {} gave no clue ({:?}); using the question",
                            q.id,
                            agent.id(),
                            other.err()
                        );
                        q.text.clone()
                    }
                }
            }
        };

        let scoring_started = Instant::now();
        let partition = match self.cfg.action {
            ActionMode::EventBlocks => self.ctx.partition,
            ActionMode::UniformBlocks => &self.ctx.uniform,
        };
        let scores = score_blocks(
            video,
            partition,
            &clue,
            self.ctx.similarity,
            self.cfg.frames_per_block,
            seed,
            Exec::Sequential,
        )
        .map_err(sel_err)?;
        let allocation = allocate_frames(&scores.scores, self.cfg.n2, self.cfg.rho, seed);
        let members = block_members(video.timestamps(), partition);
        let action_frames = sample_p2(&allocation, &members, &scores.scores, seed);
        let scoring_seconds = scoring_started.elapsed().as_secs_f64();
        let frames = self.decode(&action_frames)?;

        let n = frames.len().to_string();
        let prompt = render(
            prompts::ACT,
            &[
                ("frame_count", &n),
                ("subtitles", &subtitles),
                ("question", &q.text),
                ("options", &options),
            ],
        );
        let mut record = AgentRound {
            agent: agent.id().to_string(),
            clue,
            preview_frames,
            block_scores: scores.scores,
            allocation: allocation.counts,
            action_frames,
            completion: String::new(),
            retried: false,
            answer: None,
            reason: String::new(),
            failure: None,
        };
        let first = self.call(agent, Capability::Act, round, prompt, &frames);
        let mut answer = first
            .as_ref()
            .ok()
            .and_then(|c| parse_answer(c, &q.labels, &q.options));
        record.completion = first.clone().unwrap_or_default();
        if answer.is_none() {
            record.retried = true;
            let labels = q.labels.join(", ");
            let req = AgentRequest {
                question_id: &q.id,
                capability: Capability::Act,
                round,
                retry: true,
                prompt: render(
                    prompts::ACT_RETRY,
                    &[("question", &q.text), ("options", &options), ("labels", &labels)],
                ),
                frames: &frames,
            };
            match agent.complete(&req) {
                Ok(c) => {
                    answer = parse_answer(&c, &q.labels, &q.options);
                    record.completion = c;
                    if answer.is_none() {
                        record.failure = Some("unparseable answer after retry".into());
                    }
                }
                Err(e) => record.failure = Some(e.to_string()),
            }
        }
        record.answer = answer;
        if let (Some(ans), true) = (&record.answer, with_reason) {
            let prompt = render(
                prompts::REASON,
                &[("frame_count", &n), ("question", &q.text), ("answer", ans)],
            );
            record.reason = self
                .call(agent, Capability::Reason, round, prompt, &frames)
                .unwrap_or_else(|e| {
                    log::warn!("{}: agent {} reason failed: {e}", q.id, agent.id());
                    String::new()
                });
        }
        Ok(Explored {
            record,
            scoring_seconds,
        })
    }

    fn rate(&self, agent: &dyn AgentBackend, round: u32, agents: &[AgentRound]) -> Vec<u8> {
        let prompt = render(
            prompts::EVAL,
            &[
                ("question", &self.question.text),
                ("options", &self.question.options_block()),
                ("responses", &responses_block(agents)),
            ],
        );
        let text = match self.call(agent, Capability::Eval, round, prompt, &[]) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("{}: agent {} rating failed: {e}", self.question.id, agent.id());
                String::new()
            }
        };
        let parsed = parse_ratings(&text, agents.len());
        if !parsed.defaulted.is_empty() {
            log::warn!(
                "{}: agent {} ratings defaulted at {:?}",
                self.question.id,
                agent.id(),
                parsed.defaulted
            );
        }
        parsed.ratings
    }

    fn refine(
        &self,
        agent: &dyn AgentBackend,
        round: u32,
        clue: &str,
        agents: &[AgentRound],
        pruned: &str,
    ) -> String {
        let prompt = render(
            prompts::REFINE,
            &[
                ("question", &self.question.text),
                ("options", &self.question.options_block()),
                ("clue", clue),
                ("responses", &responses_block(agents)),
                ("pruned", pruned),
            ],
        );
        match self.call(agent, Capability::Refine, round, prompt, &[]) {
            Ok(c) if !c.trim().is_empty() => c.trim().to_string(),
            other => {
                log::warn!(
                    "{}: agent {} refine gave nothing ({:?}); keeping its clue",
                    self.question.id,
                    agent.id(),
                    other.err()
                );
                clue.to_string()
            }
        }
    }

    fn summarize(&self, agent: &dyn AgentBackend, round: &RoundRecord, answer: &str) -> String {
        let clues = round
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| format!("Agent {}: {}", i + 1, a.clue))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = render(
            prompts::SUMMARIZE,
            &[
                ("answer", answer),
                ("question", &self.question.text),
                ("options", &self.question.options_block()),
                ("clues", &clues),
                ("responses", &responses_block(&round.agents)),
            ],
        );
        self.call(agent, Capability::Summarize, round.round, prompt, &[])
            .unwrap_or_else(|e| {
                log::warn!("{}: summarizer failed: {e}", self.question.id);
                String::new()
            })
    }
}

/// Single-round perception and answer, used by teaming.
pub(crate) fn explore_once(
    ctx: &QuestionContext<'_>,
    question: &Question,
    agent: &dyn AgentBackend,
    cfg: &DeliberationConfig,
) -> Result<AgentRound, AgentError> {
    let ex = Explorer { ctx, question, cfg };
    Ok(ex.explore(agent, 1, None, false)?.record)
}

/// Deliberate on one question with `pool`, which is ordered by teaming rank.
/// The summarizer defaults to the best-ranked surviving agent.
pub fn run_question(
    ctx: &QuestionContext<'_>,
    question: &Question,
    pool: &[Arc<dyn AgentBackend>],
    summarizer: Option<&dyn AgentBackend>,
    cfg: &DeliberationConfig,
    exec: Exec,
) -> Result<Deliberation, AgentError> {
    question.validate()?;
    if pool.is_empty() {
        return Err(AgentError::EmptyPool);
    }
    let ex = Explorer { ctx, question, cfg };
    let mut trace = DeliberationTrace {
        question_id: question.id.clone(),
        video_id: ctx.video.id().to_string(),
        boundaries: ctx.partition.boundaries().to_vec(),
        pool: pool.iter().map(|a| a.id().to_string()).collect(),
        rounds: Vec::new(),
        final_answer: None,
        stop: String::new(),
        explanation: String::new(),
        error: None,
    };
    let mut timings = Vec::new();
    let initial = pool.len() as u32;
    let mut active: Vec<Arc<dyn AgentBackend>> = pool.to_vec();
    let mut clues: Vec<Option<String>> = vec![None; active.len()];
    let mut previous_top: Option<String> = None;
    let mut round = 1u32;

    let (final_answer, stop) = loop {
        let started = Instant::now();
        let explored = exec.map_indexed(active.len(), |i| {
            ex.explore(active[i].as_ref(), round, clues[i].as_deref(), true)
        });
        let explored = explored.into_iter().collect::<Result<Vec<_>, _>>()?;
        let scoring_seconds = explored.iter().map(|e| e.scoring_seconds).sum();
        let mut record = RoundRecord {
            round,
            agents: explored.into_iter().map(|e| e.record).collect(),
            consensus: None,
            ratings: None,
            column_sums: None,
            pruned: None,
        };
        let answers = record.answers();
        let failed: Vec<bool> = answers.iter().map(Option::is_none).collect();
        let finish = |record: RoundRecord, trace: &mut DeliberationTrace, timings: &mut Vec<RoundTiming>| {
            trace.rounds.push(record);
            timings.push(RoundTiming {
                scoring_seconds,
                round_seconds: started.elapsed().as_secs_f64(),
            });
        };

        if failed.iter().all(|&f| f) {
            let why: Vec<String> = record
                .agents
                .iter()
                .map(|a| format!("{}: {}", a.agent, a.failure.as_deref().unwrap_or("failed")))
                .collect();
            trace.error = Some(format!("all agents failed in round {round}: {}", why.join("; ")));
            finish(record, &mut trace, &mut timings);
            break (None, "error");
        }
        if let Some(label) = check_consensus(&answers, cfg.consensus) {
            record.consensus = Some(label.clone());
            finish(record, &mut trace, &mut timings);
            break (Some(label), "consensus");
        }

        let ratings = exec.map_indexed(active.len(), |i| {
            ex.rate(active[i].as_ref(), round, &record.agents)
        });
        let sums = column_sums(&ratings);
        record.ratings = Some(ratings);
        record.column_sums = Some(sums.clone());

        let limit = match cfg.stop {
            StopMode::FixedRounds { max_rounds } => max_rounds.max(1).min(initial),
            _ => initial,
        };
        let no_prune = matches!(cfg.stop, StopMode::NoPruneSum | StopMode::NoPruneMaj);
        if no_prune {
            let top = answer_scores(&answers, &sums).first().map(|(l, _)| l.clone());
            let pick = || match cfg.stop {
                StopMode::NoPruneMaj => majority_answer(&answers, &sums),
                _ => top.clone(),
            };
            if top.is_some() && top == previous_top {
                let a = pick();
                finish(record, &mut trace, &mut timings);
                break (a, "stable-top");
            }
            if round >= limit {
                let a = pick();
                finish(record, &mut trace, &mut timings);
                break (a, "max-rounds");
            }
            previous_top = top;
        } else if round >= limit && matches!(cfg.stop, StopMode::FixedRounds { .. }) {
            let a = majority_answer(&answers, &sums);
            finish(record, &mut trace, &mut timings);
            break (a, "max-rounds");
        }

        let pruned_idx = (!no_prune).then(|| prune_index(&sums, &failed));
        let pruned_name = match pruned_idx {
            Some(k) => {
                let name = active[k].id().to_string();
                record.pruned = Some(name.clone());
                name
            }
            None => "none".to_string(),
        };
        let survivors: Vec<usize> = (0..active.len()).filter(|&i| Some(i) != pruned_idx).collect();
        let refined = exec.map(&survivors, |&i| {
            ex.refine(
                active[i].as_ref(),
                round,
                &record.agents[i].clue,
                &record.agents,
                &pruned_name,
            )
        });
        active = survivors.iter().map(|&i| active[i].clone()).collect();
        clues = refined.into_iter().map(Some).collect();
        finish(record, &mut trace, &mut timings);
        round += 1;
    };

    trace.stop = stop.to_string();
    if let Some(answer) = &final_answer {
        let last = trace.rounds.last().expect("at least one round");
        let summarizer = summarizer.unwrap_or(active[0].as_ref());
        trace.explanation = ex.summarize(summarizer, last, answer);
    }
    trace.final_answer = final_answer;
    Ok(Deliberation {
        trace,
        rounds: timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ans(v: &[&str]) -> Vec<Option<String>> {
        v.iter()
            .map(|s| (!s.is_empty()).then(|| s.to_string()))
            .collect()
    }

    #[test]
    fn consensus_modes() {
        assert_eq!(check_consensus(&ans(&["B", "B", "B"]), ConsensusMode::Full).as_deref(), Some("B"));
        assert_eq!(check_consensus(&ans(&["B", "B", "C"]), ConsensusMode::Full), None);
        assert_eq!(
            check_consensus(&ans(&["B", "B", "C"]), ConsensusMode::Majority).as_deref(),
            Some("B")
        );
        assert_eq!(check_consensus(&ans(&["B", "C", "D"]), ConsensusMode::Majority), None);
        assert_eq!(check_consensus(&ans(&["B", "C"]), ConsensusMode::Majority), None);
        assert_eq!(check_consensus(&ans(&["B", "B", ""]), ConsensusMode::Full), None);
        assert_eq!(
            check_consensus(&ans(&["B", "B", ""]), ConsensusMode::Majority).as_deref(),
            Some("B")
        );
        assert_eq!(check_consensus(&ans(&["B"]), ConsensusMode::Full).as_deref(), Some("B"));
    }

    #[test]
    fn sums_and_pruning() {
        let ratings = vec![vec![9, 8, 7], vec![8, 6, 8], vec![8, 2, 7]];
        let sums = column_sums(&ratings);
        assert_eq!(sums, vec![25, 16, 22]);
        assert_eq!(prune_index(&sums, &[false; 3]), 1);
        assert_eq!(prune_index(&[30, 30, 30], &[false; 3]), 0);
        assert_eq!(prune_index(&sums, &[false, false, true]), 2);
    }

    #[test]
    fn majority_ties_use_scores() {
        let a = ans(&["B", "C", "B", "C"]);
        assert_eq!(majority_answer(&a, &[5, 9, 5, 9]).as_deref(), Some("C"));
        assert_eq!(majority_answer(&a, &[9, 5, 9, 5]).as_deref(), Some("B"));
        assert_eq!(answer_scores(&a, &[1, 2, 3, 4])[0], ("C".to_string(), 6));
    }
}
