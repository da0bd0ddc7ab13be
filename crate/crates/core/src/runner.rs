//! Command implementations behind the CLI: partition, team, run, replay.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::alliance::{
    run_question, team_agents, AgentBackend, AgentError, AgentScript, ChatBackend, ChatEndpoint,
    Deliberation, DeliberationConfig, DeliberationTrace, Question, QuestionContext, ScriptedBackend,
    TeamingReport, TeamingSample,
};
use crate::config::{ConfigError, PortKind, RunConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{EmbedderPort, SyntheticEmbedder};
use crate::ingest::{open_source, SyntheticVideo, VideoSource};
use crate::pipeline::{partition_video, PartitionConfig, PartitionReport};
use crate::selection::{SelectionError, SimilarityPort, SyntheticSimilarity};
use crate::sidecar::{RemoteEmbedder, RemoteSimilarity};

/// Scenes with palette colours starting at each cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutVideo {
    pub id: String,
    pub duration: f64,
    pub frames: usize,
    pub cuts: Vec<f64>,
}

/// A video on disk, or a procedural one described inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VideoRef {
    Path(PathBuf),
    Cuts(CutVideo),
    Synthetic(SyntheticVideo),
}

impl VideoRef {
    fn key(&self) -> String {
        match self {
            VideoRef::Path(p) => format!("path:{}", p.display()),
            other => serde_json::to_string(other).expect("video ref serializes"),
        }
    }

    pub fn open(&self, base: &Path) -> Result<VideoSource> {
        Ok(match self {
            VideoRef::Path(p) if p.is_absolute() => open_source(p)?,
            VideoRef::Path(p) => open_source(base.join(p))?,
            VideoRef::Cuts(c) => {
                let mut v = SyntheticVideo::with_cuts(c.duration, c.frames, &c.cuts);
                v.id = c.id.clone();
                v.source()?
            }
            VideoRef::Synthetic(v) => v.source()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub video: VideoRef,
    pub question: String,
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtitles: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

impl ManifestEntry {
    pub fn to_question(&self) -> std::result::Result<Question, AgentError> {
        let q = Question::new(&self.id, &self.question, self.options.clone())?
            .with_subtitles(self.subtitles.clone());
        if let Some(g) = &self.gold {
            if q.label_index(g).is_none() {
                return Err(AgentError::InvalidQuestion(
                    self.id.clone(),
                    format!("gold label {g} is not an option"),
                ));
            }
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub questions: Vec<ManifestEntry>,
    /// Directory relative video paths resolve against.
    #[serde(skip)]
    pub base: PathBuf,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(ConfigError::Invalid(msg.into()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(ConfigError::Read {
            path: path.display().to_string(),
            source: e,
        }))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Config(ConfigError::Parse {
            path: format!("{} ({what})", path.display()),
            message: e.to_string(),
        })
    })
}

impl BenchmarkManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: BenchmarkManifest = read_json(path, "manifest")?;
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.questions.iter().map(|q| q.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("manifest question ids must be unique"));
        }
        for q in &self.questions {
            q.to_question().map_err(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AgentSpec {
    Scripted(AgentScript),
    Chat(ChatEndpoint),
}

impl AgentSpec {
    pub fn id(&self) -> &str {
        match self {
            AgentSpec::Scripted(s) => &s.id,
            AgentSpec::Chat(c) => &c.id,
        }
    }

    pub fn build(&self) -> Arc<dyn AgentBackend> {
        match self {
            AgentSpec::Scripted(s) => Arc::new(ScriptedBackend::new(s.clone())),
            AgentSpec::Chat(c) => Arc::new(ChatBackend::new(c.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentLibrary {
    pub agents: Vec<AgentSpec>,
}

impl AgentLibrary {
    pub fn load(path: &Path) -> Result<Self> {
        let lib: AgentLibrary = read_json(path, "agent library")?;
        if lib.agents.is_empty() {
            return Err(invalid("agent library is empty"));
        }
        let mut ids: Vec<&str> = lib.agents.iter().map(AgentSpec::id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("agent ids must be unique"));
        }
        Ok(lib)
    }

    pub fn build(&self) -> Vec<Arc<dyn AgentBackend>> {
        self.agents.iter().map(AgentSpec::build).collect()
    }
}

pub fn build_embedder(cfg: &RunConfig) -> Result<Box<dyn EmbedderPort>> {
    let e = &cfg.embedder;
    Ok(match e.kind {
        PortKind::Synthetic => Box::new(e.synthetic.clone()),
        PortKind::Remote => match e.dimension {
            Some(d) => Box::new(RemoteEmbedder::with_dimension(e.remote.clone(), d)),
            None => Box::new(RemoteEmbedder::connect(e.remote.clone())?),
        },
    })
}

pub fn build_similarity(cfg: &RunConfig) -> Box<dyn SimilarityPort> {
    let s = &cfg.similarity;
    match s.kind {
        PortKind::Synthetic => Box::new(s.synthetic.clone()),
        PortKind::Remote => Box::new(RemoteSimilarity::new(s.remote.clone())),
    }
}

pub fn cmd_partition(video: &VideoRef, base: &Path, cfg: &RunConfig) -> Result<PartitionReport> {
    let source = video.open(base)?;
    let embedder = build_embedder(cfg)?;
    partition_video(&source, embedder.as_ref(), &cfg.partition, cfg.exec)
}

struct PreparedVideo {
    source: VideoSource,
    report: PartitionReport,
}

/// Open and partition each distinct video once.
fn prepare_videos(
    manifest: &BenchmarkManifest,
    cfg: &RunConfig,
    embedder: &dyn EmbedderPort,
) -> HashMap<String, std::result::Result<Arc<PreparedVideo>, String>> {
    let mut cache = HashMap::new();
    for q in &manifest.questions {
        let key = q.video.key();
        if cache.contains_key(&key) {
            continue;
        }
        let prepared = q
            .video
            .open(&manifest.base)
            .and_then(|source| {
                let report = partition_video(&source, embedder, &cfg.partition, cfg.exec)?;
                Ok(Arc::new(PreparedVideo { source, report }))
            })
            .map_err(|e| e.to_string());
        if let Err(e) = &prepared {
            log::error!("video for {}: {e}", q.id);
        }
        cache.insert(key, prepared);
    }
    cache
}

pub fn cmd_team(
    manifest: &BenchmarkManifest,
    library: &[Arc<dyn AgentBackend>],
    m: usize,
    cfg: &RunConfig,
) -> Result<TeamingReport> {
    let embedder = build_embedder(cfg)?;
    let similarity = build_similarity(cfg);
    let videos = prepare_videos(manifest, cfg, embedder.as_ref());
    let mut samples = Vec::with_capacity(manifest.questions.len());
    for q in &manifest.questions {
        let prepared = videos[&q.video.key()].clone().map_err(invalid)?;
        samples.push(TeamingSample {
            question: q.to_question()?,
            video: prepared.source.clone(),
            partition: prepared.report.partition.clone(),
        });
    }
    Ok(team_agents(
        library,
        &samples,
        similarity.as_ref(),
        m,
        cfg.partition.max_blocks,
        &cfg.deliberation,
        cfg.exec,
    )?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QuestionTiming {
    pub question_id: String,
    pub partition_seconds: f64,
    pub scoring_seconds: f64,
    pub agent_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub questions: usize,
    pub errored: usize,
    pub graded: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    pub mean_seconds: f64,
    pub mean_partition_seconds: f64,
    pub mean_scoring_seconds: f64,
    pub mean_agent_seconds: f64,
    /// Number of rounds used -> question count.
    pub round_histogram: BTreeMap<usize, usize>,
    pub pool: Vec<String>,
    pub timings: Vec<QuestionTiming>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        match self.errored {
            0 => 0,
            n if n == self.questions => 2,
            _ => 3,
        }
    }
}

fn error_trace(q: &ManifestEntry, pool: &[String], message: String) -> DeliberationTrace {
    DeliberationTrace {
        question_id: q.id.clone(),
        video_id: String::new(),
        boundaries: Vec::new(),
        pool: pool.to_vec(),
        rounds: Vec::new(),
        final_answer: None,
        stop: "error".into(),
        explanation: String::new(),
        error: Some(message),
    }
}

/// The agents `run` deliberates with: the teaming selection if given,
/// otherwise the first `team_size` library agents.
pub fn select_pool(
    library: &[Arc<dyn AgentBackend>],
    teaming: Option<&TeamingReport>,
    team_size: usize,
) -> Result<Vec<Arc<dyn AgentBackend>>> {
    let pool: Vec<Arc<dyn AgentBackend>> = match teaming {
        Some(report) => {
            let ids: Vec<&str> = library.iter().map(|a| a.id()).collect();
            let idx = report.pool(&ids);
            if idx.len() != report.selected.len() {
                return Err(invalid("teaming report names agents missing from the library"));
            }
            idx.into_iter().map(|i| library[i].clone()).collect()
        }
        None => library.iter().take(team_size).cloned().collect(),
    };
    if pool.is_empty() {
        return Err(Error::Agent(AgentError::EmptyPool));
    }
    Ok(pool)
}

/// Deliberate every manifest question. Traces go to `traces` as JSON lines
/// in manifest order, flushed after each batch of `cfg.workers` questions.
pub fn cmd_run(
    manifest: &BenchmarkManifest,
    pool: &[Arc<dyn AgentBackend>],
    cfg: &RunConfig,
    traces: &mut dyn Write,
) -> Result<RunSummary> {
    let embedder = build_embedder(cfg)?;
    let similarity = build_similarity(cfg);
    let videos = prepare_videos(manifest, cfg, embedder.as_ref());
    let pool_ids: Vec<String> = pool.iter().map(|a| a.id().to_string()).collect();
    let mut summary = RunSummary {
        questions: manifest.questions.len(),
        pool: pool_ids.clone(),
        ..Default::default()
    };
    let mut charged = std::collections::HashSet::new();

    for chunk in manifest.questions.chunks(cfg.workers.max(1)) {
        let results = cfg.exec.map(chunk, |q| {
            let started = Instant::now();
            let prepared = match &videos[&q.video.key()] {
                Ok(p) => p.clone(),
                Err(e) => return (error_trace(q, &pool_ids, e.clone()), None, 0.0),
            };
            let outcome = q.to_question().and_then(|question| {
                let ctx = QuestionContext::new(
                    &prepared.source,
                    &prepared.report.partition,
                    cfg.partition.max_blocks,
                    similarity.as_ref(),
                );
                run_question(&ctx, &question, pool, None, &cfg.deliberation, cfg.exec)
            });
            let elapsed = started.elapsed().as_secs_f64();
            match outcome {
                Ok(d) => {
                    let Deliberation { trace, rounds } = d;
                    (trace, Some(rounds), elapsed)
                }
                Err(e) => (error_trace(q, &pool_ids, e.to_string()), None, elapsed),
            }
        });
        for (q, (trace, rounds, elapsed)) in chunk.iter().zip(results) {
            let line = serde_json::to_string(&trace).map_err(|e| Error::json("trace", e))?;
            writeln!(traces, "{line}").map_err(|e| Error::io("writing traces", e))?;
            let key = q.video.key();
            let partition_seconds = match &videos[&key] {
                Ok(p) if charged.insert(key) => p.report.elapsed_seconds,
                _ => 0.0,
            };
            let rounds = rounds.unwrap_or_default();
            summary.timings.push(QuestionTiming {
                question_id: q.id.clone(),
                partition_seconds,
                scoring_seconds: rounds.iter().map(|r| r.scoring_seconds).sum(),
                agent_seconds: rounds.iter().map(|r| r.round_seconds).sum(),
                total_seconds: elapsed + partition_seconds,
            });
            if trace.error.is_some() {
                summary.errored += 1;
                continue;
            }
            *summary.round_histogram.entry(trace.rounds.len()).or_default() += 1;
            if let Some(gold) = &q.gold {
                summary.graded += 1;
                if trace.final_answer.as_deref() == Some(gold.as_str()) {
                    summary.correct += 1;
                }
            }
        }
        traces.flush().map_err(|e| Error::io("writing traces", e))?;
    }
    let n = summary.timings.len().max(1) as f64;
    let mean = |f: fn(&QuestionTiming) -> f64| summary.timings.iter().map(f).sum::<f64>() / n;
    summary.mean_seconds = mean(|t| t.total_seconds);
    summary.mean_partition_seconds = mean(|t| t.partition_seconds);
    summary.mean_scoring_seconds = mean(|t| t.scoring_seconds);
    summary.mean_agent_seconds = mean(|t| t.agent_seconds);
    summary.accuracy = (summary.graded > 0).then(|| summary.correct as f64 / summary.graded as f64);
    Ok(summary)
}

/// Convenience wrapper writing traces to a file.
pub fn cmd_run_to_file(
    manifest: &BenchmarkManifest,
    pool: &[Arc<dyn AgentBackend>],
    cfg: &RunConfig,
    out: &Path,
) -> Result<RunSummary> {
    let file = File::create(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let mut w = BufWriter::new(file);
    cmd_run(manifest, pool, cfg, &mut w)
}

/// A self-contained scripted deliberation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub question: ManifestEntry,
    pub agents: Vec<AgentScript>,
    #[serde(default)]
    pub similarity: SyntheticSimilarity,
    #[serde(default)]
    pub embedder: Option<SyntheticEmbedder>,
    #[serde(default)]
    pub deliberation: DeliberationConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    /// Agent id acting as summarizer; defaults to the best-ranked survivor.
    #[serde(default)]
    pub summarizer: Option<String>,
}

pub struct Replay {
    pub deliberation: Deliberation,
    pub agents: Vec<Arc<ScriptedBackend>>,
    pub partition: PartitionReport,
}

pub fn replay(scenario: &Scenario, base: &Path, exec: Exec) -> Result<Replay> {
    let source = scenario.question.video.open(base)?;
    let embedder = scenario.embedder.clone().unwrap_or_default();
    let report = partition_video(&source, &embedder, &scenario.partition, exec)?;
    let question = scenario.question.to_question()?;
    let agents: Vec<Arc<ScriptedBackend>> = scenario
        .agents
        .iter()
        .map(|s| Arc::new(ScriptedBackend::new(s.clone())))
        .collect();
    let pool: Vec<Arc<dyn AgentBackend>> = agents
        .iter()
        .map(|a| a.clone() as Arc<dyn AgentBackend>)
        .collect();
    let summarizer = match &scenario.summarizer {
        Some(id) => Some(
            pool.iter()
                .find(|a| a.id() == id)
                .cloned()
                .ok_or_else(|| invalid(format!("summarizer {id} is not a scenario agent")))?,
        ),
        None => None,
    };
    let ctx = QuestionContext::new(
        &source,
        &report.partition,
        scenario.partition.max_blocks,
        &scenario.similarity,
    );
    let deliberation = run_question(
        &ctx,
        &question,
        &pool,
        summarizer.as_deref(),
        &scenario.deliberation,
        exec,
    )?;
    Ok(Replay {
        deliberation,
        agents,
        partition: report,
    })
}

pub fn cmd_replay(path: &Path, exec: Exec) -> Result<Replay> {
    let scenario: Scenario = read_json(path, "scenario")?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    replay(&scenario, &base, exec)
}

impl Error {
    /// Process exit status for a failed command.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Agent(AgentError::InvalidQuestion(..) | AgentError::TeamTooLarge { .. }) => 1,
            Error::Agent(AgentError::EmptyPool | AgentError::NoSamples) => 1,
            Error::Json { .. } => 1,
            Error::Port(_) | Error::Selection(SelectionError::Port(_)) => 2,
            Error::Agent(AgentError::Selection { .. }) => 2,
            _ => 2,
        }
    }
}
