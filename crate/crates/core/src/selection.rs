//! Preview sampling, clue-to-block scoring and action-frame allocation.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::ingest::{decode_indices, FrameRecord, IngestError, VideoSource};
use crate::partition::Partition;
use crate::ports::PortError;
use crate::rng;

pub const DEFAULT_RHO: f64 = 0.8;
pub const TOP_K_FRAMES: usize = 3;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("cannot sample {wanted} frames from {available}")]
    NotEnoughFrames { wanted: usize, available: usize },
    #[error("perception clue is empty")]
    EmptyClue,
    #[error("no block contains a frame")]
    EmptyVideo,
    #[error(transparent)]
    Port(#[from] PortError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Text-versus-frame similarity, one score in [-1, 1] per frame.
pub trait SimilarityPort: Send + Sync {
    fn similarity(&self, text: &str, frames: &[FrameRecord]) -> Result<Vec<f64>, PortError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRule {
    /// Matched case-insensitively as a substring of the clue.
    pub keyword: String,
    pub start: f64,
    pub end: f64,
    pub score: f64,
}

/// Scripted similarity: a small hashed base score, raised by any rule whose
/// keyword appears in the text and whose time range covers the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSimilarity {
    pub seed: u64,
    pub base_max: f64,
    pub rules: Vec<SimilarityRule>,
}

impl Default for SyntheticSimilarity {
    fn default() -> Self {
        Self {
            seed: 0,
            base_max: 0.3,
            rules: Vec::new(),
        }
    }
}

impl SyntheticSimilarity {
    pub fn score(&self, text: &str, frame: &FrameRecord) -> f64 {
        let lower = text.to_lowercase();
        let base = self.base_max
            * rng::unit_f64(&[self.seed, rng::hash_str(text), frame.index as u64]);
        self.rules
            .iter()
            .filter(|r| lower.contains(&r.keyword.to_lowercase()))
            .filter(|r| frame.timestamp >= r.start && frame.timestamp < r.end)
            .map(|r| r.score)
            .fold(base, f64::max)
            .clamp(0.0, 1.0)
    }
}

impl SimilarityPort for SyntheticSimilarity {
    fn similarity(&self, text: &str, frames: &[FrameRecord]) -> Result<Vec<f64>, PortError> {
        Ok(frames.iter().map(|f| self.score(text, f)).collect())
    }
}

/// Frame indices falling in each block.
pub fn block_members(timestamps: &[f64], partition: &Partition) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); partition.block_count()];
    for (i, &t) in timestamps.iter().enumerate() {
        members[partition.block_of(t)].push(i);
    }
    members
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreviewMode {
    #[default]
    RandomWhole,
    PerEventBlock,
}

/// `n1` distinct preview frames, sorted.
pub fn sample_p1(
    frame_count: usize,
    n1: usize,
    mode: PreviewMode,
    members: &[Vec<usize>],
    seed: u64,
) -> Result<Vec<usize>, SelectionError> {
    if n1 > frame_count || n1 == 0 {
        return Err(SelectionError::NotEnoughFrames {
            wanted: n1,
            available: frame_count,
        });
    }
    let mut rng = rng::seeded(&[seed, 0x70]);
    let mut out = match mode {
        PreviewMode::RandomWhole => index::sample(&mut rng, frame_count, n1).into_vec(),
        PreviewMode::PerEventBlock => {
            let mut queues: Vec<Vec<usize>> = members.to_vec();
            for q in queues.iter_mut() {
                q.shuffle(&mut rng);
            }
            let mut out = Vec::with_capacity(n1);
            while out.len() < n1 {
                let before = out.len();
                for q in queues.iter_mut() {
                    if out.len() == n1 {
                        break;
                    }
                    if let Some(i) = q.pop() {
                        out.push(i);
                    }
                }
                if out.len() == before {
                    return Err(SelectionError::NotEnoughFrames {
                        wanted: n1,
                        available: out.len(),
                    });
                }
            }
            out
        }
    };
    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockScore {
    /// Mean of the top per-frame similarities; `None` for blocks without frames.
    pub raw: Vec<Option<f64>>,
    /// Min-max normalized to [0, 1] across non-empty blocks.
    pub scores: Vec<f64>,
}

impl BlockScore {
    pub fn from_raw(raw: Vec<Option<f64>>) -> Self {
        let present: Vec<f64> = raw.iter().flatten().copied().collect();
        let norm = crate::stats::min_max_normalize(&present);
        let mut it = norm.into_iter();
        let scores = raw
            .iter()
            .map(|r| if r.is_some() { it.next().unwrap() } else { 0.0 })
            .collect();
        Self { raw, scores }
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.scores)
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn top_k_mean(scores: &[f64], k: usize) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = &sorted[..k.min(sorted.len())];
    top.iter().sum::<f64>() / top.len() as f64
}

/// Score every block against `clue` using up to `frames_per_block` seeded
/// frames per block.
pub fn score_blocks(
    video: &VideoSource,
    partition: &Partition,
    clue: &str,
    port: &dyn SimilarityPort,
    frames_per_block: usize,
    seed: u64,
    exec: Exec,
) -> Result<BlockScore, SelectionError> {
    if clue.trim().is_empty() {
        return Err(SelectionError::EmptyClue);
    }
    let members = block_members(video.timestamps(), partition);
    if members.iter().all(|m| m.is_empty()) {
        return Err(SelectionError::EmptyVideo);
    }
    let raw: Vec<Result<Option<f64>, SelectionError>> = exec.map_indexed(members.len(), |k| {
        let block = &members[k];
        if block.is_empty() {
            return Ok(None);
        }
        let mut rng = rng::seeded(&[seed, 0x5C, k as u64]);
        let take = frames_per_block.max(1).min(block.len());
        let mut picks: Vec<usize> = index::sample(&mut rng, block.len(), take)
            .into_iter()
            .map(|i| block[i])
            .collect();
        picks.sort_unstable();
        let frames = decode_indices(video, &picks, Exec::Sequential)?;
        let sims = port.similarity(clue, &frames)?;
        if sims.len() != frames.len() {
            return Err(PortError::Contract(format!(
                "{} scores for {} frames",
                sims.len(),
                frames.len()
            ))
            .into());
        }
        Ok(Some(top_k_mean(&sims, TOP_K_FRAMES)))
    });
    let raw = raw.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(BlockScore::from_raw(raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationCase {
    /// No block above ρ: everything from the best block.
    BestBlock,
    /// Softmax over the blocks above ρ.
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAllocation {
    pub counts: Vec<usize>,
    pub retained: Vec<bool>,
    pub case: AllocationCase,
}

impl FrameAllocation {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Split `n2` action frames over blocks.
///
/// If no score exceeds `rho`, the best block gets all of them. Otherwise
/// blocks at or below `rho` are masked, the rest get `⌊n2 · softmax(s − max s)⌋`,
/// and the remainder goes one each to distinct retained blocks drawn at random.
pub fn allocate_frames(scores: &[f64], n2: usize, rho: f64, seed: u64) -> FrameAllocation {
    let b = scores.len();
    let best = argmax(scores);
    let max = scores.get(best).copied().unwrap_or(f64::NEG_INFINITY);
    if !(max > rho) {
        let mut counts = vec![0; b];
        if b > 0 {
            counts[best] = n2;
        }
        let mut retained = vec![false; b];
        if b > 0 {
            retained[best] = true;
        }
        return FrameAllocation {
            counts,
            retained,
            case: AllocationCase::BestBlock,
        };
    }
    let retained: Vec<bool> = scores.iter().map(|&s| s > rho).collect();
    let exps: Vec<f64> = scores
        .iter()
        .zip(&retained)
        .map(|(&s, &keep)| if keep { (s - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = exps.iter().sum();
    let mut counts: Vec<usize> = exps
        .iter()
        .map(|e| (n2 as f64 * (e / total)).floor() as usize)
        .collect();
    while counts.iter().sum::<usize>() > n2 {
        let i = argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        counts[i] -= 1;
    }
    let residual = n2 - counts.iter().sum::<usize>();
    if residual > 0 {
        let pool: Vec<usize> = (0..b).filter(|&k| retained[k]).collect();
        let mut rng = rng::seeded(&[seed, 0xA1]);
        let picks = index::sample(&mut rng, pool.len(), residual.min(pool.len()));
        for p in picks {
            counts[pool[p]] += 1;
        }
        // Only reachable if the residual exceeds the number of retained blocks.
        let still = n2 - counts.iter().sum::<usize>();
        counts[best] += still;
    }
    FrameAllocation {
        counts,
        retained,
        case: AllocationCase::Softmax,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionMode {
    /// Sample from the event partition.
    #[default]
    EventBlocks,
    /// Sample from `B` equal-length blocks.
    UniformBlocks,
}

/// Draw the allocated count from each block without replacement. Blocks
/// short of frames pass their shortfall on to the next-highest-scoring
/// block with room (retained blocks first). Returns sorted frame indices.
pub fn sample_p2(
    allocation: &FrameAllocation,
    members: &[Vec<usize>],
    scores: &[f64],
    seed: u64,
) -> Vec<usize> {
    let b = members.len();
    let mut take: Vec<usize> = (0..b)
        .map(|k| allocation.counts[k].min(members[k].len()))
        .collect();
    let mut shortfall = allocation.total() - take.iter().sum::<usize>();
    if shortfall > 0 {
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&x, &y| {
            allocation.retained[y]
                .cmp(&allocation.retained[x])
                .then(scores[y].total_cmp(&scores[x]))
                .then(x.cmp(&y))
        });
        for k in order {
            let room = members[k].len() - take[k];
            let extra = room.min(shortfall);
            take[k] += extra;
            shortfall -= extra;
            if shortfall == 0 {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(allocation.total());
    for k in 0..b {
        if take[k] == 0 {
            continue;
        }
        let mut rng = rng::seeded(&[seed, 0xB2, k as u64]);
        out.extend(
            index::sample(&mut rng, members[k].len(), take[k])
                .into_iter()
                .map(|i| members[k][i]),
        );
    }
    out.sort_unstable();
    out
}
