use image::imageops::FilterType;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::ingest::FrameRecord;
use crate::ports::PortError;
use crate::rng;
use crate::stats;

/// Source of per-frame embedding vectors.
pub trait EmbedderPort: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed_batch(&self, frames: &[FrameRecord]) -> Result<Vec<Vec<f64>>, PortError>;

    fn batch_size(&self) -> usize {
        32
    }

    /// When true, batches are sent one at a time.
    fn single_flight(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub raw: Vec<f64>,
    pub unit: Vec<f64>,
}

impl Embedding {
    pub fn new(raw: Vec<f64>) -> Self {
        let unit = stats::unit(&raw);
        Self { raw, unit }
    }
}

pub fn embed_frames(
    frames: &[FrameRecord],
    port: &dyn EmbedderPort,
    exec: Exec,
) -> Result<Vec<Embedding>, PortError> {
    let batch = port.batch_size().max(1);
    let chunks: Vec<&[FrameRecord]> = frames.chunks(batch).collect();
    let exec = if port.single_flight() { Exec::Sequential } else { exec };
    let results = exec.map(&chunks, |chunk| port.embed_batch(chunk));
    let dim = port.dimension();
    let mut out = Vec::with_capacity(frames.len());
    for (chunk, result) in chunks.iter().zip(results) {
        let vectors = result?;
        if vectors.len() != chunk.len() {
            return Err(PortError::Contract(format!(
                "{} vectors for {} frames",
                vectors.len(),
                chunk.len()
            )));
        }
        for v in vectors {
            if v.len() != dim {
                return Err(PortError::Contract(format!(
                    "vector of length {} from a {dim}-dimensional embedder",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(PortError::Contract("non-finite embedding entry".into()));
            }
            out.push(Embedding::new(v));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SyntheticMode {
    /// Independent pseudo-random vector per frame index.
    Hash,
    /// One shared vector per segment delimited by `boundaries` (seconds),
    /// optionally perturbed per frame by `jitter`.
    Segments {
        boundaries: Vec<f64>,
        #[serde(default)]
        jitter: f64,
    },
    /// 4×4 RGB thumbnail of the frame, centred; content-aware and model-free.
    Thumbnail,
}

/// Deterministic embedder for tests and offline runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticEmbedder {
    pub dim: usize,
    pub seed: u64,
    pub mode: SyntheticMode,
}

const THUMB: u32 = 4;

impl Default for SyntheticEmbedder {
    fn default() -> Self {
        Self::thumbnail()
    }
}

impl SyntheticEmbedder {
    pub fn hashed(dim: usize, seed: u64) -> Self {
        Self { dim, seed, mode: SyntheticMode::Hash }
    }

    pub fn segments(dim: usize, seed: u64, boundaries: Vec<f64>) -> Self {
        Self {
            dim,
            seed,
            mode: SyntheticMode::Segments { boundaries, jitter: 0.0 },
        }
    }

    pub fn thumbnail() -> Self {
        Self {
            dim: (THUMB * THUMB * 3) as usize,
            seed: 0,
            mode: SyntheticMode::Thumbnail,
        }
    }

    fn random_unit(&self, key: &[u64]) -> Vec<f64> {
        let v: Vec<f64> = (0..self.dim as u64)
            .map(|k| {
                let mut parts = key.to_vec();
                parts.push(k);
                2.0 * rng::unit_f64(&parts) - 1.0
            })
            .collect();
        stats::unit(&v)
    }

    pub fn vector(&self, frame: &FrameRecord) -> Vec<f64> {
        match &self.mode {
            SyntheticMode::Hash => self.random_unit(&[self.seed, 1, frame.index as u64]),
            SyntheticMode::Segments { boundaries, jitter } => {
                let segment = boundaries.iter().filter(|&&b| b <= frame.timestamp).count();
                let mut v = self.random_unit(&[self.seed, 2, segment as u64]);
                if *jitter > 0.0 {
                    let noise = self.random_unit(&[self.seed, 3, frame.index as u64]);
                    v.iter_mut().zip(noise).for_each(|(a, n)| *a += jitter * n);
                }
                v
            }
            SyntheticMode::Thumbnail => {
                let small =
                    image::imageops::resize(frame.pixels.as_ref(), THUMB, THUMB, FilterType::Triangle);
                small
                    .pixels()
                    .flat_map(|p| p.0)
                    .map(|c| c as f64 / 255.0 - 0.5)
                    .collect()
            }
        }
    }
}

impl EmbedderPort for SyntheticEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, frames: &[FrameRecord]) -> Result<Vec<Vec<f64>>, PortError> {
        Ok(frames.iter().map(|f| self.vector(f)).collect())
    }
}
