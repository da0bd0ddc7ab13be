//! Merging head candidates into the final block partition.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::changepoint::{sort_candidates, BoundaryCandidate, Head};
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("boundaries must start at 0, end at the duration and increase strictly")]
    Malformed,
    #[error("block count must be at least 1")]
    NoBlocks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProvenance {
    pub time: f64,
    pub head: Head,
    /// Strength after per-head min-max normalization.
    pub strength: f64,
}

/// `0 = τ₀ < τ₁ < … < τ_b = L`; block `k` is `[τ_k, τ_{k+1})`, the last one closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    boundaries: Vec<f64>,
    provenance: Vec<BoundaryProvenance>,
}

impl Partition {
    pub fn whole(duration: f64) -> Self {
        Self {
            boundaries: vec![0.0, duration],
            provenance: Vec::new(),
        }
    }

    /// `blocks` equal-length blocks.
    pub fn uniform(duration: f64, blocks: usize) -> Result<Self, PartitionError> {
        if blocks == 0 {
            return Err(PartitionError::NoBlocks);
        }
        let mut b: Vec<f64> = (0..blocks)
            .map(|k| k as f64 * duration / blocks as f64)
            .collect();
        b.push(duration);
        Self::from_boundaries(b)
    }

    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self, PartitionError> {
        if boundaries.len() < 2
            || boundaries[0] != 0.0
            || boundaries.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(PartitionError::Malformed);
        }
        Ok(Self {
            boundaries,
            provenance: Vec::new(),
        })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn interior(&self) -> &[f64] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }

    pub fn provenance(&self) -> &[BoundaryProvenance] {
        &self.provenance
    }

    pub fn duration(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    pub fn block_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn blocks(&self) -> Vec<(f64, f64)> {
        self.boundaries.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Index of the block containing `t`; times past the end map to the last block.
    pub fn block_of(&self, t: f64) -> usize {
        let interior = self.interior();
        interior.partition_point(|&b| b <= t)
    }
}

/// `max(ℓ₀, L / 15)`.
pub fn min_segment_length(duration: f64, floor_seconds: f64) -> f64 {
    floor_seconds.max(duration / 15.0)
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NmsOrder {
    /// Earliest-first scan.
    #[default]
    Scan,
    /// Classical strongest-first suppression (not the default behaviour).
    StrengthFirst,
}

/// Keep candidates at least `min_gap` after the previous kept one (and after
/// 0), and at least `min_gap` before `duration`. Input must be time-sorted.
pub fn nms_1d(
    candidates: &[BoundaryCandidate],
    min_gap: f64,
    duration: f64,
) -> Vec<BoundaryCandidate> {
    let mut kept: Vec<BoundaryCandidate> = Vec::new();
    let mut last = 0.0;
    for c in candidates {
        if c.time - last >= min_gap && duration - c.time >= min_gap {
            last = c.time;
            kept.push(c.clone());
        }
    }
    kept
}

fn nms_strength_first(
    candidates: &[BoundaryCandidate],
    min_gap: f64,
    duration: f64,
) -> Vec<BoundaryCandidate> {
    let mut order: Vec<&BoundaryCandidate> = candidates.iter().collect();
    order.sort_by(|a, b| b.strength.total_cmp(&a.strength).then(a.time.total_cmp(&b.time)));
    let mut kept: Vec<BoundaryCandidate> = Vec::new();
    for c in order {
        let clear_edges = c.time >= min_gap && duration - c.time >= min_gap;
        if clear_edges && kept.iter().all(|k| (k.time - c.time).abs() >= min_gap) {
            kept.push(c.clone());
        }
    }
    kept.sort_by(|a, b| a.time.total_cmp(&b.time));
    kept
}

/// Min-max normalize strengths within each head.
pub fn normalize_per_head(candidates: &mut [BoundaryCandidate]) {
    for head in [Head::Pelt, Head::Ssm, Head::Kts] {
        let idx: Vec<usize> = (0..candidates.len())
            .filter(|&i| candidates[i].head == head)
            .collect();
        let raw: Vec<f64> = idx.iter().map(|&i| candidates[i].strength).collect();
        for (i, s) in idx.into_iter().zip(stats::min_max_normalize(&raw)) {
            candidates[i].strength = s;
        }
    }
}

/// Merge, suppress, keep the strongest `max_blocks − 1`, and close with 0 and L.
pub fn event_partition(
    duration: f64,
    candidates: &[BoundaryCandidate],
    min_gap: f64,
    max_blocks: usize,
    order: NmsOrder,
) -> Result<Partition, PartitionError> {
    if max_blocks == 0 {
        return Err(PartitionError::NoBlocks);
    }
    let mut merged: Vec<BoundaryCandidate> = candidates
        .iter()
        .filter(|c| c.time > 0.0 && c.time < duration && c.strength.is_finite())
        .cloned()
        .collect();
    normalize_per_head(&mut merged);
    sort_candidates(&mut merged);
    let mut kept = match order {
        NmsOrder::Scan => nms_1d(&merged, min_gap, duration),
        NmsOrder::StrengthFirst => nms_strength_first(&merged, min_gap, duration),
    };
    if kept.len() > max_blocks - 1 {
        kept.sort_by(|a, b| b.strength.total_cmp(&a.strength).then(a.time.total_cmp(&b.time)));
        kept.truncate(max_blocks - 1);
        kept.sort_by(|a, b| a.time.total_cmp(&b.time));
    }
    let mut boundaries = vec![0.0];
    boundaries.extend(kept.iter().map(|c| c.time));
    boundaries.push(duration);
    let mut partition = Partition::from_boundaries(boundaries)?;
    partition.provenance = kept
        .into_iter()
        .map(|c| BoundaryProvenance {
            time: c.time,
            head: c.head,
            strength: c.strength,
        })
        .collect();
    Ok(partition)
}
