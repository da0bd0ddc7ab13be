//! The full event-based partitioning pipeline: sampled decode, features,
//! fused novelty, PELT/SSM/KTS heads, NMS and truncation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::changepoint::{pelt_head, BoundaryCandidate, PeltConfig};
use crate::embseg::{kts_head, resample_embeddings, ssm_head, EmbsegConfig, GramMatrix};
use crate::error::Result;
use crate::exec::Exec;
use crate::features::{extract_features, EmbedderPort, FrameFeatures};
use crate::ingest::{decode_frames, uniform_sample, VideoSource};
use crate::novelty::{novelty_signal, NoveltyBreakdown, NoveltyConfig};
use crate::partition::{
    event_partition, min_segment_length, BoundaryProvenance, NmsOrder, Partition,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    pub max_blocks: usize,
    pub min_segment_floor: f64,
    pub max_frames: usize,
    pub nms_order: NmsOrder,
    pub novelty: NoveltyConfig,
    pub pelt: PeltConfig,
    pub embseg: EmbsegConfig,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            max_blocks: 6,
            min_segment_floor: 2.0,
            max_frames: 200,
            nms_order: NmsOrder::Scan,
            novelty: NoveltyConfig::default(),
            pelt: PeltConfig::default(),
            embseg: EmbsegConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionReport {
    pub video_id: String,
    pub duration: f64,
    pub min_segment: f64,
    pub partition: Partition,
    /// Every head candidate before NMS, in merge order.
    pub candidates: Vec<BoundaryCandidate>,
    #[serde(skip)]
    pub novelty: Option<NoveltyBreakdown>,
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

#[derive(Serialize)]
struct BoundaryDocument<'a> {
    video_id: &'a str,
    duration: f64,
    boundaries: &'a [f64],
    heads: &'a [BoundaryProvenance],
}

impl PartitionReport {
    /// `{video_id, duration, boundaries, heads}` document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&BoundaryDocument {
            video_id: &self.video_id,
            duration: self.duration,
            boundaries: self.partition.boundaries(),
            heads: self.partition.provenance(),
        })
        .expect("boundary document serializes")
    }
}

/// Decode, extract features and partition.
pub fn partition_video(
    source: &VideoSource,
    embedder: &dyn EmbedderPort,
    config: &PartitionConfig,
    exec: Exec,
) -> Result<PartitionReport> {
    let started = Instant::now();
    let grid = uniform_sample(source, config.max_frames)?;
    let frames = decode_frames(source, &grid, exec)?;
    let features = extract_features(&frames, embedder, exec)?;
    let mut report = partition_features(source.id(), source.duration(), &features, config, exec)?;
    report.elapsed_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Partition from precomputed per-frame features.
pub fn partition_features(
    video_id: &str,
    duration: f64,
    features: &[FrameFeatures],
    config: &PartitionConfig,
    exec: Exec,
) -> Result<PartitionReport> {
    let started = Instant::now();
    let min_segment = min_segment_length(duration, config.min_segment_floor);
    if features.len() < 2 {
        return Ok(PartitionReport {
            video_id: video_id.to_string(),
            duration,
            min_segment,
            partition: Partition::whole(duration),
            candidates: Vec::new(),
            novelty: None,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        });
    }
    let novelty = novelty_signal(features, &config.novelty)?;
    let mut candidates = pelt_head(&novelty.signal, min_segment, duration, &config.pelt, exec);

    let times: Vec<f64> = features.iter().map(|f| f.timestamp).collect();
    let raw: Vec<Vec<f64>> = features.iter().map(|f| f.embedding.raw.clone()).collect();
    let grid = resample_embeddings(&times, &raw);
    let gram = GramMatrix::new(&grid.vectors, exec);
    candidates.extend(ssm_head(&grid, &gram, min_segment, &config.embseg));
    candidates.extend(kts_head(&grid, &gram, min_segment, &config.embseg));

    let partition = event_partition(
        duration,
        &candidates,
        min_segment,
        config.max_blocks,
        config.nms_order,
    )?;
    Ok(PartitionReport {
        video_id: video_id.to_string(),
        duration,
        min_segment,
        partition,
        candidates,
        novelty: Some(novelty),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SyntheticEmbedder;
    use crate::ingest::SyntheticVideo;

    #[test]
    fn single_frame_is_one_block() {
        let video = SyntheticVideo::with_cuts(3.0, 1, &[]);
        let src = video.source().unwrap();
        let r = partition_video(&src, &SyntheticEmbedder::thumbnail(), &PartitionConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(r.partition.block_count(), 1);
    }

    #[test]
    fn two_scene_video() {
        let video = SyntheticVideo::with_cuts(25.0, 150, &[11.0]);
        let src = video.source().unwrap();
        let embedder = SyntheticEmbedder::segments(32, 3, video.cut_times());
        let r = partition_video(&src, &embedder, &PartitionConfig::default(), Exec::Parallel).unwrap();
        assert_eq!(r.partition.block_count(), 2, "{:?}", r.partition);
        assert!((r.partition.interior()[0] - 11.0).abs() <= 1.0, "{:?}", r.partition);
        let doc: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(doc["boundaries"].as_array().unwrap().len(), 3);
        assert_eq!(doc["heads"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut video = SyntheticVideo::with_cuts(60.0, 200, &[14.0, 33.0, 47.0]);
        video.noise = 6;
        let src = video.source().unwrap();
        let embedder = SyntheticEmbedder::thumbnail();
        let cfg = PartitionConfig::default();
        let a = partition_video(&src, &embedder, &cfg, Exec::Sequential).unwrap();
        let b = partition_video(&src, &embedder, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a.partition, b.partition);
        assert_eq!(a.candidates, b.candidates);
    }
}
