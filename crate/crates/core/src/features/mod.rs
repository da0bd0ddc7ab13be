//! Per-frame descriptors: HSV histograms, Laplacian sharpness, gray-level
//! motion and embedding vectors.

mod color;
mod embed;
mod pixel;

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::ingest::FrameRecord;
use crate::ports::PortError;

pub use color::{hsv_histogram, rgb_to_hsv, ColorDescriptor, BINS};
pub use embed::{embed_frames, EmbedderPort, Embedding, SyntheticEmbedder, SyntheticMode};
pub use pixel::{downscale, laplacian, motion, sharpness, to_gray, GrayFrame, WORKING_SIDE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub index: usize,
    pub timestamp: f64,
    pub color: ColorDescriptor,
    pub sharpness: f64,
    /// 0 for the first frame of a sequence.
    pub motion: f64,
    pub embedding: Embedding,
}

/// Compute all four cues for a time-ordered frame sequence.
pub fn extract_features(
    frames: &[FrameRecord],
    embedder: &dyn EmbedderPort,
    exec: Exec,
) -> Result<Vec<FrameFeatures>, PortError> {
    let pixel: Vec<(ColorDescriptor, GrayFrame, f64)> = exec.map(frames, |f| {
        let small = downscale(&f.pixels);
        let gray = to_gray(&small);
        let sharp = sharpness(&gray);
        (hsv_histogram(&small), gray, sharp)
    });
    let motions: Vec<f64> = exec.map_indexed(frames.len(), |r| {
        if r == 0 {
            return 0.0;
        }
        let (prev, curr) = (&pixel[r - 1].1, &pixel[r].1);
        if prev.width != curr.width || prev.height != curr.height {
            // Mixed-resolution inputs: compare on a common raster.
            let target = image::imageops::resize(
                frames[r].pixels.as_ref(),
                prev.width as u32,
                prev.height as u32,
                image::imageops::FilterType::Triangle,
            );
            return motion(prev, &to_gray(&target));
        }
        motion(prev, curr)
    });
    let embeddings = embed_frames(frames, embedder, exec)?;
    Ok(frames
        .iter()
        .zip(pixel)
        .zip(motions)
        .zip(embeddings)
        .map(|(((f, (color, _, sharp)), m), embedding)| FrameFeatures {
            index: f.index,
            timestamp: f.timestamp,
            color,
            sharpness: sharp,
            motion: m,
            embedding,
        })
        .collect())
}
