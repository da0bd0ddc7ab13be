//! Per-cue novelty, robust z-scoring and variance-weighted fusion into a
//! single novelty curve on frame midpoints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ColorDescriptor, FrameFeatures};
use crate::stats::{self, EPS, MAD_SCALE};

/// Hue, saturation and value weights for colour novelty.
pub const COLOR_WEIGHTS: [f64; 3] = [0.55, 0.35, 0.10];
/// EMA decay for the embedding state.
pub const EMA_DECAY: f64 = 0.9;
pub const SMOOTHING_WINDOW: usize = 5;
pub const Z_CLIP: f64 = 4.0;
/// Base fusion weights in [`Cue::ALL`] order: colour, motion, embedding, sharpness.
pub const BASE_WEIGHTS: [f64; 4] = [0.20, 0.30, 0.35, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoveltyConfig {
    pub color_weights: [f64; 3],
    pub ema_decay: f64,
    pub smoothing_window: usize,
    pub z_clip: f64,
    pub base_weights: [f64; 4],
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        Self {
            color_weights: COLOR_WEIGHTS,
            ema_decay: EMA_DECAY,
            smoothing_window: SMOOTHING_WINDOW,
            z_clip: Z_CLIP,
            base_weights: BASE_WEIGHTS,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NoveltyError {
    #[error("need at least 2 frames, got {0}")]
    TooShort(usize),
    #[error("embedding length mismatch at frame {index}: {found} vs {expected}")]
    LengthMismatch {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("cue series lengths differ: {0:?}")]
    UnequalCues([usize; 4]),
    #[error("smoothing window must be odd, got {0}")]
    EvenWindow(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cue {
    Color,
    Motion,
    Embedding,
    Sharpness,
}

impl Cue {
    pub const ALL: [Cue; 4] = [Cue::Color, Cue::Motion, Cue::Embedding, Cue::Sharpness];
}

/// One value per consecutive frame pair (r = 2..N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueSeries {
    pub cue: Cue,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltySignal {
    pub midpoints: Vec<f64>,
    pub values: Vec<f64>,
    /// Colour, motion, embedding, sharpness.
    pub fusion_weights: [f64; 4],
}

impl NoveltySignal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn color_novelty(descriptors: &[ColorDescriptor]) -> Result<CueSeries, NoveltyError> {
    color_novelty_weighted(descriptors, COLOR_WEIGHTS)
}

pub fn color_novelty_weighted(
    descriptors: &[ColorDescriptor],
    [a, b, g]: [f64; 3],
) -> Result<CueSeries, NoveltyError> {
    if descriptors.len() < 2 {
        return Err(NoveltyError::TooShort(descriptors.len()));
    }
    let values = descriptors
        .windows(2)
        .map(|w| {
            let (prev, curr) = (&w[0], &w[1]);
            a * stats::cosine_distance(&curr.hist_h, &prev.hist_h)
                + b * stats::cosine_distance(&curr.hist_s, &prev.hist_s)
                + g * stats::cosine_distance(&curr.hist_v, &prev.hist_v)
        })
        .collect();
    Ok(CueSeries { cue: Cue::Color, values })
}

fn abs_diff_series(cue: Cue, values: &[f64]) -> Result<CueSeries, NoveltyError> {
    if values.len() < 2 {
        return Err(NoveltyError::TooShort(values.len()));
    }
    Ok(CueSeries {
        cue,
        values: values.windows(2).map(|w| (w[1] - w[0]).abs()).collect(),
    })
}

pub fn sharpness_novelty(sharpness: &[f64]) -> Result<CueSeries, NoveltyError> {
    abs_diff_series(Cue::Sharpness, sharpness)
}

pub fn motion_novelty(motion: &[f64]) -> Result<CueSeries, NoveltyError> {
    abs_diff_series(Cue::Motion, motion)
}

/// Forward EMA over the raw vectors, `ẽ₁ = e₁`, `ẽᵣ = δ ẽᵣ₋₁ + (1 − δ) eᵣ`.
pub fn ema_states(embeddings: &[Vec<f64>], decay: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(embeddings.len());
    for e in embeddings {
        let next = match out.last() {
            None => e.clone(),
            Some(prev) => prev
                .iter()
                .zip(e)
                .map(|(p, x)| decay * p + (1.0 - decay) * x)
                .collect(),
        };
        out.push(next);
    }
    out
}

/// Mean of the cosine distance to the previous frame and to the normalized
/// EMA of all earlier frames.
pub fn embedding_novelty(embeddings: &[Vec<f64>]) -> Result<CueSeries, NoveltyError> {
    embedding_novelty_with(embeddings, EMA_DECAY)
}

pub fn embedding_novelty_with(embeddings: &[Vec<f64>], decay: f64) -> Result<CueSeries, NoveltyError> {
    if embeddings.len() < 2 {
        return Err(NoveltyError::TooShort(embeddings.len()));
    }
    let dim = embeddings[0].len();
    if let Some((index, e)) = embeddings.iter().enumerate().find(|(_, e)| e.len() != dim) {
        return Err(NoveltyError::LengthMismatch {
            index,
            found: e.len(),
            expected: dim,
        });
    }
    let units: Vec<Vec<f64>> = embeddings.iter().map(|e| stats::unit(e)).collect();
    let ema = ema_states(embeddings, decay);
    let values = (1..embeddings.len())
        .map(|r| {
            let d_prev = stats::cosine_distance(&units[r], &units[r - 1]);
            let d_ema = stats::cosine_distance(&units[r], &stats::unit(&ema[r - 1]));
            0.5 * d_prev + 0.5 * d_ema
        })
        .collect();
    Ok(CueSeries { cue: Cue::Embedding, values })
}

/// `(x − median) / (1.4826 · MAD + ε)` without smoothing or clipping.
pub fn mad_z(values: &[f64]) -> Vec<f64> {
    let med = stats::median(values);
    let scale = MAD_SCALE * stats::mad(values) + EPS;
    values.iter().map(|x| (x - med) / scale).collect()
}

/// Robust z-score, centered moving average of width `window`, then clip to [−4, 4].
pub fn robust_z(series: &CueSeries, window: usize) -> Result<CueSeries, NoveltyError> {
    robust_z_clipped(series, window, Z_CLIP)
}

pub fn robust_z_clipped(series: &CueSeries, window: usize, clip: f64) -> Result<CueSeries, NoveltyError> {
    if window.is_multiple_of(2) {
        return Err(NoveltyError::EvenWindow(window));
    }
    let z = mad_z(&series.values);
    let values = stats::moving_average(&z, window)
        .into_iter()
        .map(|v| v.clamp(-clip, clip))
        .collect();
    Ok(CueSeries {
        cue: series.cue,
        values,
    })
}

/// `w_c = β_c σ_c / Σ β σ`; falls back to normalized base weights when every σ is 0.
pub fn fusion_weights(sigmas: [f64; 4]) -> [f64; 4] {
    fusion_weights_from(BASE_WEIGHTS, sigmas)
}

pub fn fusion_weights_from(base: [f64; 4], sigmas: [f64; 4]) -> [f64; 4] {
    let raw: Vec<f64> = base.iter().zip(sigmas).map(|(b, s)| b * s).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        [raw[0] / total, raw[1] / total, raw[2] / total, raw[3] / total]
    } else {
        let total: f64 = base.iter().sum();
        base.map(|b| b / total)
    }
}

/// Variance-weighted fusion of the four clipped cue series, followed by one
/// more moving average.
pub fn fuse(
    midpoints: &[f64],
    z_col: &CueSeries,
    z_mot: &CueSeries,
    z_emb: &CueSeries,
    z_shp: &CueSeries,
) -> Result<NoveltySignal, NoveltyError> {
    fuse_with(midpoints, [z_col, z_mot, z_emb, z_shp], BASE_WEIGHTS, SMOOTHING_WINDOW)
}

pub fn fuse_with(
    midpoints: &[f64],
    cues: [&CueSeries; 4],
    base: [f64; 4],
    window: usize,
) -> Result<NoveltySignal, NoveltyError> {
    let lens = cues.map(|s| s.values.len());
    if lens.iter().any(|&l| l != lens[0]) || midpoints.len() != lens[0] {
        return Err(NoveltyError::UnequalCues(lens));
    }
    let weights = fusion_weights_from(base, cues.map(|s| stats::std_dev(&s.values)));
    let fused: Vec<f64> = (0..lens[0])
        .map(|r| {
            cues.iter()
                .zip(weights)
                .map(|(s, w)| w * s.values[r])
                .sum()
        })
        .collect();
    Ok(NoveltySignal {
        midpoints: midpoints.to_vec(),
        values: stats::moving_average(&fused, window),
        fusion_weights: weights,
    })
}

/// Intermediate series kept for the optional debug dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyBreakdown {
    pub signal: NoveltySignal,
    /// Clipped z-series in [`Cue::ALL`] order.
    pub z: [Vec<f64>; 4],
}

impl NoveltyBreakdown {
    /// `tau,z_col,z_mot,z_emb,z_shp,fused` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,z_col,z_mot,z_emb,z_shp,fused\n");
        for (r, tau) in self.signal.midpoints.iter().enumerate() {
            out.push_str(&format!(
                "{tau},{},{},{},{},{}\n",
                self.z[0][r], self.z[1][r], self.z[2][r], self.z[3][r], self.signal.values[r]
            ));
        }
        out
    }
}

pub fn novelty_signal(
    features: &[FrameFeatures],
    cfg: &NoveltyConfig,
) -> Result<NoveltyBreakdown, NoveltyError> {
    let w = cfg.smoothing_window;
    if w.is_multiple_of(2) {
        return Err(NoveltyError::EvenWindow(w));
    }
    if features.len() < 2 {
        return Err(NoveltyError::TooShort(features.len()));
    }
    let midpoints: Vec<f64> = features
        .windows(2)
        .map(|w| (w[0].timestamp + w[1].timestamp) / 2.0)
        .collect();
    let colors: Vec<ColorDescriptor> = features.iter().map(|f| f.color.clone()).collect();
    let motion: Vec<f64> = features.iter().map(|f| f.motion).collect();
    let sharp: Vec<f64> = features.iter().map(|f| f.sharpness).collect();
    let embeddings: Vec<Vec<f64>> = features.iter().map(|f| f.embedding.raw.clone()).collect();

    let clip = cfg.z_clip;
    let z_col = robust_z_clipped(&color_novelty_weighted(&colors, cfg.color_weights)?, w, clip)?;
    let z_mot = robust_z_clipped(&motion_novelty(&motion)?, w, clip)?;
    let z_emb = robust_z_clipped(&embedding_novelty_with(&embeddings, cfg.ema_decay)?, w, clip)?;
    let z_shp = robust_z_clipped(&sharpness_novelty(&sharp)?, w, clip)?;
    let signal = fuse_with(&midpoints, [&z_col, &z_mot, &z_emb, &z_shp], cfg.base_weights, w)?;
    Ok(NoveltyBreakdown {
        signal,
        z: [z_col.values, z_mot.values, z_emb.values, z_shp.values],
    })
}
