//! Procedural test videos with known scene boundaries.

use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{even_timestamps, IngestError, VideoSource};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Scene start in seconds; the first scene should start at 0.
    pub start: f64,
    pub color: [u8; 3],
    /// Optional vertical stripe period in pixels (adds texture/sharpness).
    #[serde(default)]
    pub stripes: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideo {
    #[serde(default = "default_id")]
    pub id: String,
    pub duration: f64,
    pub frames: usize,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    pub scenes: Vec<SceneSpec>,
    /// Per-pixel uniform noise amplitude.
    #[serde(default)]
    pub noise: u8,
    #[serde(default)]
    pub seed: u64,
}

fn default_id() -> String {
    "synthetic".into()
}
fn default_width() -> u32 {
    64
}
fn default_height() -> u32 {
    36
}

impl SyntheticVideo {
    pub fn new(duration: f64, frames: usize, scenes: Vec<SceneSpec>) -> Self {
        Self {
            id: default_id(),
            duration,
            frames,
            width: default_width(),
            height: default_height(),
            scenes,
            noise: 0,
            seed: 0,
        }
    }

    /// Scenes with evenly spread hues starting at the given times.
    pub fn with_cuts(duration: f64, frames: usize, cuts: &[f64]) -> Self {
        const PALETTE: [[u8; 3]; 6] = [
            [200, 40, 40],
            [40, 170, 60],
            [40, 60, 200],
            [210, 190, 40],
            [150, 40, 170],
            [40, 180, 180],
        ];
        let mut starts = vec![0.0];
        starts.extend_from_slice(cuts);
        let scenes = starts
            .iter()
            .enumerate()
            .map(|(i, &start)| SceneSpec {
                start,
                color: PALETTE[i % PALETTE.len()],
                stripes: Some(2 + 3 * (i as u32 % 4)),
            })
            .collect();
        Self::new(duration, frames, scenes)
    }

    pub fn cut_times(&self) -> Vec<f64> {
        self.scenes.iter().skip(1).map(|s| s.start).collect()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        even_timestamps(self.frames, self.duration)
    }

    fn scene_at(&self, t: f64) -> usize {
        self.scenes
            .iter()
            .rposition(|s| s.start <= t)
            .unwrap_or(0)
    }

    pub fn render(&self, index: usize, t: f64) -> RgbImage {
        let scene = self.scene_at(t);
        let spec = &self.scenes[scene];
        let noise = self.noise as i32;
        RgbImage::from_fn(self.width, self.height, |x, y| {
            let mut px = spec.color.map(|c| c as i32);
            if let Some(period) = spec.stripes.filter(|p| *p > 0) {
                if (x / period) % 2 == 1 {
                    px = px.map(|c| c * 3 / 4);
                }
            }
            if noise > 0 {
                for (ch, c) in px.iter_mut().enumerate() {
                    let u = rng::unit_f64(&[self.seed, index as u64, x as u64, y as u64, ch as u64]);
                    *c += (u * (2 * noise + 1) as f64) as i32 - noise;
                }
            }
            Rgb(px.map(|c| c.clamp(0, 255) as u8))
        })
    }

    pub fn images(&self) -> Vec<RgbImage> {
        self.timestamps()
            .iter()
            .enumerate()
            .map(|(i, &t)| self.render(i, t))
            .collect()
    }

    pub fn source(&self) -> Result<VideoSource, IngestError> {
        if self.scenes.is_empty() {
            return Err(IngestError::Invalid("synthetic video needs a scene".into()));
        }
        VideoSource::from_images(self.id.clone(), self.duration, self.images(), None)
    }

    /// Write as `frames/<index>_<ms>.png` plus `meta.json`.
    pub fn write_frames_dir(&self, root: &Path) -> Result<(), IngestError> {
        let frames = root.join("frames");
        let io = |source| IngestError::Io {
            path: frames.clone(),
            source,
        };
        std::fs::create_dir_all(&frames).map_err(io)?;
        for (i, t) in self.timestamps().into_iter().enumerate() {
            let name = format!("{i:06}_{}.png", (t * 1000.0).round() as u64);
            self.render(i, t)
                .save(frames.join(name))
                .map_err(|e| IngestError::Decode {
                    index: i,
                    reason: e.to_string(),
                })?;
        }
        let meta = serde_json::json!({ "id": self.id, "duration": self.duration });
        std::fs::write(root.join("meta.json"), meta.to_string()).map_err(|source| {
            IngestError::Io {
                path: root.join("meta.json"),
                source,
            }
        })
    }
}
