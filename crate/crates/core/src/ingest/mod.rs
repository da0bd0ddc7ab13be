//! Video sources, uniform sampling grids and frame decoding.

mod container;
mod directory;
mod synthetic;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use thiserror::Error;

use crate::exec::Exec;

pub use synthetic::{SceneSpec, SyntheticVideo};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("zero frames in {0}")]
    ZeroFrames(PathBuf),
    #[error("undecodable container {path}: {reason}")]
    Container { path: PathBuf, reason: String },
    #[error("failed to decode frame {index}: {reason}")]
    Decode { index: usize, reason: String },
    #[error("invalid source: {0}")]
    Invalid(String),
    #[error("max_frames must be at least 2, got {0}")]
    GridTooSmall(usize),
}

/// One decoded frame. `index` is 0-based within the source.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp: f64,
    pub pixels: Arc<RgbImage>,
}

/// Strictly increasing frame indices chosen from a source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleGrid {
    indices: Vec<usize>,
}

impl SampleGrid {
    pub fn new(indices: Vec<usize>) -> Result<Self, IngestError> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IngestError::Invalid("grid indices must be strictly increasing".into()));
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug)]
enum Backend {
    Directory(Vec<PathBuf>),
    Container { path: PathBuf, fps: f64 },
    Memory(Vec<Arc<RgbImage>>),
}

#[derive(Debug)]
struct Inner {
    id: String,
    duration: f64,
    timestamps: Vec<f64>,
    backend: Backend,
}

/// An opened video. Cheap to clone; immutable after open.
#[derive(Debug, Clone)]
pub struct VideoSource {
    inner: Arc<Inner>,
}

impl VideoSource {
    fn from_parts(
        id: String,
        duration: f64,
        timestamps: Vec<f64>,
        backend: Backend,
    ) -> Result<Self, IngestError> {
        if timestamps.is_empty() {
            return Err(IngestError::Invalid("zero frames".into()));
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(IngestError::Invalid(format!(
                "duration must be positive, got {duration}"
            )));
        }
        if timestamps.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(IngestError::Invalid("timestamps must be strictly increasing".into()));
        }
        Ok(Self {
            inner: Arc::new(Inner {
                id,
                duration,
                timestamps,
                backend,
            }),
        })
    }

    /// In-memory source; frames are spread evenly when `timestamps` is `None`.
    pub fn from_images(
        id: impl Into<String>,
        duration: f64,
        images: Vec<RgbImage>,
        timestamps: Option<Vec<f64>>,
    ) -> Result<Self, IngestError> {
        let n = images.len();
        let timestamps = timestamps.unwrap_or_else(|| even_timestamps(n, duration));
        if timestamps.len() != n {
            return Err(IngestError::Invalid(format!(
                "{} timestamps for {n} images",
                timestamps.len()
            )));
        }
        let images = images.into_iter().map(Arc::new).collect();
        Self::from_parts(id.into(), duration, timestamps, Backend::Memory(images))
    }

    pub fn id(&self) -> &str {
        &self.inner.id
    }

    pub fn duration(&self) -> f64 {
        self.inner.duration
    }

    pub fn frame_count(&self) -> usize {
        self.inner.timestamps.len()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.inner.timestamps
    }

    pub fn timestamp(&self, index: usize) -> f64 {
        self.inner.timestamps[index]
    }

    fn decode_one(&self, index: usize) -> Result<FrameRecord, IngestError> {
        if index >= self.frame_count() {
            return Err(IngestError::Decode {
                index,
                reason: format!("index out of range for {} frames", self.frame_count()),
            });
        }
        let pixels = match &self.inner.backend {
            Backend::Directory(paths) => Arc::new(directory::load_image(&paths[index], index)?),
            Backend::Container { path, fps } => {
                Arc::new(container::decode_at(path, index as f64 / fps, index)?)
            }
            Backend::Memory(images) => Arc::clone(&images[index]),
        };
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(IngestError::Decode {
                index,
                reason: "empty raster".into(),
            });
        }
        Ok(FrameRecord {
            index,
            timestamp: self.timestamp(index),
            pixels,
        })
    }
}

pub(crate) fn even_timestamps(n: usize, duration: f64) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0; n];
    }
    (0..n).map(|i| i as f64 * duration / (n - 1) as f64).collect()
}

/// Open a frame directory (`frames/<index>_<ms>.png`, optional `meta.json`)
/// or a video container. Decoding is deferred to [`decode_frames`].
pub fn open_source(path: impl AsRef<Path>) -> Result<VideoSource, IngestError> {
    let path = path.as_ref();
    let meta = std::fs::metadata(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if meta.is_dir() {
        directory::open(path)
    } else {
        container::open(path)
    }
}

/// At most `max_frames` indices spread evenly over the source, always
/// including the first and last frame.
pub fn uniform_sample(source: &VideoSource, max_frames: usize) -> Result<SampleGrid, IngestError> {
    uniform_indices(source.frame_count(), max_frames).map(|indices| SampleGrid { indices })
}

pub fn uniform_indices(n: usize, max_frames: usize) -> Result<Vec<usize>, IngestError> {
    if max_frames < 2 {
        return Err(IngestError::GridTooSmall(max_frames));
    }
    if n <= max_frames {
        return Ok((0..n).collect());
    }
    let step = (n - 1) as f64 / (max_frames - 1) as f64;
    Ok((0..max_frames)
        .map(|k| (k as f64 * step).round() as usize)
        .collect())
}

/// Decode every grid index, in grid order.
pub fn decode_frames(
    source: &VideoSource,
    grid: &SampleGrid,
    exec: Exec,
) -> Result<Vec<FrameRecord>, IngestError> {
    decode_indices(source, grid.indices(), exec)
}

pub fn decode_indices(
    source: &VideoSource,
    indices: &[usize],
    exec: Exec,
) -> Result<Vec<FrameRecord>, IngestError> {
    exec.map(indices, |&i| source.decode_one(i))
        .into_iter()
        .collect()
}
