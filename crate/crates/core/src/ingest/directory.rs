use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::Deserialize;

use super::{Backend, IngestError, VideoSource};

#[derive(Debug, Default, Deserialize)]
struct Meta {
    id: Option<String>,
    duration: Option<f64>,
    fps: Option<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// `<index>_<milliseconds>` stem.
fn parse_stem(path: &Path) -> Option<(u64, f64)> {
    let stem = path.file_stem()?.to_str()?;
    let (idx, ms) = stem.split_once('_')?;
    Some((idx.parse().ok()?, ms.parse::<f64>().ok()? / 1000.0))
}

pub(super) fn open(root: &Path) -> Result<VideoSource, IngestError> {
    let frames_dir = if root.join("frames").is_dir() {
        root.join("frames")
    } else {
        root.to_path_buf()
    };
    let meta_path = root.join("meta.json");
    let meta: Meta = if meta_path.is_file() {
        let text = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        serde_json::from_str(&text)
            .map_err(|e| IngestError::Invalid(format!("{}: {e}", meta_path.display())))?
    } else {
        Meta::default()
    };

    let mut files: Vec<PathBuf> = std::fs::read_dir(&frames_dir)
        .map_err(io_err(&frames_dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| is_image(p))
        .collect();
    if files.is_empty() {
        return Err(IngestError::ZeroFrames(frames_dir));
    }

    let parsed: Option<Vec<(u64, f64)>> = files.iter().map(|p| parse_stem(p)).collect();
    let timestamps = match (parsed, meta.fps) {
        (Some(mut keyed), _) => {
            let mut paired: Vec<((u64, f64), PathBuf)> = keyed.drain(..).zip(files).collect();
            paired.sort_by(|a, b| a.0 .0.cmp(&b.0 .0).then(a.0 .1.total_cmp(&b.0 .1)));
            files = paired.iter().map(|(_, p)| p.clone()).collect();
            paired.iter().map(|((_, t), _)| *t).collect::<Vec<f64>>()
        }
        (None, Some(fps)) if fps > 0.0 => {
            files.sort();
            (0..files.len()).map(|i| i as f64 / fps).collect()
        }
        (None, _) => {
            return Err(IngestError::Invalid(format!(
                "{}: frame names must be <index>_<ms>.png or meta.json must give fps",
                frames_dir.display()
            )))
        }
    };

    let duration = meta
        .duration
        .unwrap_or_else(|| timestamps.last().copied().unwrap_or(0.0));
    if let Some(&last) = timestamps.last() {
        if last > duration + 1e-9 {
            return Err(IngestError::Invalid(format!(
                "frame at {last}s lies past duration {duration}s"
            )));
        }
    }
    let id = meta.id.unwrap_or_else(|| {
        root.file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("video")
            .to_string()
    });
    VideoSource::from_parts(id, duration, timestamps, Backend::Directory(files))
}

pub(super) fn load_image(path: &Path, index: usize) -> Result<RgbImage, IngestError> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| IngestError::Decode {
            index,
            reason: format!("{}: {e}", path.display()),
        })
}
