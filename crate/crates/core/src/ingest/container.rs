//! Container decoding through the `ffprobe`/`ffmpeg` command-line tools.

use std::path::Path;
use std::process::Command;

use image::RgbImage;
use serde::Deserialize;

use super::{Backend, IngestError, VideoSource};

#[derive(Deserialize)]
struct Probe {
    streams: Vec<ProbeStream>,
    format: Option<ProbeFormat>,
}

#[derive(Deserialize)]
struct ProbeStream {
    avg_frame_rate: Option<String>,
    r_frame_rate: Option<String>,
    nb_frames: Option<String>,
    duration: Option<String>,
}

#[derive(Deserialize)]
struct ProbeFormat {
    duration: Option<String>,
}

fn parse_rate(rate: &str) -> Option<f64> {
    match rate.split_once('/') {
        Some((num, den)) => {
            let (num, den): (f64, f64) = (num.parse().ok()?, den.parse().ok()?);
            (den > 0.0 && num > 0.0).then(|| num / den)
        }
        None => rate.parse().ok().filter(|r: &f64| *r > 0.0),
    }
}

pub(super) fn open(path: &Path) -> Result<VideoSource, IngestError> {
    let fail = |reason: String| IngestError::Container {
        path: path.to_path_buf(),
        reason,
    };
    let output = Command::new("ffprobe")
        .args(["-v", "error", "-select_streams", "v:0"])
        .args(["-show_entries", "stream=avg_frame_rate,r_frame_rate,nb_frames,duration"])
        .args(["-show_entries", "format=duration", "-of", "json"])
        .arg(path)
        .output()
        .map_err(|e| fail(format!("ffprobe unavailable: {e}")))?;
    if !output.status.success() {
        return Err(fail(String::from_utf8_lossy(&output.stderr).trim().to_string()));
    }
    let probe: Probe =
        serde_json::from_slice(&output.stdout).map_err(|e| fail(format!("bad probe output: {e}")))?;
    let stream = probe
        .streams
        .first()
        .ok_or_else(|| fail("no video stream".into()))?;
    let fps = stream
        .avg_frame_rate
        .as_deref()
        .and_then(parse_rate)
        .or_else(|| stream.r_frame_rate.as_deref().and_then(parse_rate))
        .ok_or_else(|| fail("unknown frame rate".into()))?;
    let duration = stream
        .duration
        .as_deref()
        .or(probe.format.as_ref().and_then(|f| f.duration.as_deref()))
        .and_then(|d| d.parse::<f64>().ok())
        .ok_or_else(|| fail("unknown duration".into()))?;
    let frames = stream
        .nb_frames
        .as_deref()
        .and_then(|n| n.parse::<usize>().ok())
        .unwrap_or_else(|| (duration * fps).round() as usize);
    if frames == 0 {
        return Err(IngestError::ZeroFrames(path.to_path_buf()));
    }
    let timestamps = (0..frames).map(|i| i as f64 / fps).collect();
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("video")
        .to_string();
    VideoSource::from_parts(
        id,
        duration,
        timestamps,
        Backend::Container {
            path: path.to_path_buf(),
            fps,
        },
    )
}

pub(super) fn decode_at(path: &Path, seconds: f64, index: usize) -> Result<RgbImage, IngestError> {
    let fail = |reason: String| IngestError::Decode { index, reason };
    let output = Command::new("ffmpeg")
        .args(["-v", "error", "-ss", &format!("{seconds:.6}"), "-i"])
        .arg(path)
        .args(["-frames:v", "1", "-f", "image2pipe", "-vcodec", "png", "pipe:1"])
        .output()
        .map_err(|e| fail(format!("ffmpeg unavailable: {e}")))?;
    if !output.status.success() || output.stdout.is_empty() {
        return Err(fail(String::from_utf8_lossy(&output.stderr).trim().to_string()));
    }
    image::load_from_memory(&output.stdout)
        .map(|img| img.to_rgb8())
        .map_err(|e| fail(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_parse() {
        assert_eq!(parse_rate("30/1"), Some(30.0));
        assert_eq!(parse_rate("30000/1001").map(|r| (r * 1000.0).round()), Some(29970.0));
        assert_eq!(parse_rate("0/0"), None);
        assert_eq!(parse_rate("25"), Some(25.0));
    }

    #[test]
    fn garbage_file_is_not_a_container() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.mp4");
        std::fs::write(&path, b"not a video").unwrap();
        let err = open(&path).unwrap_err();
        assert!(matches!(err, IngestError::Container { .. }), "{err}");
    }
}
