//! HTTP clients for the model sidecar (`/v1/embed`, `/v1/similarity`, `/v1/health`).

use std::io::Cursor;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::features::EmbedderPort;
use crate::ingest::FrameRecord;
use crate::ports::PortError;
use crate::selection::SimilarityPort;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SidecarConfig {
    pub base_url: String,
    pub timeout_seconds: f64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub batch_size: usize,
}

impl Default for SidecarConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8700".into(),
            timeout_seconds: 30.0,
            retries: 2,
            backoff_ms: 200,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Health {
    pub status: String,
    #[serde(default)]
    pub models: serde_json::Value,
    #[serde(rename = "D", alias = "dimension", default)]
    pub dimension: Option<usize>,
}

struct Reply {
    body: serde_json::Value,
    embedding_dim: Option<usize>,
}

#[derive(Clone)]
struct Client {
    cfg: SidecarConfig,
    agent: ureq::Agent,
}

impl Client {
    fn new(cfg: SidecarConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_seconds)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { cfg, agent }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.cfg.base_url.trim_end_matches('/'), path)
    }

    fn once(&self, path: &str, body: Option<&serde_json::Value>) -> Result<Reply, PortError> {
        let url = self.url(path);
        let sent = match body {
            Some(b) => self.agent.post(&url).send_json(b),
            None => self.agent.get(&url).call(),
        };
        let mut resp = sent.map_err(|e| PortError::Transport {
            retryable: true,
            message: format!("{url}: {e}"),
        })?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(PortError::Transport {
                retryable: true,
                message: format!("{url}: status {status}"),
            });
        }
        if status >= 400 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(PortError::Contract(format!("{url}: status {status}: {text}")));
        }
        let embedding_dim = resp
            .headers()
            .get("x-embedding-dim")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok());
        let body = resp
            .body_mut()
            .read_json::<serde_json::Value>()
            .map_err(|e| PortError::Contract(format!("{url}: bad json: {e}")))?;
        Ok(Reply {
            body,
            embedding_dim,
        })
    }

    fn request(&self, path: &str, body: Option<&serde_json::Value>) -> Result<Reply, PortError> {
        let mut attempt = 0;
        loop {
            match self.once(path, body) {
                Err(e) if e.is_retryable() && attempt < self.cfg.retries => {
                    attempt += 1;
                    log::warn!("sidecar {path} attempt {attempt} failed: {e}");
                    thread::sleep(Duration::from_millis(self.cfg.backoff_ms << (attempt - 1)));
                }
                other => return other,
            }
        }
    }
}

/// PNG-encode and base64 a frame.
pub fn encode_frame(frame: &FrameRecord) -> Result<String, PortError> {
    let mut buf = Cursor::new(Vec::new());
    frame
        .pixels
        .write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| PortError::Contract(format!("png encode of frame {}: {e}", frame.index)))?;
    Ok(STANDARD.encode(buf.into_inner()))
}

fn encode_all(frames: &[FrameRecord]) -> Result<Vec<String>, PortError> {
    frames.iter().map(encode_frame).collect()
}

fn parse_reals(v: &serde_json::Value, what: &str) -> Result<Vec<f64>, PortError> {
    v.as_array()
        .ok_or_else(|| PortError::Contract(format!("{what} is not an array")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .filter(|f| f.is_finite())
                .ok_or_else(|| PortError::Contract(format!("{what} has a non-finite entry")))
        })
        .collect()
}

pub fn health(cfg: &SidecarConfig) -> Result<Health, PortError> {
    let reply = Client::new(cfg.clone()).request("/v1/health", None)?;
    serde_json::from_value(reply.body).map_err(|e| PortError::Contract(format!("health: {e}")))
}

/// Frame embeddings from `POST /v1/embed`.
pub struct RemoteEmbedder {
    client: Client,
    dimension: usize,
}

impl RemoteEmbedder {
    /// Learns the dimension from `/v1/health`.
    pub fn connect(cfg: SidecarConfig) -> Result<Self, PortError> {
        let dimension = health(&cfg)?
            .dimension
            .ok_or_else(|| PortError::Contract("health reply has no dimension".into()))?;
        Ok(Self::with_dimension(cfg, dimension))
    }

    pub fn with_dimension(cfg: SidecarConfig, dimension: usize) -> Self {
        Self {
            client: Client::new(cfg),
            dimension,
        }
    }
}

impl EmbedderPort for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn batch_size(&self) -> usize {
        self.client.cfg.batch_size.max(1)
    }

    fn embed_batch(&self, frames: &[FrameRecord]) -> Result<Vec<Vec<f64>>, PortError> {
        let body = json!({ "images": encode_all(frames)? });
        let reply = self.client.request("/v1/embed", Some(&body))?;
        let declared = reply
            .embedding_dim
            .or_else(|| reply.body.get("dimension").and_then(|d| d.as_u64()).map(|d| d as usize));
        if let Some(d) = declared {
            if d != self.dimension {
                return Err(PortError::Contract(format!(
                    "sidecar dimension {d}, expected {}",
                    self.dimension
                )));
            }
        }
        let vectors = reply
            .body
            .get("vectors")
            .and_then(|v| v.as_array())
            .ok_or_else(|| PortError::Contract("embed reply has no vectors".into()))?;
        if vectors.len() != frames.len() {
            return Err(PortError::Contract(format!(
                "{} vectors for {} images",
                vectors.len(),
                frames.len()
            )));
        }
        let out = vectors
            .iter()
            .map(|v| parse_reals(v, "vector"))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(bad) = out.iter().find(|v| v.len() != self.dimension) {
            return Err(PortError::Contract(format!(
                "vector of length {}, expected {}",
                bad.len(),
                self.dimension
            )));
        }
        Ok(out)
    }
}

/// Text-frame similarity from `POST /v1/similarity`.
pub struct RemoteSimilarity {
    client: Client,
}

impl RemoteSimilarity {
    pub fn new(cfg: SidecarConfig) -> Self {
        Self {
            client: Client::new(cfg),
        }
    }
}

impl SimilarityPort for RemoteSimilarity {
    fn similarity(&self, text: &str, frames: &[FrameRecord]) -> Result<Vec<f64>, PortError> {
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(self.client.cfg.batch_size.max(1)) {
            let body = json!({ "text": text, "images": encode_all(chunk)? });
            let reply = self.client.request("/v1/similarity", Some(&body))?;
            let scores = parse_reals(
                reply
                    .body
                    .get("scores")
                    .ok_or_else(|| PortError::Contract("similarity reply has no scores".into()))?,
                "scores",
            )?;
            if scores.len() != chunk.len() {
                return Err(PortError::Contract(format!(
                    "{} scores for {} images",
                    scores.len(),
                    chunk.len()
                )));
            }
            if scores.iter().any(|s| !(-1.0..=1.0).contains(s)) {
                return Err(PortError::Contract("similarity outside [-1, 1]".into()));
            }
            out.extend(scores);
        }
        Ok(out)
    }
}
