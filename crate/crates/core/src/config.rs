//! Run configuration: one TOML document, defaults for every field.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alliance::{DeliberationConfig, StopMode};
use crate::exec::Exec;
use crate::features::SyntheticEmbedder;
use crate::pipeline::PartitionConfig;
use crate::selection::SyntheticSimilarity;
use crate::sidecar::SidecarConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortKind {
    #[default]
    Synthetic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: PortKind,
    pub synthetic: SyntheticEmbedder,
    pub remote: SidecarConfig,
    /// Expected remote dimension; asked from `/v1/health` when unset.
    pub dimension: Option<usize>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: PortKind::Synthetic,
            synthetic: SyntheticEmbedder::thumbnail(),
            remote: SidecarConfig::default(),
            dimension: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityConfig {
    pub kind: PortKind,
    pub synthetic: SyntheticSimilarity,
    pub remote: SidecarConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub exec: Exec,
    /// Questions deliberated at once by `run`.
    pub workers: usize,
    /// Agents kept by teaming.
    pub team_size: usize,
    pub partition: PartitionConfig,
    pub deliberation: DeliberationConfig,
    pub embedder: EmbedderConfig,
    pub similarity: SimilarityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            exec: Exec::default(),
            workers: 4,
            team_size: 3,
            partition: PartitionConfig::default(),
            deliberation: DeliberationConfig::default(),
            embedder: EmbedderConfig::default(),
            similarity: SimilarityConfig::default(),
        }
    }
}

fn check(ok: bool, message: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid(message()))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.deliberation;
        let p = &self.partition;
        let n = &p.novelty;
        check(d.rho > 0.0 && d.rho < 1.0, || format!("rho must lie in (0, 1), got {}", d.rho))?;
        check(d.n1 >= 1, || "n1 must be at least 1".into())?;
        check(d.n2 >= 1, || "n2 must be at least 1".into())?;
        check(d.frames_per_block >= 1, || "frames_per_block must be at least 1".into())?;
        check(p.max_blocks >= 1, || "max_blocks must be at least 1".into())?;
        check(p.max_frames >= 2, || "max_frames must be at least 2".into())?;
        check(p.min_segment_floor > 0.0, || "min_segment_floor must be positive".into())?;
        check(n.smoothing_window % 2 == 1, || {
            format!("smoothing_window must be odd, got {}", n.smoothing_window)
        })?;
        check((0.0..1.0).contains(&n.ema_decay), || "ema_decay must lie in [0, 1)".into())?;
        check(n.z_clip > 0.0, || "z_clip must be positive".into())?;
        check(!p.pelt.resolutions.is_empty() && p.pelt.resolutions.iter().all(|r| *r > 0.0), || {
            "pelt resolutions must be positive".into()
        })?;
        check(p.pelt.penalty_multipliers.iter().all(|m| *m > 0.0), || {
            "penalty multipliers must be positive".into()
        })?;
        for (name, q) in [
            ("strength_quantile", p.pelt.strength_quantile),
            ("ssm_quantile", p.embseg.ssm_quantile),
        ] {
            check((0.0..=1.0).contains(&q), || format!("{name} must lie in [0, 1]"))?;
        }
        check(p.embseg.kts_penalty >= 0.0, || "kts_penalty must be non-negative".into())?;
        if let StopMode::FixedRounds { max_rounds } = d.stop {
            check(max_rounds >= 1, || "max_rounds must be at least 1".into())?;
        }
        check(self.workers >= 1, || "workers must be at least 1".into())?;
        check(self.team_size >= 1, || "team_size must be at least 1".into())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml(), "echo").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn default_constants() {
        let cfg = RunConfig::default();
        let d = &cfg.deliberation;
        assert_eq!((d.n1, d.n2, d.rho), (4, 16, 0.8));
        let p = &cfg.partition;
        assert_eq!((p.max_frames, p.max_blocks, p.min_segment_floor), (200, 6, 2.0));
        assert_eq!(p.pelt.resolutions, vec![0.25, 0.5, 1.0]);
        assert_eq!(p.embseg.kts_penalty, 1.4);
        assert_eq!(p.novelty.ema_decay, 0.9);
        assert_eq!(p.novelty.smoothing_window, 5);
        assert_eq!(p.novelty.base_weights, [0.20, 0.30, 0.35, 0.05]);
        assert_eq!(p.novelty.color_weights, [0.55, 0.35, 0.10]);
        assert_eq!(cfg.team_size, 3);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = RunConfig::from_toml("[deliberation]\nn2 = 8\n", "t").unwrap();
        assert_eq!(cfg.deliberation.n2, 8);
        assert_eq!(cfg.deliberation.n1, 4);
        let cfg = RunConfig::from_toml(
            "[deliberation.stop]\nkind = \"fixed-rounds\"\nmax_rounds = 2\n",
            "t",
        )
        .unwrap();
        assert_eq!(cfg.deliberation.stop, StopMode::FixedRounds { max_rounds: 2 });
    }

    #[test]
    fn rejects_bad_values() {
        for doc in [
            "[deliberation]\nrho = 1.0\n",
            "[deliberation]\nrho = 0.0\n",
            "[deliberation]\nn2 = 0\n",
            "[partition]\nmax_blocks = 0\n",
            "[partition.novelty]\nsmoothing_window = 4\n",
        ] {
            assert!(
                matches!(RunConfig::from_toml(doc, "t"), Err(ConfigError::Invalid(_))),
                "{doc}"
            );
        }
        assert!(matches!(
            RunConfig::from_toml("[deliberation\n", "t"),
            Err(ConfigError::Parse { .. })
        ));
    }
}
