//! Agent transports: scripted mocks and a chat-completion HTTP client.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ingest::FrameRecord;
use crate::ports::PortError;
use crate::sidecar::encode_frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Clue,
    Act,
    Reason,
    Eval,
    Refine,
    Summarize,
}

impl Capability {
    pub const ALL: [Capability; 6] = [
        Capability::Clue,
        Capability::Act,
        Capability::Reason,
        Capability::Eval,
        Capability::Refine,
        Capability::Summarize,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Capability::Clue => "clue",
            Capability::Act => "act",
            Capability::Reason => "reason",
            Capability::Eval => "eval",
            Capability::Refine => "refine",
            Capability::Summarize => "summarize",
        };
        f.write_str(name)
    }
}

pub struct AgentRequest<'a> {
    pub question_id: &'a str,
    pub capability: Capability,
    pub round: u32,
    /// True for the constrained re-prompt after an unparseable answer.
    pub retry: bool,
    pub prompt: String,
    pub frames: &'a [FrameRecord],
}

pub trait AgentBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &AgentRequest<'_>) -> Result<String, PortError>;
}

/// One canned reply. `None` fields match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default)]
    pub question: Option<String>,
    pub capability: Capability,
    #[serde(default)]
    pub round: Option<u32>,
    #[serde(default)]
    pub retry: Option<bool>,
    pub output: String,
    /// If set, `output` is used only when some attached frame lies in
    /// `[start, end)`; otherwise `otherwise` is returned.
    #[serde(default)]
    pub when_frames_in: Option<(f64, f64)>,
    #[serde(default)]
    pub otherwise: Option<String>,
    /// Simulate a transport failure instead of replying.
    #[serde(default)]
    pub fail: bool,
}

impl ScriptEntry {
    pub fn new(capability: Capability, output: impl Into<String>) -> Self {
        Self {
            question: None,
            capability,
            round: None,
            retry: None,
            output: output.into(),
            when_frames_in: None,
            otherwise: None,
            fail: false,
        }
    }

    pub fn question(mut self, id: impl Into<String>) -> Self {
        self.question = Some(id.into());
        self
    }

    pub fn round(mut self, round: u32) -> Self {
        self.round = Some(round);
        self
    }

    fn matches(&self, req: &AgentRequest<'_>) -> bool {
        self.capability == req.capability
            && self
                .question
                .as_deref()
                .is_none_or(|q| q == "*" || q == req.question_id)
            && self.round.is_none_or(|r| r == req.round)
            && self.retry.is_none_or(|r| r == req.retry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentScript {
    pub id: String,
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
}

/// Replays an [`AgentScript`]. The first matching entry wins; with no match
/// the reply is empty.
pub struct ScriptedBackend {
    script: AgentScript,
    calls: [AtomicUsize; 6],
    log: Mutex<Vec<(String, Capability, u32)>>,
}

impl ScriptedBackend {
    pub fn new(script: AgentScript) -> Self {
        Self {
            script,
            calls: Default::default(),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self, capability: Capability) -> usize {
        self.calls[capability.slot()].load(Ordering::SeqCst)
    }

    pub fn call_log(&self) -> Vec<(String, Capability, u32)> {
        self.log.lock().unwrap().clone()
    }
}

impl AgentBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.script.id
    }

    fn complete(&self, req: &AgentRequest<'_>) -> Result<String, PortError> {
        self.calls[req.capability.slot()].fetch_add(1, Ordering::SeqCst);
        self.log
            .lock()
            .unwrap()
            .push((req.question_id.to_string(), req.capability, req.round));
        let Some(entry) = self.script.entries.iter().find(|e| e.matches(req)) else {
            return Ok(String::new());
        };
        if entry.fail {
            return Err(PortError::Transport {
                retryable: false,
                message: format!("{}: scripted failure", self.script.id),
            });
        }
        match entry.when_frames_in {
            Some((a, b)) if !req.frames.iter().any(|f| f.timestamp >= a && f.timestamp < b) => {
                Ok(entry.otherwise.clone().unwrap_or_default())
            }
            _ => Ok(entry.output.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatEndpoint {
    pub id: String,
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    2
}

/// OpenAI-style `chat/completions` client; frames go as PNG data URIs.
pub struct ChatBackend {
    endpoint: ChatEndpoint,
    token: Option<String>,
    agent: ureq::Agent,
}

impl ChatBackend {
    pub fn new(endpoint: ChatEndpoint) -> Self {
        let token = endpoint
            .token_env
            .as_deref()
            .and_then(|v| std::env::var(v).ok());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(endpoint.timeout_seconds)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint,
            token,
            agent,
        }
    }

    pub fn body(&self, req: &AgentRequest<'_>) -> Result<serde_json::Value, PortError> {
        let mut content = vec![json!({"type": "text", "text": req.prompt})];
        for f in req.frames {
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{}", encode_frame(f)?)}
            }));
        }
        let mut body = json!({
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": 0,
        });
        if let Some(m) = self.endpoint.max_tokens {
            body["max_tokens"] = json!(m);
        }
        Ok(body)
    }

    fn once(&self, body: &serde_json::Value) -> Result<String, PortError> {
        let url = &self.endpoint.url;
        let mut request = self.agent.post(url);
        if let Some(t) = &self.token {
            request = request.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = request.send_json(body).map_err(|e| PortError::Transport {
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
            return Err(PortError::Transport {
                retryable: false,
                message: format!("{url}: status {status}"),
            });
        }
        let v: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| PortError::Contract(format!("{url}: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| PortError::Contract(format!("{url}: reply has no message content")))
    }
}

impl AgentBackend for ChatBackend {
    fn id(&self) -> &str {
        &self.endpoint.id
    }

    fn complete(&self, req: &AgentRequest<'_>) -> Result<String, PortError> {
        let body = self.body(req)?;
        let mut attempt = 0;
        loop {
            match self.once(&body) {
                Err(e) if e.is_retryable() && attempt < self.endpoint.retries => {
                    attempt += 1;
                    log::warn!("{} attempt {attempt} failed: {e}", self.endpoint.id);
                    std::thread::sleep(Duration::from_millis(500 << attempt));
                }
                other => return other,
            }
        }
    }
}

/// Scripts keyed by agent id, as stored in scenario files.
pub fn scripted_pool(scripts: &[AgentScript]) -> Vec<std::sync::Arc<ScriptedBackend>> {
    scripts
        .iter()
        .cloned()
        .map(|s| std::sync::Arc::new(ScriptedBackend::new(s)))
        .collect()
}

/// Call counts per capability for a set of scripted agents.
pub fn total_calls(agents: &[std::sync::Arc<ScriptedBackend>]) -> HashMap<Capability, usize> {
    Capability::ALL
        .iter()
        .map(|&c| (c, agents.iter().map(|a| a.calls(c)).sum()))
        .collect()
}
