//! Dialogue backends: a scripted response table with a latency model, or
//! an HTTP endpoint called off the worker thread.

use std::collections::BTreeMap;
use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::conversation::Turn;
use crate::bus::Millis;
use crate::config::{DialogueConfig, LatencyModel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DialogueError {
    #[error("dialogue backend timed out")]
    BackendTimeout,
    #[error("dialogue backend failed: {0}")]
    Backend(String),
}

pub trait DialogueBackend: Send {
    /// Starts a request; any request still pending is abandoned.
    fn request(&mut self, now: Millis, history: &[Turn], partner: u64);

    /// The reply, once available at `now`.
    fn poll(&mut self, now: Millis) -> Option<Result<String, DialogueError>>;

    fn cancel(&mut self);
}

/// Lower-case, punctuation stripped, single spaces.
pub fn normalize_utterance(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub struct ScriptedDialogue {
    table: BTreeMap<String, String>,
    default_reply: String,
    latency: LatencyModel,
    timeout_ms: Millis,
    rng: ChaCha8Rng,
    pending: Option<(Millis, Result<String, DialogueError>)>,
}

impl ScriptedDialogue {
    pub fn new(table: BTreeMap<String, String>, default_reply: String, latency: LatencyModel, timeout_ms: Millis, seed: u64) -> Self {
        Self {
            table: table.into_iter().map(|(k, v)| (normalize_utterance(&k), v)).collect(),
            default_reply,
            latency,
            timeout_ms,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
        }
    }

    pub fn from_config(cfg: &DialogueConfig, seed: u64) -> Self {
        Self::new(cfg.responses.clone(), cfg.default_reply.clone(), cfg.latency, cfg.timeout_ms, seed)
    }

    pub fn reply_for(&self, user_text: &str) -> &str {
        self.table
            .get(&normalize_utterance(user_text))
            .map_or(self.default_reply.as_str(), String::as_str)
    }

    fn sample_latency(&mut self) -> Millis {
        match self.latency {
            LatencyModel::Fixed { ms } => ms,
            LatencyModel::Uniform { min, max } => self.rng.random_range(min..=max.max(min)),
        }
    }
}

impl DialogueBackend for ScriptedDialogue {
    fn request(&mut self, now: Millis, history: &[Turn], _partner: u64) {
        let latency = self.sample_latency();
        let user = history.iter().rev().find(|t| t.is_user()).map_or("", |t| t.text.as_str());
        let reply = self.reply_for(user).to_string();
        self.pending = Some(if latency > self.timeout_ms {
            (now + self.timeout_ms, Err(DialogueError::BackendTimeout))
        } else {
            (now + latency, Ok(reply))
        });
    }

    fn poll(&mut self, now: Millis) -> Option<Result<String, DialogueError>> {
        match &self.pending {
            Some((ready, _)) if *ready <= now => self.pending.take().map(|(_, r)| r),
            _ => None,
        }
    }

    fn cancel(&mut self) {
        self.pending = None;
    }
}

#[derive(Serialize)]
struct HttpTurn<'a> {
    role: &'static str,
    text: &'a str,
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    history: Vec<HttpTurn<'a>>,
    partner_id: u64,
}

#[derive(Deserialize)]
struct HttpReply {
    text: String,
}

/// Posts the history to an HTTP endpoint on a helper thread so the
/// speaking worker keeps publishing flags while waiting.
pub struct HttpDialogue {
    url: String,
    timeout_ms: Millis,
    pending: Option<Receiver<Result<String, DialogueError>>>,
}

impl HttpDialogue {
    pub fn new(url: impl Into<String>, timeout_ms: Millis) -> Self {
        Self {
            url: url.into(),
            timeout_ms,
            pending: None,
        }
    }
}

impl DialogueBackend for HttpDialogue {
    fn request(&mut self, _now: Millis, history: &[Turn], partner: u64) {
        let body = serde_json::to_value(HttpRequest {
            history: history
                .iter()
                .map(|t| HttpTurn {
                    role: if t.is_user() { "user" } else { "assistant" },
                    text: &t.text,
                })
                .collect(),
            partner_id: partner,
        })
        .expect("request serializes");
        let (tx, rx) = mpsc::channel();
        let url = self.url.clone();
        let timeout = Duration::from_millis(self.timeout_ms);
        thread::spawn(move || {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .build()
                .into();
            let result = agent
                .post(&url)
                .send_json(&body)
                .and_then(|r| r.into_body().read_json::<HttpReply>())
                .map(|r| r.text)
                .map_err(|e| match e {
                    ureq::Error::Timeout(_) => DialogueError::BackendTimeout,
                    other => DialogueError::Backend(other.to_string()),
                });
            let _ = tx.send(result);
        });
        self.pending = Some(rx);
    }

    fn poll(&mut self, _now: Millis) -> Option<Result<String, DialogueError>> {
        let rx = self.pending.as_ref()?;
        match rx.try_recv() {
            Ok(r) => {
                self.pending = None;
                Some(r)
            }
            Err(TryRecvError::Empty) => None,
            Err(TryRecvError::Disconnected) => {
                self.pending = None;
                Some(Err(DialogueError::Backend("worker vanished".into())))
            }
        }
    }

    fn cancel(&mut self) {
        self.pending = None;
    }
}
