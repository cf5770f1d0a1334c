//! Speech segment transcription.
//!
//! The simulated source reads what the scripted actors actually said during
//! a segment. An HTTP client can replace it; a translation hook sits on the
//! same path and passes text through unchanged by default.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::diarize::SpeakerAssignment;
use super::vad::VadDecision;
use crate::bus::Millis;
use crate::config::TranscriptionConfig;
use crate::simworld::Utterance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub t: Millis,
    pub segment_id: u64,
    pub t_start: Millis,
    pub t_end: Millis,
    pub track_id: Option<u64>,
    pub text: String,
    pub language: String,
    /// Nothing was recognised in the segment.
    pub empty: bool,
}

/// A closed speech segment with its time span and attributed speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDescriptor {
    pub segment_id: u64,
    pub t_start: Millis,
    pub t_end: Millis,
    pub speaker_id: Option<u64>,
    /// Text the simulated source found for the span.
    pub sim_text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TranscribeError {
    #[error("transcription backend timed out")]
    BackendTimeout,
    #[error("transcription backend failed: {0}")]
    Backend(String),
}

/// Shared, append-only record of what actors said. The world writes it;
/// the simulated transcription source reads it.
#[derive(Debug, Clone, Default)]
pub struct UtteranceLog(Arc<RwLock<Vec<Utterance>>>);

impl UtteranceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn replace(&self, utterances: &[Utterance]) {
        let mut g = self.0.write().unwrap_or_else(|e| e.into_inner());
        g.clear();
        g.extend_from_slice(utterances);
    }

    /// Texts overlapping `[from, to]`, concatenated in start-time order.
    pub fn text_between(&self, from: Millis, to: Millis) -> String {
        let g = self.0.read().unwrap_or_else(|e| e.into_inner());
        let mut hits: Vec<&Utterance> = g.iter().filter(|u| u.overlaps(from, to)).collect();
        hits.sort_by_key(|u| u.start);
        hits.iter().map(|u| u.text.as_str()).collect::<Vec<_>>().join(" ")
    }
}

pub trait TranscriptionSource: Send {
    /// Returns `(text, language)`.
    fn transcribe(&mut self, seg: &SegmentDescriptor) -> Result<(String, String), TranscribeError>;
}

pub struct SimulatedTranscription {
    pub language: String,
}

impl TranscriptionSource for SimulatedTranscription {
    fn transcribe(&mut self, seg: &SegmentDescriptor) -> Result<(String, String), TranscribeError> {
        Ok((seg.sim_text.clone(), self.language.clone()))
    }
}

pub struct HttpTranscription {
    url: String,
    agent: ureq::Agent,
}

impl HttpTranscription {
    pub fn new(url: impl Into<String>, timeout_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .build()
            .into();
        Self { url: url.into(), agent }
    }
}

#[derive(Deserialize)]
struct HttpReply {
    text: String,
    #[serde(default)]
    language: String,
}

impl TranscriptionSource for HttpTranscription {
    fn transcribe(&mut self, seg: &SegmentDescriptor) -> Result<(String, String), TranscribeError> {
        let resp = self.agent.post(&self.url).send_json(seg).map_err(map_http_err)?;
        let reply: HttpReply = resp.into_body().read_json().map_err(map_http_err)?;
        Ok((reply.text, reply.language))
    }
}

pub(crate) fn map_http_err(e: ureq::Error) -> TranscribeError {
    match e {
        ureq::Error::Timeout(_) => TranscribeError::BackendTimeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
            TranscribeError::BackendTimeout
        }
        other => TranscribeError::Backend(other.to_string()),
    }
}

pub type TranslateHook = Box<dyn FnMut(String, String) -> (String, String) + Send>;

/// Builds closed segments from the VAD stream and transcribes them.
pub struct Transcriber {
    source: Box<dyn TranscriptionSource>,
    translate: TranslateHook,
    log: UtteranceLog,
    frame_ms: Millis,
    run_start: Option<Millis>,
    open: Option<(u64, Millis, Millis)>,
    votes: BTreeMap<Millis, Vec<u64>>,
}

impl Transcriber {
    pub fn new(source: Box<dyn TranscriptionSource>, log: UtteranceLog, frame_ms: Millis) -> Self {
        Self {
            source,
            translate: Box::new(|text, lang| (text, lang)),
            log,
            frame_ms,
            run_start: None,
            open: None,
            votes: BTreeMap::new(),
        }
    }

    pub fn from_config(cfg: &TranscriptionConfig, log: UtteranceLog, frame_ms: Millis) -> Self {
        let source: Box<dyn TranscriptionSource> = match &cfg.url {
            Some(url) => Box::new(HttpTranscription::new(url.clone(), cfg.timeout_ms)),
            None => Box::new(SimulatedTranscription {
                language: cfg.language.clone(),
            }),
        };
        Self::new(source, log, frame_ms)
    }

    pub fn set_translate_hook(&mut self, hook: TranslateHook) {
        self.translate = hook;
    }

    /// Records the diarized speakers of a frame.
    pub fn on_speakers(&mut self, sa: &SpeakerAssignment) {
        let ids: Vec<u64> = sa.speaking_tracks().collect();
        if !ids.is_empty() {
            self.votes.entry(sa.t).or_default().extend(ids);
        }
    }

    /// Feeds one VAD decision; returns the segment it closed, if any.
    pub fn on_vad(&mut self, t: Millis, d: &VadDecision) -> Option<SegmentDescriptor> {
        let mut closed = None;
        if let Some(id) = d.closed {
            if let Some((sid, start, last_loud)) = self.open.take() {
                debug_assert_eq!(sid, id);
                let end = last_loud + self.frame_ms;
                closed = Some(self.describe(sid, start, end));
            }
        }
        match d.segment_id {
            None if d.loud => {
                self.run_start.get_or_insert(t);
            }
            None => self.run_start = None,
            Some(id) => match &mut self.open {
                Some((_, _, last)) => {
                    if d.loud {
                        *last = t;
                    }
                }
                None => {
                    let start = self.run_start.take().unwrap_or(t);
                    self.open = Some((id, start, t));
                }
            },
        }
        closed
    }

    fn describe(&mut self, segment_id: u64, t_start: Millis, t_end: Millis) -> SegmentDescriptor {
        let mut count: BTreeMap<u64, usize> = BTreeMap::new();
        for (_, ids) in self.votes.range(t_start..=t_end) {
            for id in ids {
                *count.entry(*id).or_default() += 1;
            }
        }
        self.votes = self.votes.split_off(&(t_end + 1));
        let speaker_id = count
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(id, _)| id);
        SegmentDescriptor {
            segment_id,
            t_start,
            t_end,
            speaker_id,
            sim_text: self.log.text_between(t_start, t_end),
        }
    }

    pub fn transcribe(&mut self, t: Millis, seg: &SegmentDescriptor) -> Result<Transcript, TranscribeError> {
        let (text, language) = self.source.transcribe(seg)?;
        let (text, language) = (self.translate)(text, language);
        Ok(Transcript {
            t,
            segment_id: seg.segment_id,
            t_start: seg.t_start,
            t_end: seg.t_end,
            track_id: seg.speaker_id,
            empty: text.trim().is_empty(),
            text,
            language,
        })
    }
}
