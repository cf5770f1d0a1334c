//! Conversation cycle: greet, listen, think, speak, and close.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dialogue::{DialogueBackend, DialogueError};
use super::{ConversationEvent, ConversationPhase, SpeakingFlags, TerminationCause};
use crate::bus::Millis;
use crate::config::SpeakingConfig;
use crate::est::EnvironmentSnapshot;
use crate::simworld::{RobotSpeech, SpeechKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Robot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub t: Millis,
}

impl Turn {
    pub fn is_user(&self) -> bool {
        self.speaker == Speaker::User
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConversationError {
    #[error("cannot start a conversation with {requested} while in {phase:?} with {partner:?}")]
    StartWhileBusy {
        requested: u64,
        phase: ConversationPhase,
        partner: Option<u64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConversationOutput {
    pub speech: Vec<RobotSpeech>,
    pub events: Vec<ConversationEvent>,
}

impl ConversationOutput {
    fn merge(&mut self, other: ConversationOutput) {
        self.speech.extend(other.speech);
        self.events.extend(other.events);
    }
}

/// Case-insensitive whole-word match against the keyword set.
pub fn keyword_hit(text: &str, keywords: &[String]) -> bool {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .any(|w| keywords.iter().any(|k| k.eq_ignore_ascii_case(w)))
}

pub struct Conversation {
    cfg: SpeakingConfig,
    backend: Box<dyn DialogueBackend>,
    phase: ConversationPhase,
    partner: Option<u64>,
    last_user_activity: Millis,
    turns: Vec<Turn>,
    phase_until: Millis,
    closing: Option<(TerminationCause, Millis)>,
    absent: u32,
    last_segment: Option<u64>,
}

impl Conversation {
    pub fn new(cfg: SpeakingConfig, backend: Box<dyn DialogueBackend>) -> Self {
        Self {
            cfg,
            backend,
            phase: ConversationPhase::Idle,
            partner: None,
            last_user_activity: 0,
            turns: Vec::new(),
            phase_until: 0,
            closing: None,
            absent: 0,
            last_segment: None,
        }
    }

    pub fn phase(&self) -> ConversationPhase {
        self.phase
    }

    pub fn partner(&self) -> Option<u64> {
        self.partner
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn last_user_activity(&self) -> Millis {
        self.last_user_activity
    }

    pub fn flags(&self, now: Millis) -> SpeakingFlags {
        SpeakingFlags::of(now, self.phase)
    }

    pub fn speech_duration(&self, text: &str) -> Millis {
        text.chars().count() as Millis * self.cfg.ms_per_char
    }

    fn say(&mut self, now: Millis, text: String, kind: SpeechKind) -> RobotSpeech {
        let duration_ms = self.speech_duration(&text);
        self.phase_until = now + duration_ms;
        self.turns.push(Turn {
            speaker: Speaker::Robot,
            text: text.clone(),
            t: now,
        });
        RobotSpeech {
            t: now,
            text,
            kind,
            duration_ms,
            partner: self.partner,
        }
    }

    fn listen(&mut self, now: Millis) {
        self.phase = ConversationPhase::Listening;
        // Handing over the floor reopens the response window.
        self.last_user_activity = now;
    }

    /// Greets `partner`. `seen_segment` is the newest transcript already
    /// known for them, so older speech is not taken as a reply.
    pub fn start(&mut self, now: Millis, partner: u64, seen_segment: Option<u64>) -> Result<ConversationOutput, ConversationError> {
        if self.phase != ConversationPhase::Idle {
            return Err(ConversationError::StartWhileBusy {
                requested: partner,
                phase: self.phase,
                partner: self.partner,
            });
        }
        self.partner = Some(partner);
        self.turns.clear();
        self.closing = None;
        self.absent = 0;
        self.last_segment = seen_segment;
        self.last_user_activity = now;
        self.phase = ConversationPhase::Greeting;
        let greeting = self.cfg.greeting.clone();
        let speech = self.say(now, greeting, SpeechKind::Greeting);
        Ok(ConversationOutput {
            speech: vec![speech],
            events: vec![ConversationEvent::Started { t: now, partner }],
        })
    }

    /// Ends the conversation: records the cause and speaks the closing
    /// line. Later causes are ignored.
    pub fn terminate(&mut self, now: Millis, cause: TerminationCause) -> ConversationOutput {
        if self.phase == ConversationPhase::Idle || self.closing.is_some() {
            return ConversationOutput::default();
        }
        self.backend.cancel();
        self.closing = Some((cause, now));
        self.phase = ConversationPhase::Speaking;
        let (text, kind) = match cause {
            TerminationCause::BackendTimeout => (self.cfg.apology.clone(), SpeechKind::Apology),
            _ => (self.cfg.farewell.clone(), SpeechKind::Farewell),
        };
        let speech = self.say(now, text, kind);
        ConversationOutput {
            speech: vec![speech],
            events: Vec::new(),
        }
    }

    pub fn stop(&mut self, now: Millis) -> ConversationOutput {
        self.terminate(now, TerminationCause::Stopped)
    }

    /// A user utterance attributed to the partner.
    pub fn user_text(&mut self, now: Millis, text: &str) -> ConversationOutput {
        if self.phase != ConversationPhase::Listening || self.closing.is_some() {
            return ConversationOutput::default();
        }
        let partner = self.partner.expect("listening has a partner");
        self.last_user_activity = now;
        self.turns.push(Turn {
            speaker: Speaker::User,
            text: text.to_string(),
            t: now,
        });
        let mut out = ConversationOutput {
            speech: Vec::new(),
            events: vec![ConversationEvent::UserTurn {
                t: now,
                partner,
                text: text.to_string(),
            }],
        };
        if keyword_hit(text, &self.cfg.keywords) {
            out.merge(self.terminate(now, TerminationCause::Keyword));
        } else {
            self.phase = ConversationPhase::Thinking;
            self.backend.request(now, &self.turns, partner);
        }
        out
    }

    /// New partner transcripts and partner presence from a snapshot.
    pub fn observe(&mut self, now: Millis, snap: &EnvironmentSnapshot) -> ConversationOutput {
        let Some(partner) = self.partner.filter(|_| self.phase != ConversationPhase::Idle) else {
            return ConversationOutput::default();
        };
        let mut out = ConversationOutput::default();
        match snap.person(partner) {
            Some(p) => {
                self.absent = 0;
                if let Some(note) = &p.last_transcript {
                    if self.last_segment.is_none_or(|s| note.segment_id > s) {
                        self.last_segment = Some(note.segment_id);
                        if !note.text.trim().is_empty() {
                            let text = note.text.clone();
                            out.merge(self.user_text(now, &text));
                        }
                    }
                }
            }
            None => {
                self.absent += 1;
                if self.absent >= self.cfg.disengage_snapshots {
                    out.merge(self.terminate(now, TerminationCause::Disengaged));
                }
            }
        }
        out
    }

    /// Clock-driven transitions: end of speech, response timeout, backend
    /// replies.
    pub fn tick(&mut self, now: Millis) -> ConversationOutput {
        let mut out = ConversationOutput::default();
        match self.phase {
            ConversationPhase::Idle => {}
            ConversationPhase::Greeting => {
                if now >= self.phase_until {
                    self.listen(now);
                }
            }
            ConversationPhase::Listening => {
                if now - self.last_user_activity >= self.cfg.response_timeout_ms {
                    out.merge(self.terminate(now, TerminationCause::Timeout));
                }
            }
            ConversationPhase::Thinking => match self.backend.poll(now) {
                Some(Ok(reply)) => {
                    self.phase = ConversationPhase::Speaking;
                    out.speech.push(self.say(now, reply, SpeechKind::Reply));
                }
                Some(Err(DialogueError::BackendTimeout)) | Some(Err(DialogueError::Backend(_))) => {
                    out.merge(self.terminate(now, TerminationCause::BackendTimeout));
                }
                None => {}
            },
            ConversationPhase::Speaking => {
                if now >= self.phase_until {
                    match self.closing.take() {
                        Some((cause, terminated_at)) => {
                            let partner = self.partner.take().expect("closing has a partner");
                            self.phase = ConversationPhase::Idle;
                            out.events.push(ConversationEvent::Ended {
                                t: now,
                                partner,
                                cause,
                                terminated_at,
                                last_user_activity: self.last_user_activity,
                            });
                        }
                        None => self.listen(now),
                    }
                }
            }
        }
        out
    }
}
