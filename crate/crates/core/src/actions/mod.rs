//! Action modules: moving (approach and return) and speaking (the
//! conversation cycle), each reporting feedback flags.

mod conversation;
mod dialogue;
mod moving;
mod workers;

use serde::{Deserialize, Serialize};

use crate::bus::Millis;

pub use conversation::{keyword_hit, Conversation, ConversationError, ConversationOutput, Turn};
pub use dialogue::{DialogueBackend, DialogueError, HttpDialogue, ScriptedDialogue};
pub use moving::{face_control, goto_control, ControlParams, MoveError, MoveState, Mover, MoverOutput};
pub use workers::{MovingWorker, SpeakingWorker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MoveMode {
    IdleAtHome,
    Approaching { identity: u64 },
    /// Arrived at a person and facing them.
    AtPerson { identity: u64 },
    Returning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovingFlags {
    pub t: Millis,
    pub at_standby: bool,
    pub navigating: bool,
    #[serde(flatten)]
    pub mode: MoveMode,
}

impl MovingFlags {
    pub fn of(t: Millis, mode: MoveMode) -> Self {
        Self {
            t,
            at_standby: mode == MoveMode::IdleAtHome,
            navigating: matches!(mode, MoveMode::Approaching { .. } | MoveMode::Returning),
            mode,
        }
    }

    pub fn consistent(&self) -> bool {
        !(self.navigating && self.at_standby)
            && self.at_standby == (self.mode == MoveMode::IdleAtHome)
            && self.navigating == matches!(self.mode, MoveMode::Approaching { .. } | MoveMode::Returning)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversationPhase {
    Idle,
    Greeting,
    Listening,
    Thinking,
    Speaking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakingFlags {
    pub t: Millis,
    pub is_speaking: bool,
    pub in_conversation: bool,
    pub phase: ConversationPhase,
}

impl SpeakingFlags {
    pub fn of(t: Millis, phase: ConversationPhase) -> Self {
        Self {
            t,
            is_speaking: phase == ConversationPhase::Speaking,
            in_conversation: phase != ConversationPhase::Idle,
            phase,
        }
    }

    pub fn consistent(&self) -> bool {
        self.is_speaking == (self.phase == ConversationPhase::Speaking)
            && self.in_conversation == (self.phase != ConversationPhase::Idle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    Keyword,
    Timeout,
    Disengaged,
    BackendTimeout,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ConversationEvent {
    Started {
        t: Millis,
        partner: u64,
    },
    UserTurn {
        t: Millis,
        partner: u64,
        text: String,
    },
    /// The conversation is back to idle. `terminated_at` is when the cause
    /// fired; the closing line was spoken in between.
    Ended {
        t: Millis,
        partner: u64,
        cause: TerminationCause,
        terminated_at: Millis,
        last_user_activity: Millis,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fault", rename_all = "snake_case")]
pub enum MoveFault {
    TargetLost { t: Millis, identity: u64 },
}
