//! Bus payloads and the topic table.

use serde::{Deserialize, Serialize};

use crate::actions::{ConversationEvent, MoveFault, MovingFlags, SpeakingFlags};
use crate::bus::{Bus, BusError, TopicSpec};
use crate::config::BusConfig;
use crate::est::EnvironmentSnapshot;
use crate::planner::{EngagementEvent, GlobalBehavior, LocalCommand};
use crate::refiners::{GazeFrame, IabFrame, SpeakerAssignment, SpeechActivity, TrackSet, Transcript};
use crate::simworld::{AudioFrame, CameraFrame, GroundTruth, Odometry, RobotSpeech, VelocityCommand};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum Message {
    Camera(CameraFrame),
    Audio(AudioFrame),
    Odometry(Odometry),
    Truth(GroundTruth),
    Vad(SpeechActivity),
    Tracks(TrackSet),
    Gaze(GazeFrame),
    Iab(IabFrame),
    Speakers(SpeakerAssignment),
    Transcript(Transcript),
    Snapshot(EnvironmentSnapshot),
    Behavior(GlobalBehavior),
    Command(LocalCommand),
    Engagement(EngagementEvent),
    MovingFlags(MovingFlags),
    SpeakingFlags(SpeakingFlags),
    Velocity(VelocityCommand),
    Speech(RobotSpeech),
    Conversation(ConversationEvent),
    MoveFault(MoveFault),
}

pub type MessageBus = Bus<Message>;

pub mod topics {
    pub const CAMERA: &str = "raw/camera";
    pub const AUDIO: &str = "raw/audio";
    pub const ODOMETRY: &str = "raw/odometry";
    pub const TRUTH: &str = "sim/truth";
    pub const VAD: &str = "refined/vad";
    pub const TRACKS: &str = "refined/tracks";
    pub const GAZE: &str = "refined/gaze";
    pub const IAB: &str = "refined/iab";
    pub const SPEAKERS: &str = "refined/speaker";
    pub const TRANSCRIPT: &str = "refined/transcript";
    pub const SNAPSHOT: &str = "est/snapshot";
    pub const BEHAVIOR: &str = "planner/behavior";
    pub const COMMAND: &str = "planner/command";
    pub const ENGAGEMENT: &str = "planner/engagement";
    pub const MOVING_FLAGS: &str = "flags/moving";
    pub const SPEAKING_FLAGS: &str = "flags/speaking";
    pub const MOVE_FAULT: &str = "flags/move_fault";
    pub const VELOCITY: &str = "act/velocity";
    pub const SPEECH: &str = "act/speech";
    pub const CONVERSATION: &str = "act/conversation";
}

pub fn topic_table(cfg: &BusConfig) -> Vec<TopicSpec> {
    use topics::*;
    let raw = |n: &str| TopicSpec::stream(n, cfg.raw_capacity);
    let refined = |n: &str| TopicSpec::stream(n, cfg.refined_capacity);
    let event = |n: &str| TopicSpec::stream(n, cfg.event_capacity);
    vec![
        raw(CAMERA),
        raw(AUDIO),
        raw(ODOMETRY),
        raw(TRUTH),
        refined(VAD),
        refined(TRACKS),
        refined(GAZE),
        refined(IAB),
        refined(SPEAKERS),
        refined(TRANSCRIPT),
        TopicSpec::latest(SNAPSHOT),
        TopicSpec::latest(BEHAVIOR),
        event(COMMAND),
        event(ENGAGEMENT),
        TopicSpec::latest(MOVING_FLAGS),
        TopicSpec::latest(SPEAKING_FLAGS),
        event(MOVE_FAULT),
        TopicSpec::latest(VELOCITY),
        event(SPEECH),
        event(CONVERSATION),
    ]
}

/// A bus with every pipeline topic registered.
pub fn pipeline_bus(cfg: &BusConfig) -> Result<MessageBus, BusError> {
    let bus = MessageBus::new();
    for spec in topic_table(cfg) {
        bus.register(spec)?;
    }
    Ok(bus)
}
