//! Perception refiners: raw sensor frames in, refined perceptions out.

pub mod assignment;
pub mod diarize;
pub mod gaze;
pub mod iab;
pub mod tracker;
pub mod transcribe;
pub mod vad;
mod workers;

pub use assignment::gated_min_cost_assignment;
pub use diarize::{DoaAssignment, Diarizer, SpeakerAssignment};
pub use gaze::{gaze_score, gaze_step, GazeEstimate, GazeFrame};
pub use iab::{iab_update, IabEstimate, IabFrame, IabParams, IabTracker};
pub use tracker::{track_step, Track, TrackSet, TrackState, Tracker};
pub use transcribe::{
    SegmentDescriptor, TranscribeError, Transcriber, Transcript, TranscriptionSource,
    UtteranceLog,
};
pub use vad::{vad_step, SpeechActivity, VadDecision, VadParams, VadState, VoiceActivityDetector};
pub use workers::{DiarizeWorker, GazeWorker, IabWorker, TrackerWorker, TranscribeWorker, VadWorker};
