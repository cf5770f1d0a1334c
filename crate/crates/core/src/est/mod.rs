//! Environment state tracker.
//!
//! Buffers refined perceptions as they arrive, aligns them at fixed
//! snapshot instants, binds tracks to persistent identities and publishes
//! one synchronous [`EnvironmentSnapshot`] per period.

mod align;
mod memory;
mod state;
mod store;
mod worker;

use serde::{Deserialize, Serialize};

use crate::bus::Millis;
use crate::geometry::{Point, Pose};
use crate::planner::ModuleFlags;

pub use align::{select_latest, AlignedSet, AlignedTrack, PerceptionBuffers, Stamped};
pub use memory::{IdentityMemory, IdentityRecord, MemoryEvent, ReidParams, TranscriptNote};
pub use state::{EstCapture, EstInput, StateTracker};
pub use store::{persist, restore, StoreError};
pub use worker::EstWorker;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PersonState {
    pub identity_id: u64,
    pub track_id: u64,
    pub azimuth: f64,
    pub distance: f64,
    /// Room-frame position estimate.
    pub position: Point,
    pub iab: f64,
    pub speaking: bool,
    pub hand_raised: bool,
    pub last_transcript: Option<TranscriptNote>,
    pub available_for_engagement: bool,
    pub first_seen: Millis,
    pub last_seen: Millis,
    pub engagements: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotStatus {
    pub pose: Pose,
    #[serde(flatten)]
    pub flags: ModuleFlags,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvironmentSnapshot {
    pub t: Millis,
    /// Sorted by identity.
    pub persons: Vec<PersonState>,
    pub robot: RobotStatus,
    pub active_speaker: Option<u64>,
}

impl EnvironmentSnapshot {
    pub fn person(&self, identity: u64) -> Option<&PersonState> {
        self.persons.iter().find(|p| p.identity_id == identity)
    }
}
